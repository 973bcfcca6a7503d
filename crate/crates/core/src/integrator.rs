//! Explicit multistep time integration with a compressed state.
//!
//! Each scheme writes the new state as `sum_k a_k S^{n-k} + dt sum_k b_k F(S^{n-k})`.
//! The whole combination is handed to an [`Evolution`] implementation, which
//! assembles the terms in factored form and truncates once.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Forward Euler.
    Fe,
    /// Second-order SSP three-step method.
    Ssp2,
    /// Third-order SSP four-step method.
    Ssp3,
}

impl std::str::FromStr for Integrator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fe" | "euler" => Ok(Self::Fe),
            "ssp2" => Ok(Self::Ssp2),
            "ssp3" => Ok(Self::Ssp3),
            _ => Err(Error::InvalidInput(format!("unknown integrator '{s}'"))),
        }
    }
}

/// Coefficients `(lag, weight)` of a multistep scheme.
#[derive(Clone, Copy, Debug)]
pub struct Scheme {
    pub states: &'static [(usize, f64)],
    pub rhs: &'static [(usize, f64)],
}

impl Integrator {
    /// Number of stored states the scheme reads.
    pub fn history_len(self) -> usize {
        match self {
            Integrator::Fe => 1,
            Integrator::Ssp2 => 3,
            Integrator::Ssp3 => 4,
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            Integrator::Fe => Scheme {
                states: &[(0, 1.0)],
                rhs: &[(0, 1.0)],
            },
            Integrator::Ssp2 => Scheme {
                states: &[(0, 0.75), (2, 0.25)],
                rhs: &[(0, 1.5)],
            },
            Integrator::Ssp3 => Scheme {
                states: &[(0, 16.0 / 27.0), (3, 11.0 / 27.0)],
                rhs: &[(0, 16.0 / 9.0), (3, 4.0 / 9.0)],
            },
        }
    }
}

/// A problem whose state can be advanced by one compressed linear combination.
pub trait Evolution {
    type State: Clone;

    /// Return the truncation of
    /// `sum (a, S) a S + sum (c, S, t) c F(S, t)`
    /// where `F` is the right-hand side `dS/dt = F(S, t)`.
    fn combine(&mut self, states: &[(f64, &Self::State)], rhs: &[(f64, &Self::State, f64)]) -> Result<Self::State>;
}

/// One step of `integrator` from a history ordered oldest first; entries are
/// `(time, state)` at uniform spacing `dt`.
pub fn step<E: Evolution>(
    integrator: Integrator,
    history: &[(f64, E::State)],
    dt: f64,
    ev: &mut E,
) -> Result<E::State> {
    let needed = integrator.history_len();
    if history.len() < needed {
        return Err(Error::History {
            needed,
            found: history.len(),
        });
    }
    let last = history.len() - 1;
    let scheme = integrator.scheme();
    let states: Vec<(f64, &E::State)> = scheme
        .states
        .iter()
        .map(|&(lag, a)| (a, &history[last - lag].1))
        .collect();
    let rhs: Vec<(f64, &E::State, f64)> = scheme
        .rhs
        .iter()
        .map(|&(lag, b)| {
            let (t, s) = &history[last - lag];
            (b * dt, s, *t)
        })
        .collect();
    ev.combine(&states, &rhs)
}

/// Drives a multistep scheme, filling the start-up history with forward
/// Euler sub-steps of `dt / substeps`.
#[derive(Clone, Debug)]
pub struct Multistep<S> {
    integrator: Integrator,
    dt: f64,
    substeps: usize,
    history: VecDeque<(f64, S)>,
    steps_taken: usize,
}

impl<S: Clone> Multistep<S> {
    pub fn new(integrator: Integrator, dt: f64, t0: f64, initial: S) -> Self {
        let mut history = VecDeque::with_capacity(integrator.history_len());
        history.push_back((t0, initial));
        Self {
            integrator,
            dt,
            substeps: 10,
            history,
            steps_taken: 0,
        }
    }

    /// Start from a full history `(time, state)`, oldest first.
    pub fn from_history(integrator: Integrator, dt: f64, history: Vec<(f64, S)>) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::History { needed: 1, found: 0 });
        }
        Ok(Self {
            integrator,
            dt,
            substeps: 10,
            history: history.into(),
            steps_taken: 0,
        })
    }

    /// Number of forward Euler sub-steps per start-up step.
    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps.max(1);
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.history.back().expect("history is never empty").0
    }

    pub fn current(&self) -> &S {
        &self.history.back().expect("history is never empty").1
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Advance by one step of size `dt`.
    pub fn step<E: Evolution<State = S>>(&mut self, ev: &mut E) -> Result<()> {
        let needed = self.integrator.history_len();
        let next = if self.history.len() < needed {
            let h = self.dt / self.substeps as f64;
            let (mut t, mut s) = self.history.back().expect("nonempty").clone();
            for _ in 0..self.substeps {
                s = ev.combine(&[(1.0, &s)], &[(h, &s, t)])?;
                t += h;
            }
            s
        } else {
            let hist: Vec<(f64, S)> = self.history.iter().cloned().collect();
            step(self.integrator, &hist, self.dt, ev)?
        };
        let t = self.time() + self.dt;
        self.history.push_back((t, next));
        while self.history.len() > needed {
            self.history.pop_front();
        }
        self.steps_taken += 1;
        Ok(())
    }
}

/// Number of uniform steps to cover `t_end` with steps no larger than `dt_max`,
/// and the resulting step size.
pub fn uniform_steps(t_end: f64, dt_max: f64) -> Result<(usize, f64)> {
    if !(t_end >= 0.0) || !(dt_max > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need t_end >= 0 and dt > 0, got t_end={t_end}, dt={dt_max}"
        )));
    }
    if t_end == 0.0 {
        return Ok((0, dt_max));
    }
    let n = (t_end / dt_max * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    Ok((n, t_end / n as f64))
}
