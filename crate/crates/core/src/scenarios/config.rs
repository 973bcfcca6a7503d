use std::f64::consts::PI;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::stencil::{Grid1D, Layout, Reconstruction};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioId {
    /// `u_t + Σ u_{x_m} = 0` on `[-π, π]^4`.
    Advection4d,
    /// Constant diagonal advection of a cross-shaped indicator in 2D.
    AdvectionCross,
    /// Solid-body rotation `u_t - y u_x + x u_y = 0`.
    Rotation,
    /// Time-reversing swirl that returns to the initial state at `t = T`.
    Swirl,
    /// 1D1V transport with a prescribed field `E = sin(πx)/2`.
    LinearVp,
    /// 1D1V Vlasov-Poisson two-stream instability.
    TwoStream,
    /// 2D2V Vlasov-Poisson, weak Landau damping.
    LandauWeak2d2v,
    /// 2D2V Vlasov-Poisson, strong Landau damping.
    LandauStrong2d2v,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 8] = [
        ScenarioId::Advection4d,
        ScenarioId::AdvectionCross,
        ScenarioId::Rotation,
        ScenarioId::Swirl,
        ScenarioId::LinearVp,
        ScenarioId::TwoStream,
        ScenarioId::LandauWeak2d2v,
        ScenarioId::LandauStrong2d2v,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Advection4d => "advection4d",
            ScenarioId::AdvectionCross => "advection-cross",
            ScenarioId::Rotation => "rotation",
            ScenarioId::Swirl => "swirl",
            ScenarioId::LinearVp => "linear-vp",
            ScenarioId::TwoStream => "two-stream",
            ScenarioId::LandauWeak2d2v => "landau-weak-2d2v",
            ScenarioId::LandauStrong2d2v => "landau-strong-2d2v",
        }
    }

    /// Number of grid dimensions.
    pub fn dims(self) -> usize {
        match self {
            ScenarioId::Advection4d | ScenarioId::LandauWeak2d2v | ScenarioId::LandauStrong2d2v => 4,
            _ => 2,
        }
    }

    /// Self-consistent Vlasov-Poisson problem.
    pub fn is_vlasov_poisson(self) -> bool {
        matches!(
            self,
            ScenarioId::TwoStream | ScenarioId::LandauWeak2d2v | ScenarioId::LandauStrong2d2v
        )
    }

    /// Dimensions holding a velocity coordinate.
    pub fn is_velocity_dim(self, dim: usize) -> bool {
        match self {
            ScenarioId::LinearVp | ScenarioId::TwoStream => dim == 1,
            ScenarioId::LandauWeak2d2v | ScenarioId::LandauStrong2d2v => dim >= 2,
            _ => false,
        }
    }
}

impl FromStr for ScenarioId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario '{s}'")))
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Evolve the solution itself.
    Solution,
    /// Evolve the backward characteristic maps and evaluate the initial data at them.
    Flowmap,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "solution" => Ok(Method::Solution),
            "flowmap" | "flow-map" => Ok(Method::Flowmap),
            _ => Err(Error::InvalidInput(format!("unknown method '{s}'"))),
        }
    }
}

/// Initial profile for the linear 2D scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialShape {
    Smooth,
    Cross,
}

impl FromStr for InitialShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smooth" | "gaussian" => Ok(InitialShape::Smooth),
            "cross" => Ok(InitialShape::Cross),
            _ => Err(Error::InvalidInput(format!("unknown initial shape '{s}'"))),
        }
    }
}

/// Everything needed to run one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioId,
    /// Points per dimension.
    pub n: Vec<usize>,
    /// `[lo, hi)` per dimension.
    pub bounds: Vec<(f64, f64)>,
    pub eps: f64,
    pub r_max: usize,
    pub cfl: f64,
    pub t_end: f64,
    pub integrator: Integrator,
    pub recon: Reconstruction,
    pub method: Method,
    pub shape: InitialShape,
    /// Perturbation amplitude (two-stream, Landau).
    pub alpha: f64,
    /// Perturbation wave number (two-stream, Landau).
    pub k: f64,
    /// Cross arms: half-width and half-length.
    pub cross: (f64, f64),
    /// Swirl period `T`.
    pub swirl_period: f64,
    /// Flip velocities at this time (time-reversibility runs).
    pub reverse_at: Option<f64>,
    /// Record diagnostics every this many steps (the final step is always recorded).
    pub diag_every: usize,
    /// Write a snapshot every this many steps; 0 disables periodic snapshots.
    pub snap_every: usize,
    pub out: Option<PathBuf>,
    /// Recorded in the manifest; the scenarios themselves are deterministic.
    pub seed: u64,
}

impl ScenarioConfig {
    /// Default configuration of a scenario.
    pub fn new(scenario: ScenarioId) -> Self {
        let pi2 = (-PI, PI);
        let base = ScenarioConfig {
            scenario,
            n: vec![64, 64],
            bounds: vec![pi2, pi2],
            eps: 1e-6,
            r_max: 256,
            cfl: 0.1,
            t_end: 2.0 * PI,
            integrator: Integrator::Ssp2,
            recon: Reconstruction::Linear5,
            method: Method::Solution,
            shape: InitialShape::Smooth,
            alpha: 0.0,
            k: 0.5,
            cross: (0.3, 1.5),
            swirl_period: 1.5,
            reverse_at: None,
            diag_every: 1,
            snap_every: 0,
            out: None,
            seed: 0,
        };
        match scenario {
            ScenarioId::Advection4d => ScenarioConfig {
                n: vec![16; 4],
                bounds: vec![pi2; 4],
                r_max: 64,
                ..base
            },
            ScenarioId::AdvectionCross => ScenarioConfig {
                n: vec![128, 128],
                eps: 1e-5,
                recon: Reconstruction::Weno5,
                shape: InitialShape::Cross,
                ..base
            },
            ScenarioId::Rotation => ScenarioConfig {
                eps: 1e-7,
                // Δt = Δx / 20 at the corner speed π
                cfl: PI / 20.0,
                ..base
            },
            ScenarioId::Swirl => ScenarioConfig {
                eps: 1e-5,
                t_end: 1.5,
                ..base
            },
            ScenarioId::LinearVp => ScenarioConfig {
                bounds: vec![(-1.0, 1.0), (-1.0, 1.0)],
                eps: 1e-7,
                t_end: 0.75,
                ..base
            },
            ScenarioId::TwoStream => ScenarioConfig {
                n: vec![128, 256],
                bounds: vec![(0.0, 4.0 * PI), (-6.0, 6.0)],
                t_end: 40.0,
                recon: Reconstruction::Weno5,
                alpha: 0.01,
                ..base
            },
            ScenarioId::LandauWeak2d2v => ScenarioConfig {
                n: vec![16, 16, 32, 32],
                bounds: vec![(0.0, 4.0 * PI), (0.0, 4.0 * PI), (-6.0, 6.0), (-6.0, 6.0)],
                t_end: 40.0,
                alpha: 0.01,
                ..base
            },
            ScenarioId::LandauStrong2d2v => ScenarioConfig {
                n: vec![32, 32, 64, 64],
                bounds: vec![(0.0, 4.0 * PI), (0.0, 4.0 * PI), (-6.0, 6.0), (-6.0, 6.0)],
                eps: 1e-3,
                r_max: 32,
                t_end: 30.0,
                alpha: 0.5,
                ..base
            },
        }
    }

    /// Set the resolution from 1 value (all dimensions), 2 values (spatial
    /// and velocity halves of a 2D2V problem) or one value per dimension.
    pub fn set_n(&mut self, n: &[usize]) -> Result<()> {
        let d = self.scenario.dims();
        self.n = match n.len() {
            1 => vec![n[0]; d],
            2 if d == 4 => vec![n[0], n[0], n[1], n[1]],
            l if l == d => n.to_vec(),
            l => {
                return Err(Error::InvalidInput(format!(
                    "{} takes 1{} or {d} resolutions, got {l}",
                    self.scenario,
                    if d == 4 { ", 2" } else { "" }
                )))
            }
        };
        Ok(())
    }

    pub fn with_n(mut self, n: &[usize]) -> Result<Self> {
        self.set_n(n)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.scenario.dims();
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n.len() != d || self.bounds.len() != d {
            return bad(format!("{} needs {d} resolutions and bounds", self.scenario));
        }
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return bad(format!("eps must be >= 0, got {}", self.eps));
        }
        if self.r_max == 0 {
            return bad("r_max must be positive".into());
        }
        if !(self.cfl > 0.0) || !self.cfl.is_finite() {
            return bad(format!("cfl must be > 0, got {}", self.cfl));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        if self.diag_every == 0 {
            return bad("diagnostic cadence must be positive".into());
        }
        if self.method == Method::Flowmap && d != 2 {
            return bad(format!(
                "flow-map method is only available for 2D scenarios, not {}",
                self.scenario
            ));
        }
        if self.method == Method::Flowmap && self.recon != Reconstruction::Linear5 {
            return bad("flow-map method requires the linear5 reconstruction".into());
        }
        if let Some(t) = self.reverse_at {
            if !(t > 0.0 && t < self.t_end) || !self.scenario.is_vlasov_poisson() {
                return bad("velocity reversal needs a Vlasov-Poisson scenario and 0 < t < t_end".into());
            }
        }
        for (dim, &(lo, hi)) in self.bounds.iter().enumerate() {
            if self.scenario.is_velocity_dim(dim) && (lo + hi).abs() > 1e-12 {
                return bad("velocity intervals must be symmetric about zero".into());
            }
        }
        self.grids().map(|_| ())
    }

    pub fn grids(&self) -> Result<Vec<Grid1D>> {
        self.n
            .iter()
            .zip(&self.bounds)
            .enumerate()
            .map(|(dim, (&n, &(lo, hi)))| {
                let layout = if self.scenario.is_velocity_dim(dim) {
                    Layout::CellCentered
                } else {
                    Layout::Nodes
                };
                Grid1D::new(n, lo, hi, layout)
            })
            .collect()
    }
}
