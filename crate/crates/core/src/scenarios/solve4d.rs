//! Four-dimensional transport in hierarchical Tucker form.

use std::sync::Arc;

use super::config::{ScenarioConfig, ScenarioId};
use crate::error::{Error, Result};
use crate::fields::{poisson_2d_lrcg, split_field_2d, CgOptions, FieldState2D};
use crate::ht::{truncate_sum, HtTensor};
use crate::integrator::Evolution;
use crate::lowrank::{DimAction, LowRank2D};
use crate::par;
use crate::stencil::{split_speed, Bias, Boundary, Grid1D, Reconstruction, StencilOperator};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model4D {
    /// `u_t + Σ_m u_{x_m} = 0`
    Advection,
    /// `f_t + v · ∇_x f + E · ∇_v f = 0` with a self-consistent `E(x)`.
    VlasovPoisson,
}

/// One right-hand side term before recompression.
enum Term {
    /// `D_bias` on `leaf`, optionally after multiplying leaf `mul.0` by `mul.1`.
    Transport {
        leaf: usize,
        bias: Bias,
        mul: Option<(usize, Arc<[f64]>)>,
    },
    /// Multiply by a field of `(x1, x2)`, then `D_bias` on `leaf`.
    Field { leaf: usize, bias: Bias, e: LowRank2D },
}

/// Evolves a four-dimensional tensor with a fixed accuracy and rank cap.
#[derive(Clone, Debug)]
pub struct HtTransport {
    model: Model4D,
    grids: Vec<Grid1D>,
    /// `[leaf][bias]`
    ops: Vec<[Arc<StencilOperator>; 2]>,
    eps: f64,
    r_max: usize,
    cg: CgOptions,
    last_field: Option<FieldState2D>,
}

impl HtTransport {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let model = match cfg.scenario {
            ScenarioId::Advection4d => Model4D::Advection,
            ScenarioId::LandauWeak2d2v | ScenarioId::LandauStrong2d2v => Model4D::VlasovPoisson,
            id => return Err(Error::Unsupported(format!("{id} is not a 4D scenario"))),
        };
        let grids = cfg.grids()?;
        Ok(Self::with_parts(model, grids, cfg.recon, cfg.eps, cfg.r_max))
    }

    pub fn with_parts(model: Model4D, grids: Vec<Grid1D>, recon: Reconstruction, eps: f64, r_max: usize) -> Self {
        let ops = grids
            .iter()
            .map(|g| [Bias::Left, Bias::Right].map(|b| Arc::new(StencilOperator::new(g, b, recon, Boundary::Periodic))))
            .collect();
        Self {
            model,
            grids,
            ops,
            eps,
            r_max,
            cg: CgOptions::for_eps(eps),
            last_field: None,
        }
    }

    pub fn grids(&self) -> &[Grid1D] {
        &self.grids
    }

    pub fn cg_options_mut(&mut self) -> &mut CgOptions {
        &mut self.cg
    }

    /// Field from the most recent right-hand side evaluation.
    pub fn last_field(&self) -> Option<&FieldState2D> {
        self.last_field.as_ref()
    }

    /// Charge density `ρ(x1, x2) = Σ f Δv1 Δv2`.
    pub fn density(&self, f: &HtTensor) -> Result<LowRank2D> {
        let w3 = vec![self.grids[2].h(); self.grids[2].n()];
        let w4 = vec![self.grids[3].h(); self.grids[3].n()];
        f.contract_34(&w3, &w4)
    }

    /// Self-consistent field of `f`.
    pub fn field(&self, f: &HtTensor) -> Result<FieldState2D> {
        let rho = self.density(f)?;
        poisson_2d_lrcg(&rho, (self.grids[0].length(), self.grids[1].length()), &self.cg)
    }

    fn op(&self, leaf: usize, bias: Bias) -> DimAction {
        let b = match bias {
            Bias::Left => 0,
            Bias::Right => 1,
        };
        DimAction::Derivative(self.ops[leaf][b].clone())
    }

    fn terms(&mut self, f: &HtTensor) -> Result<Vec<Term>> {
        match self.model {
            Model4D::Advection => Ok((0..4)
                .map(|leaf| Term::Transport {
                    leaf,
                    bias: Bias::Left,
                    mul: None,
                })
                .collect()),
            Model4D::VlasovPoisson => {
                let mut out = Vec::with_capacity(8);
                for d in 0..2 {
                    let (vp, vm) = split_speed(&self.grids[d + 2].points());
                    out.push(Term::Transport {
                        leaf: d,
                        bias: Bias::Left,
                        mul: Some((d + 2, vp.into())),
                    });
                    out.push(Term::Transport {
                        leaf: d,
                        bias: Bias::Right,
                        mul: Some((d + 2, vm.into())),
                    });
                }
                let fs = self.field(f)?;
                for (d, e) in [&fs.e1, &fs.e2].into_iter().enumerate() {
                    let (ep, em, alpha) = split_field_2d(e)?;
                    if alpha == 0.0 {
                        continue;
                    }
                    out.push(Term::Field {
                        leaf: d + 2,
                        bias: Bias::Left,
                        e: ep,
                    });
                    out.push(Term::Field {
                        leaf: d + 2,
                        bias: Bias::Right,
                        e: em,
                    });
                }
                self.last_field = Some(fs);
                Ok(out)
            }
        }
    }

    fn apply_term(&self, f: &HtTensor, t: &Term) -> Result<HtTensor> {
        match t {
            Term::Transport { leaf, bias, mul } => {
                let g = match mul {
                    Some((m, c)) => f.apply_leaf(*m, &DimAction::Multiply(c.clone()))?,
                    None => f.clone(),
                };
                g.apply_leaf(*leaf, &self.op(*leaf, *bias))
            }
            Term::Field { leaf, bias, e } => f.hadamard_x12(e)?.apply_leaf(*leaf, &self.op(*leaf, *bias)),
        }
    }

    /// `F(f)` without recompression, as a list of unit-weight terms to be negated.
    pub fn rhs_terms(&mut self, f: &HtTensor) -> Result<Vec<HtTensor>> {
        let terms = self.terms(f)?;
        let work = f.dims().iter().sum::<usize>() * f.ranks().max().pow(2) * 20;
        par::map_range(terms.len(), work, |k| self.apply_term(f, &terms[k]))
            .into_iter()
            .collect()
    }
}

impl Evolution for HtTransport {
    type State = HtTensor;

    fn combine(&mut self, states: &[(f64, &HtTensor)], rhs: &[(f64, &HtTensor, f64)]) -> Result<HtTensor> {
        let mut owned: Vec<(f64, HtTensor)> = Vec::new();
        for &(c, s, _) in rhs {
            for g in self.rhs_terms(s)? {
                owned.push((-c, g));
            }
        }
        let mut all: Vec<(f64, &HtTensor)> = states.to_vec();
        all.extend(owned.iter().map(|(c, g)| (*c, g)));
        let out = truncate_sum(&all, self.eps, self.r_max)?;
        if !out.is_finite() {
            return Err(Error::NonFinite("tensor update"));
        }
        Ok(out)
    }
}
