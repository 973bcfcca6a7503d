//! Initial data, velocity fields and reference solutions of the scenarios.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::config::{InitialShape, ScenarioConfig, ScenarioId};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::ht::HtTensor;
use crate::lowrank::LowRank2D;
use crate::stencil::Grid1D;

/// Map `x` into `[lo, lo + len)`.
pub fn wrap(x: f64, lo: f64, len: f64) -> f64 {
    lo + (x - lo).rem_euclid(len)
}

/// Speed along `dim` of the form `scale * same(x_dim) * cross(x_other)`.
#[derive(Clone, Debug)]
pub struct SeparableSpeed {
    pub dim: usize,
    pub same: Vec<f64>,
    pub cross: Vec<f64>,
    pub scale: f64,
}

/// Two-dimensional velocity fields.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Velocity2D {
    Constant {
        a: f64,
        b: f64,
    },
    /// `(-y, x)`
    Rotation,
    /// `(-cos²(x/2) sin(y) g(t), sin(x) cos²(y/2) g(t))`, `g(t) = π cos(πt/T)`
    Swirl {
        period: f64,
    },
    /// `(v, sin(πx)/2)`
    LinearVp,
    /// `(v, E(x))` with `E` from the Poisson equation.
    Vlasov,
}

impl Velocity2D {
    pub fn for_scenario(id: ScenarioId, cfg: &ScenarioConfig) -> Result<Self> {
        Ok(match id {
            ScenarioId::AdvectionCross => Velocity2D::Constant { a: 1.0, b: 1.0 },
            ScenarioId::Rotation => Velocity2D::Rotation,
            ScenarioId::Swirl => Velocity2D::Swirl {
                period: cfg.swirl_period,
            },
            ScenarioId::LinearVp => Velocity2D::LinearVp,
            ScenarioId::TwoStream => Velocity2D::Vlasov,
            _ => return Err(Error::Unsupported(format!("{id} is not a 2D scenario"))),
        })
    }

    fn swirl_g(period: f64, t: f64) -> f64 {
        PI * (PI * t / period).cos()
    }

    /// Separable factors of both speed components on the grids. `field` is
    /// the electric field for self-consistent problems.
    pub fn separable(&self, grids: &[Grid1D; 2], t: f64, field: Option<&[f64]>) -> Result<[SeparableSpeed; 2]> {
        let x = grids[0].points();
        let y = grids[1].points();
        let ones = |n: usize| vec![1.0; n];
        let (nx, ny) = (x.len(), y.len());
        let sp = |dim, same, cross, scale| SeparableSpeed {
            dim,
            same,
            cross,
            scale,
        };
        Ok(match *self {
            Velocity2D::Constant { a, b } => [sp(0, ones(nx), ones(ny), a), sp(1, ones(ny), ones(nx), b)],
            Velocity2D::Rotation => [sp(0, ones(nx), y, -1.0), sp(1, ones(ny), x, 1.0)],
            Velocity2D::Swirl { period } => {
                let g = Self::swirl_g(period, t);
                [
                    sp(
                        0,
                        x.iter().map(|x| (x / 2.0).cos().powi(2)).collect(),
                        y.iter().map(|y| y.sin()).collect(),
                        -g,
                    ),
                    sp(
                        1,
                        y.iter().map(|y| (y / 2.0).cos().powi(2)).collect(),
                        x.iter().map(|x| x.sin()).collect(),
                        g,
                    ),
                ]
            }
            Velocity2D::LinearVp => [
                sp(0, ones(nx), y, 1.0),
                sp(1, ones(ny), x.iter().map(|&x| linear_vp_field(x)).collect(), 1.0),
            ],
            Velocity2D::Vlasov => {
                let e = field.ok_or_else(|| Error::InvalidInput("self-consistent speed needs a field".into()))?;
                if e.len() != nx {
                    return Err(Error::Shape {
                        context: "Velocity2D::separable",
                        expected: format!("{nx} field values"),
                        found: format!("{}", e.len()),
                    });
                }
                [sp(0, ones(nx), y, 1.0), sp(1, ones(ny), e.to_vec(), 1.0)]
            }
        })
    }

    /// Pointwise velocity for the prescribed fields.
    pub fn at(&self, x: f64, y: f64, t: f64) -> Result<(f64, f64)> {
        Ok(match *self {
            Velocity2D::Constant { a, b } => (a, b),
            Velocity2D::Rotation => (-y, x),
            Velocity2D::Swirl { period } => {
                let g = Self::swirl_g(period, t);
                (
                    -(x / 2.0).cos().powi(2) * y.sin() * g,
                    x.sin() * (y / 2.0).cos().powi(2) * g,
                )
            }
            Velocity2D::LinearVp => (y, linear_vp_field(x)),
            Velocity2D::Vlasov => {
                return Err(Error::Unsupported(
                    "no pointwise velocity for a self-consistent field".into(),
                ))
            }
        })
    }

    /// Largest speed magnitude per dimension over the grid (for the step size).
    pub fn max_speeds(&self, grids: &[Grid1D; 2], field: Option<&[f64]>) -> Result<[f64; 2]> {
        let sp = match self {
            Velocity2D::Swirl { period } => {
                // g peaks at t = 0
                Velocity2D::Swirl { period: *period }.separable(grids, 0.0, field)?
            }
            _ => self.separable(grids, 0.0, field)?,
        };
        let m = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        Ok([0, 1].map(|d| m(&sp[d].same) * m(&sp[d].cross) * sp[d].scale.abs()))
    }
}

/// The prescribed field of the linear 1D1V problem.
pub fn linear_vp_field(x: f64) -> f64 {
    0.5 * (PI * x).sin()
}

/// Pointwise initial data of the 2D scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Initial2D {
    /// `exp(-x² - 5y²)`
    Gaussian,
    /// Union of two axis-aligned rectangles.
    Cross { half_width: f64, half_length: f64 },
    /// `exp(-20(x² + v²))`
    NarrowGaussian,
    /// Two-stream distribution with perturbation amplitude `alpha` and wave number `k`.
    TwoStream { alpha: f64, k: f64 },
}

impl Initial2D {
    pub fn for_config(cfg: &ScenarioConfig) -> Result<Self> {
        let cross = Initial2D::Cross {
            half_width: cfg.cross.0,
            half_length: cfg.cross.1,
        };
        Ok(match cfg.scenario {
            ScenarioId::AdvectionCross => cross,
            ScenarioId::Rotation | ScenarioId::Swirl => match cfg.shape {
                InitialShape::Smooth => Initial2D::Gaussian,
                InitialShape::Cross => cross,
            },
            ScenarioId::LinearVp => Initial2D::NarrowGaussian,
            ScenarioId::TwoStream => Initial2D::TwoStream {
                alpha: cfg.alpha,
                k: cfg.k,
            },
            id => return Err(Error::Unsupported(format!("{id} has no 2D initial data"))),
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            Initial2D::Gaussian => (-x * x - 5.0 * y * y).exp(),
            Initial2D::Cross {
                half_width: w,
                half_length: l,
            } => {
                let inside = (x.abs() <= w && y.abs() <= l) || (x.abs() <= l && y.abs() <= w);
                if inside {
                    1.0
                } else {
                    0.0
                }
            }
            Initial2D::NarrowGaussian => (-20.0 * (x * x + y * y)).exp(),
            Initial2D::TwoStream { alpha, k } => {
                let px = 1.0 + alpha * (((2.0 * k * x).cos() + (3.0 * k * x).cos()) / 1.2 + (k * x).cos());
                2.0 / (7.0 * (2.0 * PI).sqrt()) * (1.0 + 5.0 * y * y) * (-0.5 * y * y).exp() * px
            }
        }
    }

    /// Dense grid values.
    pub fn sample(&self, grids: &[Grid1D; 2]) -> DenseMatrix {
        let x = grids[0].points();
        let y = grids[1].points();
        DenseMatrix::from_fn(x.len(), y.len(), |i, j| self.eval(x[i], y[j]))
    }

    /// Factored initial state; separable profiles are built exactly, the
    /// cross by compressing its grid values.
    pub fn low_rank(&self, grids: &[Grid1D; 2], eps: f64, r_max: usize) -> Result<LowRank2D> {
        let x = grids[0].points();
        let y = grids[1].points();
        let f = match *self {
            Initial2D::Gaussian => LowRank2D::rank1(
                &x.iter().map(|x| (-x * x).exp()).collect::<Vec<_>>(),
                &y.iter().map(|y| (-5.0 * y * y).exp()).collect::<Vec<_>>(),
                1.0,
            ),
            Initial2D::NarrowGaussian => LowRank2D::rank1(
                &x.iter().map(|x| (-20.0 * x * x).exp()).collect::<Vec<_>>(),
                &y.iter().map(|y| (-20.0 * y * y).exp()).collect::<Vec<_>>(),
                1.0,
            ),
            Initial2D::TwoStream { alpha, k } => LowRank2D::rank1(
                &x.iter()
                    .map(|&x| 1.0 + alpha * (((2.0 * k * x).cos() + (3.0 * k * x).cos()) / 1.2 + (k * x).cos()))
                    .collect::<Vec<_>>(),
                &y.iter()
                    .map(|&v| 2.0 / (7.0 * (2.0 * PI).sqrt()) * (1.0 + 5.0 * v * v) * (-0.5 * v * v).exp())
                    .collect::<Vec<_>>(),
                1.0,
            ),
            Initial2D::Cross { .. } => return LowRank2D::from_dense(&self.sample(grids), eps, r_max),
        };
        f.truncate(eps, r_max)
    }
}

/// Initial data of the 4D scenarios in hierarchical Tucker form.
pub fn initial_4d(cfg: &ScenarioConfig, grids: &[Grid1D]) -> Result<HtTensor> {
    let p: Vec<Vec<f64>> = grids.iter().map(Grid1D::points).collect();
    let map = |d: usize, f: &dyn Fn(f64) -> f64| -> Vec<f64> { p[d].iter().map(|&x| f(x)).collect() };
    let t = match cfg.scenario {
        ScenarioId::Advection4d => {
            // exp(-2(x1²+x2²)) sin(x3 + x4) = g g (sin cos + cos sin)
            let g1 = map(0, &|x| (-2.0 * x * x).exp());
            let g2 = map(1, &|x| (-2.0 * x * x).exp());
            let a = HtTensor::from_separable([&g1, &g2, &map(2, &f64::sin), &map(3, &f64::cos)], 1.0);
            let b = HtTensor::from_separable([&g1, &g2, &map(2, &f64::cos), &map(3, &f64::sin)], 1.0);
            a.add(&b)?
        }
        ScenarioId::LandauWeak2d2v | ScenarioId::LandauStrong2d2v => {
            let (alpha, k) = (cfg.alpha, cfg.k);
            let one0 = map(0, &|_| 1.0);
            let one1 = map(1, &|_| 1.0);
            let c0 = map(0, &|x| alpha * (k * x).cos());
            let c1 = map(1, &|x| alpha * (k * x).cos());
            let g = LowRank2D::from_columns(&[one0.clone(), c0, one0], &[one1.clone(), one1.clone(), c1])?;
            let m3 = map(2, &|v| (-0.5 * v * v).exp());
            let m4 = map(3, &|v| (-0.5 * v * v).exp());
            let h = LowRank2D::rank1(&m3, &m4, 1.0 / (2.0 * PI));
            HtTensor::from_product(&g, &h)
        }
        id => return Err(Error::Unsupported(format!("{id} has no 4D initial data"))),
    };
    t.truncate(cfg.eps, cfg.r_max)
}

/// Exact solution of the 4D advection problem at time `t` (periodic shift).
pub fn advection4d_exact(grids: &[Grid1D], t: f64) -> Result<HtTensor> {
    let shifted = |d: usize, f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let g = &grids[d];
        g.points().iter().map(|&x| f(wrap(x - t, g.lo(), g.length()))).collect()
    };
    let g1 = shifted(0, &|x| (-2.0 * x * x).exp());
    let g2 = shifted(1, &|x| (-2.0 * x * x).exp());
    let a = HtTensor::from_separable([&g1, &g2, &shifted(2, &f64::sin), &shifted(3, &f64::cos)], 1.0);
    let b = HtTensor::from_separable([&g1, &g2, &shifted(2, &f64::cos), &shifted(3, &f64::sin)], 1.0);
    a.add(&b)
}

/// Feet at time 0 of the characteristics through `(x, y)` at time `t`,
/// integrated backward with classical RK4 using at least `steps_per_unit`
/// steps per unit time.
pub fn characteristic_foot(v: &Velocity2D, x: f64, y: f64, t: f64, steps_per_unit: usize) -> Result<(f64, f64)> {
    if let Velocity2D::Rotation = v {
        let (c, s) = (t.cos(), t.sin());
        return Ok((x * c + y * s, -x * s + y * c));
    }
    if let Velocity2D::Constant { a, b } = v {
        return Ok((x - a * t, y - b * t));
    }
    let n = ((t.abs() * steps_per_unit as f64).ceil() as usize).max(1);
    let h = -t / n as f64;
    let (mut px, mut py, mut s) = (x, y, t);
    for _ in 0..n {
        let k1 = v.at(px, py, s)?;
        let k2 = v.at(px + 0.5 * h * k1.0, py + 0.5 * h * k1.1, s + 0.5 * h)?;
        let k3 = v.at(px + 0.5 * h * k2.0, py + 0.5 * h * k2.1, s + 0.5 * h)?;
        let k4 = v.at(px + h * k3.0, py + h * k3.1, s + h)?;
        px += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        py += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        s += h;
    }
    Ok((px, py))
}

/// Reference feet on the whole grid: `(X*, Y*)` as `n1 x n2` matrices.
pub fn reference_maps(v: &Velocity2D, grids: &[Grid1D; 2], t: f64) -> Result<(DenseMatrix, DenseMatrix)> {
    let x = grids[0].points();
    let y = grids[1].points();
    let (n1, n2) = (x.len(), y.len());
    let feet = crate::par::map_range(n1 * n2, 20_000, |idx| {
        let (i, j) = (idx % n1, idx / n1);
        characteristic_foot(v, x[i], y[j], t, 400)
    });
    let mut xm = DenseMatrix::zeros(n1, n2);
    let mut ym = DenseMatrix::zeros(n1, n2);
    for (idx, f) in feet.into_iter().enumerate() {
        let (a, b) = f?;
        xm[(idx % n1, idx / n1)] = a;
        ym[(idx % n1, idx / n1)] = b;
    }
    Ok((xm, ym))
}

/// Which coordinates are periodic when evaluating initial data at feet.
pub fn periodic_dims(id: ScenarioId) -> [bool; 2] {
    match id {
        ScenarioId::Rotation => [false, false],
        ScenarioId::LinearVp | ScenarioId::TwoStream => [true, false],
        _ => [true, true],
    }
}

/// Evaluate initial data at (possibly unwrapped) foot coordinates.
pub fn eval_at_feet(
    f0: &Initial2D,
    grids: &[Grid1D; 2],
    periodic: [bool; 2],
    xm: &DenseMatrix,
    ym: &DenseMatrix,
) -> DenseMatrix {
    let w = |d: usize, v: f64| {
        if periodic[d] {
            wrap(v, grids[d].lo(), grids[d].length())
        } else {
            v
        }
    };
    DenseMatrix::from_fn(xm.rows(), xm.cols(), |i, j| f0.eval(w(0, xm[(i, j)]), w(1, ym[(i, j)])))
}
