//! One-dimensional upwind flux-difference operators on uniform grids.
//!
//! An operator maps grid values `u_i` to `(F_{i+1/2} - F_{i-1/2}) / h`, where
//! the interface flux is reconstructed from five neighbours either linearly
//! (fifth order) or with Jiang-Shu WENO weights. The left-biased variant is the
//! upwind choice for positive transport speed, the right-biased one for
//! negative speed.

use crate::error::{Error, Result};

/// Minimum number of points a grid must have for the five-point stencils.
pub const MIN_POINTS: usize = 8;

/// Placement of grid points inside `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Layout {
    /// `x_i = lo + i h`
    Nodes,
    /// `x_i = lo + (i + 1/2) h`
    CellCentered,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid1D {
    n: usize,
    lo: f64,
    hi: f64,
    layout: Layout,
}

impl Grid1D {
    pub fn new(n: usize, lo: f64, hi: f64, layout: Layout) -> Result<Self> {
        if n < MIN_POINTS {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_POINTS} points, got {n}"
            )));
        }
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { n, lo, hi, layout })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        let shift = match self.layout {
            Layout::Nodes => 0.0,
            Layout::CellCentered => 0.5,
        };
        self.lo + (i as f64 + shift) * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Grid values of a function.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (0..self.n).map(|i| f(self.point(i))).collect()
    }
}

/// Side of the stencil bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bias {
    /// Upwind for positive speed (`D+`).
    Left,
    /// Upwind for negative speed (`D-`).
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reconstruction {
    Linear5,
    Weno5,
}

impl std::str::FromStr for Reconstruction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear5" | "linear" => Ok(Self::Linear5),
            "weno5" | "weno" => Ok(Self::Weno5),
            _ => Err(Error::InvalidInput(format!("unknown reconstruction '{s}'"))),
        }
    }
}

/// How ghost values beyond the grid are supplied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Periodic,
    /// Quartic extrapolation from the five outermost points.
    Extrapolate,
}

const GHOSTS: usize = 3;
const LIN5: [f64; 5] = [2.0 / 60.0, -13.0 / 60.0, 47.0 / 60.0, 27.0 / 60.0, -3.0 / 60.0];
const WENO_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct StencilOperator {
    n: usize,
    h: f64,
    bias: Bias,
    recon: Reconstruction,
    boundary: Boundary,
}

impl StencilOperator {
    pub fn new(grid: &Grid1D, bias: Bias, recon: Reconstruction, boundary: Boundary) -> Self {
        Self {
            n: grid.n(),
            h: grid.h(),
            bias,
            recon,
            boundary,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn bias(&self) -> Bias {
        self.bias
    }

    pub fn recon(&self) -> Reconstruction {
        self.recon
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Whether the operator is linear in its argument.
    pub fn is_linear(&self) -> bool {
        self.recon == Reconstruction::Linear5
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        self.apply_with_offset(u, 0.0, out)
    }

    /// Periodic application to data that jumps by `offset` per period, i.e.
    /// `u_{j+N} = u_j + offset`. Used for coordinate-like functions such as
    /// characteristic feet. Extrapolating operators ignore the offset.
    pub fn apply_with_offset(&self, u: &[f64], offset: f64, out: &mut [f64]) -> Result<()> {
        let n = self.n;
        if u.len() != n || out.len() != n {
            return Err(Error::Shape {
                context: "StencilOperator::apply",
                expected: format!("{n} values"),
                found: format!("{} in, {} out", u.len(), out.len()),
            });
        }
        let mut ext = [0.0; 2 * GHOSTS];
        self.ghosts(u, offset, &mut ext);
        // value at logical index i in -3..n+3
        let at = |i: isize| -> f64 {
            if i < 0 {
                ext[(i + GHOSTS as isize) as usize]
            } else if (i as usize) < n {
                u[i as usize]
            } else {
                ext[GHOSTS + (i as usize - n)]
            }
        };
        let flux = |i: isize| -> f64 {
            let s = match self.bias {
                Bias::Left => [at(i - 2), at(i - 1), at(i), at(i + 1), at(i + 2)],
                Bias::Right => [at(i + 3), at(i + 2), at(i + 1), at(i), at(i - 1)],
            };
            match self.recon {
                Reconstruction::Linear5 => lin5(&s),
                Reconstruction::Weno5 => weno5(&s),
            }
        };
        let inv_h = 1.0 / self.h;
        let mut left = flux(-1);
        for (i, o) in out.iter_mut().enumerate() {
            let right = flux(i as isize);
            *o = (right - left) * inv_h;
            left = right;
        }
        Ok(())
    }

    /// Per-point correction `delta` such that, for a linear periodic
    /// operator, applying it to data with period jump `L` equals the plain
    /// periodic result plus `L * delta`.
    pub fn wrap_correction(&self) -> Vec<f64> {
        let zero = vec![0.0; self.n];
        let mut out = vec![0.0; self.n];
        self.apply_with_offset(&zero, 1.0, &mut out)
            .expect("lengths match by construction");
        out
    }

    fn ghosts(&self, u: &[f64], offset: f64, ext: &mut [f64; 2 * GHOSTS]) {
        let n = self.n;
        match self.boundary {
            Boundary::Periodic => {
                for g in 0..GHOSTS {
                    ext[g] = u[n - GHOSTS + g] - offset;
                    ext[GHOSTS + g] = u[g] + offset;
                }
            }
            Boundary::Extrapolate => {
                for g in 0..GHOSTS {
                    // left ghost at -(GHOSTS - g), right ghost at n + g
                    let wl = &EXTRAP[GHOSTS - 1 - g];
                    ext[g] = (0..5).map(|k| wl[k] * u[k]).sum();
                    let wr = &EXTRAP[g];
                    ext[GHOSTS + g] = (0..5).map(|k| wr[k] * u[n - 1 - k]).sum();
                }
            }
        }
    }
}

/// Lagrange weights on the points `0, 1, .., 4` evaluated at `-1, -2, -3`.
const EXTRAP: [[f64; 5]; 3] = [
    [5.0, -10.0, 10.0, -5.0, 1.0],
    [15.0, -40.0, 45.0, -24.0, 5.0],
    [35.0, -105.0, 126.0, -70.0, 15.0],
];

#[inline]
fn lin5(s: &[f64; 5]) -> f64 {
    LIN5[0] * s[0] + LIN5[1] * s[1] + LIN5[2] * s[2] + LIN5[3] * s[3] + LIN5[4] * s[4]
}

/// Jiang-Shu WENO5 interface value; `s` is ordered from the far upwind
/// point to the far downwind point.
#[inline]
fn weno5(s: &[f64; 5]) -> f64 {
    let [a, b, c, d, e] = *s;
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;
    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);
    let a0 = 0.1 / (WENO_EPS + b0).powi(2);
    let a1 = 0.6 / (WENO_EPS + b1).powi(2);
    let a2 = 0.3 / (WENO_EPS + b2).powi(2);
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

/// Split a speed into its nonnegative and nonpositive parts.
pub fn split_speed(c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (
        c.iter().map(|&x| x.max(0.0)).collect(),
        c.iter().map(|&x| x.min(0.0)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid1D {
        Grid1D::new(n, 0.0, 1.0, Layout::Nodes).unwrap()
    }

    #[test]
    fn extrapolation_weights_reproduce_quartics() {
        let p = |x: f64| 1.0 + x - 2.0 * x * x + 0.5 * x.powi(3) - 0.1 * x.powi(4);
        for (g, w) in EXTRAP.iter().enumerate() {
            let val: f64 = (0..5).map(|k| w[k] * p(k as f64)).sum();
            assert!((val - p(-(g as f64) - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_map_to_zero() {
        for recon in [Reconstruction::Linear5, Reconstruction::Weno5] {
            for bias in [Bias::Left, Bias::Right] {
                for bnd in [Boundary::Periodic, Boundary::Extrapolate] {
                    let op = StencilOperator::new(&grid(16), bias, recon, bnd);
                    let d = op.apply(&[2.5; 16]).unwrap();
                    assert!(d.iter().all(|&x| x.abs() < 1e-12), "{d:?}");
                }
            }
        }
    }

    #[test]
    fn wrong_length_is_rejected() {
        let op = StencilOperator::new(&grid(16), Bias::Left, Reconstruction::Linear5, Boundary::Periodic);
        assert!(op.apply(&[0.0; 15]).is_err());
    }

    #[test]
    fn small_grids_are_rejected() {
        assert!(Grid1D::new(7, 0.0, 1.0, Layout::Nodes).is_err());
    }
}
