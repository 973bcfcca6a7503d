//! Full-grid solvers with the same spatial discretisation as the compressed
//! ones. They store every grid value and never truncate, so they serve as
//! references for equivalence and damping-rate checks.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::fields::{poisson_1d, poisson_2d_dense};
use crate::integrator::Evolution;
use crate::scenarios::models::Velocity2D;
use crate::stencil::{Bias, Boundary, Grid1D, Reconstruction, StencilOperator};

fn ops_for(g: &Grid1D, recon: Reconstruction) -> [StencilOperator; 2] {
    [Bias::Left, Bias::Right].map(|b| StencilOperator::new(g, b, recon, Boundary::Periodic))
}

/// `D_left(p ⊙ u) + D_right(m ⊙ u)` for one grid line.
fn upwind_line(ops: &[StencilOperator; 2], u: &[f64], p: &[f64], m: &[f64], out: &mut [f64]) -> Result<()> {
    let n = u.len();
    let mut tmp = vec![0.0; n];
    let mut d = vec![0.0; n];
    out.iter_mut().for_each(|x| *x = 0.0);
    for (op, c) in ops.iter().zip([p, m]) {
        if c.iter().all(|&x| x == 0.0) {
            continue;
        }
        for i in 0..n {
            tmp[i] = c[i] * u[i];
        }
        op.apply_into(&tmp, &mut d)?;
        out.iter_mut().zip(&d).for_each(|(o, x)| *o += x);
    }
    Ok(())
}

/// Periodic flux-form transport `f_t + ∂_x(a f) + ∂_y(b f) = 0` on a full grid.
#[derive(Clone, Debug)]
pub struct DenseTransport2D {
    grids: [Grid1D; 2],
    velocity: Velocity2D,
    ops: [[StencilOperator; 2]; 2],
}

impl DenseTransport2D {
    pub fn new(grids: [Grid1D; 2], velocity: Velocity2D, recon: Reconstruction) -> Self {
        let ops = [ops_for(&grids[0], recon), ops_for(&grids[1], recon)];
        Self { grids, velocity, ops }
    }

    pub fn grids(&self) -> &[Grid1D; 2] {
        &self.grids
    }

    /// Velocity components at every grid point.
    fn speeds(&self, f: &DenseMatrix, t: f64) -> Result<[DenseMatrix; 2]> {
        let x = self.grids[0].points();
        let y = self.grids[1].points();
        let (nx, ny) = (x.len(), y.len());
        let field = match self.velocity {
            Velocity2D::Vlasov => {
                let h = self.grids[1].h();
                let rho: Vec<f64> = (0..nx).map(|i| (0..ny).map(|j| f[(i, j)]).sum::<f64>() * h).collect();
                Some(poisson_1d(&rho, self.grids[0].length())?.e)
            }
            _ => None,
        };
        let mut a = DenseMatrix::zeros(nx, ny);
        let mut b = DenseMatrix::zeros(nx, ny);
        for j in 0..ny {
            for i in 0..nx {
                let (ai, bi) = match &field {
                    Some(e) => (y[j], e[i]),
                    None => self.velocity.at(x[i], y[j], t)?,
                };
                a[(i, j)] = ai;
                b[(i, j)] = bi;
            }
        }
        Ok([a, b])
    }

    /// `-∂_x(a f) - ∂_y(b f)` with upwinding by the pointwise sign of the speed.
    pub fn rhs(&self, f: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
        let (nx, ny) = f.shape();
        if (nx, ny) != (self.grids[0].n(), self.grids[1].n()) {
            return Err(Error::Shape {
                context: "DenseTransport2D::rhs",
                expected: format!("{} x {}", self.grids[0].n(), self.grids[1].n()),
                found: format!("{nx} x {ny}"),
            });
        }
        let [a, b] = self.speeds(f, t)?;
        let mut out = DenseMatrix::zeros(nx, ny);
        let mut line = vec![0.0; nx];
        for j in 0..ny {
            let s = a.col(j);
            let (p, m): (Vec<f64>, Vec<f64>) = s.iter().map(|&v| (v.max(0.0), v.min(0.0))).unzip();
            upwind_line(&self.ops[0], f.col(j), &p, &m, &mut line)?;
            out.col_mut(j).iter_mut().zip(&line).for_each(|(o, x)| *o -= x);
        }
        let mut line = vec![0.0; ny];
        for i in 0..nx {
            let u: Vec<f64> = (0..ny).map(|j| f[(i, j)]).collect();
            let (p, m): (Vec<f64>, Vec<f64>) = (0..ny).map(|j| (b[(i, j)].max(0.0), b[(i, j)].min(0.0))).unzip();
            upwind_line(&self.ops[1], &u, &p, &m, &mut line)?;
            for j in 0..ny {
                out[(i, j)] -= line[j];
            }
        }
        Ok(out)
    }
}

impl Evolution for DenseTransport2D {
    type State = DenseMatrix;

    fn combine(&mut self, states: &[(f64, &DenseMatrix)], rhs: &[(f64, &DenseMatrix, f64)]) -> Result<DenseMatrix> {
        let (nx, ny) = states.first().map(|(_, s)| s.shape()).unwrap_or((0, 0));
        let mut out = DenseMatrix::zeros(nx, ny);
        for &(a, s) in states {
            out.add_scaled(a, s);
        }
        for &(c, s, t) in rhs {
            out.add_scaled(c, &self.rhs(s, t)?);
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("dense transport update"));
        }
        Ok(out)
    }
}

/// Two-dimensional Vlasov–Poisson on the full `(x1, x2, v1, v2)` grid,
/// stored row-major with `x1` slowest.
#[derive(Clone, Debug)]
pub struct DenseVlasov4D {
    grids: Vec<Grid1D>,
    ops: Vec<[StencilOperator; 2]>,
}

impl DenseVlasov4D {
    pub fn new(grids: Vec<Grid1D>, recon: Reconstruction) -> Result<Self> {
        if grids.len() != 4 {
            return Err(Error::InvalidInput(format!("need 4 grids, got {}", grids.len())));
        }
        let ops = grids.iter().map(|g| ops_for(g, recon)).collect();
        Ok(Self { grids, ops })
    }

    pub fn grids(&self) -> &[Grid1D] {
        &self.grids
    }

    fn dims(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|d| self.grids[d].n())
    }

    fn strides(&self) -> [usize; 4] {
        let n = self.dims();
        [n[1] * n[2] * n[3], n[2] * n[3], n[3], 1]
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        let len: usize = self.dims().iter().product();
        if f.len() != len {
            return Err(Error::Shape {
                context: "DenseVlasov4D",
                expected: format!("{len} values"),
                found: format!("{}", f.len()),
            });
        }
        Ok(())
    }

    /// `ρ(x1, x2) = Σ f Δv1 Δv2`.
    pub fn density(&self, f: &[f64]) -> Result<DenseMatrix> {
        self.check(f)?;
        let [n1, n2, n3, n4] = self.dims();
        let w = self.grids[2].h() * self.grids[3].h();
        Ok(DenseMatrix::from_fn(n1, n2, |i, j| {
            let start = (i * n2 + j) * n3 * n4;
            f[start..start + n3 * n4].iter().sum::<f64>() * w
        }))
    }

    /// `(E1, E2)` on the spatial grid.
    pub fn field(&self, f: &[f64]) -> Result<(DenseMatrix, DenseMatrix)> {
        let rho = self.density(f)?;
        let (_, e1, e2) = poisson_2d_dense(&rho, (self.grids[0].length(), self.grids[1].length()))?;
        Ok((e1, e2))
    }

    /// `½ Σ |E|² Δx1 Δx2`.
    pub fn electric_energy(&self, f: &[f64]) -> Result<f64> {
        let (e1, e2) = self.field(f)?;
        let s = e1.frobenius_norm().powi(2) + e2.frobenius_norm().powi(2);
        Ok(0.5 * s * self.grids[0].h() * self.grids[1].h())
    }

    /// Apply `line(index of the other coordinates, line values, out)` along `axis`
    /// and subtract the result from `out`.
    fn sweep(
        &self,
        f: &[f64],
        axis: usize,
        out: &mut [f64],
        mut line: impl FnMut([usize; 4], &[f64], &mut [f64]) -> Result<()>,
    ) -> Result<()> {
        let n = self.dims();
        let st = self.strides();
        let len = n[axis];
        let mut u = vec![0.0; len];
        let mut r = vec![0.0; len];
        let others: Vec<usize> = (0..4).filter(|&d| d != axis).collect();
        for a in 0..n[others[0]] {
            for b in 0..n[others[1]] {
                for c in 0..n[others[2]] {
                    let mut idx = [0usize; 4];
                    idx[others[0]] = a;
                    idx[others[1]] = b;
                    idx[others[2]] = c;
                    let base: usize = (0..4).map(|d| idx[d] * st[d]).sum();
                    for k in 0..len {
                        u[k] = f[base + k * st[axis]];
                    }
                    line(idx, &u, &mut r)?;
                    for k in 0..len {
                        out[base + k * st[axis]] -= r[k];
                    }
                }
            }
        }
        Ok(())
    }

    /// `-v · ∇_x f - E · ∇_v f`, with the velocity split pointwise and the
    /// field split globally as `E± = (E ± max|E|) / 2`.
    pub fn rhs(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check(f)?;
        let (e1, e2) = self.field(f)?;
        let mut out = vec![0.0; f.len()];
        for d in 0..2 {
            let v = self.grids[d + 2].points();
            let ops = &self.ops[d];
            let len = self.grids[d].n();
            self.sweep(f, d, &mut out, |idx, u, r| {
                let s = v[idx[d + 2]];
                upwind_line(ops, u, &vec![s.max(0.0); len], &vec![s.min(0.0); len], r)
            })?;
        }
        for (d, e) in [&e1, &e2].into_iter().enumerate() {
            let alpha = e.data().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if alpha == 0.0 {
                continue;
            }
            let ops = &self.ops[d + 2];
            let len = self.grids[d + 2].n();
            self.sweep(f, d + 2, &mut out, |idx, u, r| {
                let s = e[(idx[0], idx[1])];
                upwind_line(ops, u, &vec![0.5 * (s + alpha); len], &vec![0.5 * (s - alpha); len], r)
            })?;
        }
        Ok(out)
    }
}

impl Evolution for DenseVlasov4D {
    type State = Vec<f64>;

    fn combine(&mut self, states: &[(f64, &Vec<f64>)], rhs: &[(f64, &Vec<f64>, f64)]) -> Result<Vec<f64>> {
        let len = states.first().map_or(0, |(_, s)| s.len());
        let mut out = vec![0.0; len];
        for &(a, s) in states {
            out.iter_mut().zip(s.iter()).for_each(|(o, x)| *o += a * x);
        }
        for &(c, s, _) in rhs {
            let r = self.rhs(s)?;
            out.iter_mut().zip(&r).for_each(|(o, x)| *o += c * x);
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("dense Vlasov update"));
        }
        Ok(out)
    }
}
