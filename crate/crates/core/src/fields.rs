//! Electric fields from charge densities on periodic domains.
//!
//! Convention: `-Δφ = ρ - mean(ρ)`, `E = -∇φ`, and `φ` has zero mean.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::lowrank::{LowRank2D, SumBuilder2D};

/// FFT-based derivatives for periodic grid functions.
#[derive(Clone)]
pub struct Spectral1D {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
}

impl std::fmt::Debug for Spectral1D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral1D").field("n", &self.n).finish()
    }
}

impl Spectral1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 2 || !(length > 0.0) {
            return Err(Error::InvalidInput(format!("spectral grid n={n}, length={length}")));
        }
        let mut planner = FftPlanner::new();
        let two_pi_over_l = 2.0 * std::f64::consts::PI / length;
        let k = (0..n)
            .map(|i| {
                let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                m * two_pi_over_l
            })
            .collect();
        Ok(Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            k,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn transform(&self, u: &[f64], mult: impl Fn(usize) -> Complex64) -> Result<Vec<f64>> {
        if u.len() != self.n {
            return Err(Error::Shape {
                context: "Spectral1D",
                expected: format!("{} values", self.n),
                found: format!("{}", u.len()),
            });
        }
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        for (i, z) in buf.iter_mut().enumerate() {
            *z *= mult(i);
        }
        self.inverse.process(&mut buf);
        let inv_n = 1.0 / self.n as f64;
        Ok(buf.iter().map(|z| z.re * inv_n).collect())
    }

    fn is_nyquist(&self, i: usize) -> bool {
        self.n.is_multiple_of(2) && i == self.n / 2
    }

    /// First derivative; the Nyquist mode is dropped.
    pub fn derivative(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.transform(u, |i| {
            if self.is_nyquist(i) {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, self.k[i])
            }
        })
    }

    pub fn second_derivative(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.transform(u, |i| Complex64::new(-self.k[i] * self.k[i], 0.0))
    }

    /// Zero-mean solution of `-φ'' = ρ - mean(ρ)`.
    pub fn solve_poisson(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.transform(rho, |i| {
            if i == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / (self.k[i] * self.k[i]), 0.0)
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldState1D {
    pub phi: Vec<f64>,
    pub e: Vec<f64>,
}

/// Spectral solve of the one-dimensional Poisson problem on a periodic
/// interval of the given length. Any mean of `rho` is removed first.
pub fn poisson_1d(rho: &[f64], length: f64) -> Result<FieldState1D> {
    if rho.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("poisson_1d density"));
    }
    let sp = Spectral1D::new(rho.len(), length)?;
    let phi = sp.solve_poisson(rho)?;
    let e = sp.derivative(&phi)?.into_iter().map(|x| -x).collect();
    Ok(FieldState1D { phi, e })
}

/// `ρ(x) = Σ_j f(x, v_j) Δv` for a factored phase-space function.
pub fn density_1d1v(f: &LowRank2D, dv: f64) -> Vec<f64> {
    let w = vec![dv; f.n2()];
    f.contract_dim2(&w)
}

#[derive(Clone, Debug)]
pub struct CgOptions {
    /// Relative residual at which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative truncation accuracy applied to every iterate.
    pub eps_cg: f64,
    pub r_max: usize,
}

impl CgOptions {
    /// Defaults tied to the accuracy `eps` of the surrounding solver.
    pub fn for_eps(eps: f64) -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            eps_cg: 0.1 * eps,
            r_max: usize::MAX,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FieldState2D {
    pub phi: LowRank2D,
    pub e1: LowRank2D,
    pub e2: LowRank2D,
    pub iterations: usize,
    pub residual: f64,
}

/// Periodic spectral Laplacian `A = -(∂₁² + ∂₂²)` acting on factored functions.
#[derive(Clone, Debug)]
pub struct Laplacian2D {
    s1: Spectral1D,
    s2: Spectral1D,
}

impl Laplacian2D {
    pub fn new(n: (usize, usize), length: (f64, f64)) -> Result<Self> {
        Ok(Self {
            s1: Spectral1D::new(n.0, length.0)?,
            s2: Spectral1D::new(n.1, length.1)?,
        })
    }

    fn map_cols(
        &self,
        sp: &Spectral1D,
        m: &DenseMatrix,
        f: fn(&Spectral1D, &[f64]) -> Result<Vec<f64>>,
    ) -> Result<DenseMatrix> {
        let cols = (0..m.cols()).map(|j| f(sp, m.col(j))).collect::<Result<Vec<_>>>()?;
        Ok(DenseMatrix::from_columns(&cols))
    }

    /// Ratio of the largest to the smallest nonzero eigenvalue of `-Δ`.
    pub fn condition(&self) -> f64 {
        let kmax = |s: &Spectral1D| s.k.iter().fold(0.0f64, |m, k| m.max(k.abs()));
        let kmin = |s: &Spectral1D| {
            s.k.iter()
                .filter(|k| k.abs() > 0.0)
                .fold(f64::INFINITY, |m, k| m.min(k.abs()))
        };
        let top = kmax(&self.s1).powi(2) + kmax(&self.s2).powi(2);
        let bottom = kmin(&self.s1).min(kmin(&self.s2)).powi(2);
        if bottom.is_finite() && bottom > 0.0 {
            top / bottom
        } else {
            1.0
        }
    }

    /// `A x` as an uncompressed two-term sum.
    pub fn apply_into(&self, x: &LowRank2D, factor: f64, out: &mut SumBuilder2D) -> Result<()> {
        let d1 = self.map_cols(&self.s1, x.u1(), Spectral1D::second_derivative)?;
        let d2 = self.map_cols(&self.s2, x.u2(), Spectral1D::second_derivative)?;
        out.push(-factor, &LowRank2D::new(d1, x.core().clone(), x.u2().clone())?);
        out.push(-factor, &LowRank2D::new(x.u1().clone(), x.core().clone(), d2)?);
        Ok(())
    }

    /// `(-∂₁ x, -∂₂ x)`.
    pub fn negative_gradient(&self, x: &LowRank2D) -> Result<(LowRank2D, LowRank2D)> {
        let mut d1 = self.map_cols(&self.s1, x.u1(), Spectral1D::derivative)?;
        let mut d2 = self.map_cols(&self.s2, x.u2(), Spectral1D::derivative)?;
        d1.scale(-1.0);
        d2.scale(-1.0);
        Ok((
            LowRank2D::new(d1, x.core().clone(), x.u2().clone())?,
            LowRank2D::new(x.u1().clone(), x.core().clone(), d2)?,
        ))
    }
}

/// Conjugate gradients on factored iterates for the periodic Poisson
/// problem in two dimensions. Every iterate is recompressed to relative
/// accuracy `eps_cg`; the residual is recomputed from the iterate each time.
pub fn poisson_2d_lrcg(rho: &LowRank2D, length: (f64, f64), opts: &CgOptions) -> Result<FieldState2D> {
    if !rho.is_finite() {
        return Err(Error::NonFinite("poisson_2d_lrcg density"));
    }
    let (n1, n2) = (rho.n1(), rho.n2());
    let lap = Laplacian2D::new((n1, n2), length)?;
    let eps = opts.eps_cg;
    let r_max = opts.r_max;
    let ones1 = vec![1.0; n1];
    let ones2 = vec![1.0; n2];
    let mean = rho.weighted_sum(&ones1, &ones2) / (n1 * n2) as f64;

    let mut sb = SumBuilder2D::new();
    sb.push(1.0, rho);
    sb.push(-mean, &LowRank2D::rank1(&ones1, &ones2, 1.0));
    let b = sb.truncate(eps, r_max)?;
    let b_norm = b.frobenius_norm();

    let finish = |phi: LowRank2D, iterations: usize, residual: f64| -> Result<FieldState2D> {
        let m = phi.weighted_sum(&ones1, &ones2) / (n1 * n2) as f64;
        let mut sb = SumBuilder2D::new();
        sb.push(1.0, &phi);
        sb.push(-m, &LowRank2D::rank1(&ones1, &ones2, 1.0));
        let phi = sb.truncate(eps, r_max)?;
        let (e1, e2) = lap.negative_gradient(&phi)?;
        Ok(FieldState2D {
            phi,
            e1,
            e2,
            iterations,
            residual,
        })
    };

    if b_norm == 0.0 {
        return finish(LowRank2D::zeros(n1, n2), 0, 0.0);
    }

    let residual_of = |x: &LowRank2D| -> Result<LowRank2D> {
        let mut sb = SumBuilder2D::new();
        sb.push(1.0, &b);
        lap.apply_into(x, -1.0, &mut sb)?;
        sb.truncate(eps, r_max)
    };

    let mut x = LowRank2D::zeros(n1, n2);
    let mut r = b.clone();
    let mut p = b.clone();
    let mut rr = b_norm * b_norm;
    let mut rel = 1.0;
    // Truncating the iterate at `eps_cg` leaves a residual floor of roughly
    // `cond(A) eps_cg`; below that, stop once the residual stalls.
    let floor = 10.0 * eps * lap.condition();
    let mut best: Option<(LowRank2D, usize, f64)> = None;
    let mut stalled = 0;
    for it in 1..=opts.max_iter {
        let mut sb = SumBuilder2D::new();
        lap.apply_into(&p, 1.0, &mut sb)?;
        let q = sb.truncate(eps, r_max)?;
        let pq = p.inner(&q);
        if !(pq > 0.0) {
            break;
        }
        let alpha = rr / pq;
        let mut sb = SumBuilder2D::new();
        sb.push(1.0, &x);
        sb.push(alpha, &p);
        x = sb.truncate(eps, r_max)?;
        r = residual_of(&x)?;
        let rn = r.frobenius_norm();
        rel = rn / b_norm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("poisson_2d_lrcg residual"));
        }
        if rel <= opts.tol {
            return finish(x, it, rel);
        }
        if rel <= floor {
            if best.as_ref().is_none_or(|b| rel < 0.5 * b.2) {
                best = Some((x.clone(), it, rel));
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 5 {
                    let (bx, bit, brel) = best.take().expect("set above");
                    let (bx, bit, brel) = if rel < brel { (x, it, rel) } else { (bx, bit, brel) };
                    return finish(bx, bit, brel);
                }
            }
        }
        let beta = rn * rn / rr;
        rr = rn * rn;
        let mut sb = SumBuilder2D::new();
        sb.push(1.0, &r);
        sb.push(beta, &p);
        p = sb.truncate(eps, r_max)?;
    }
    let _ = r;
    Err(Error::NoConvergence {
        what: "low-rank CG",
        iterations: opts.max_iter,
        residual: rel,
    })
}

/// Dense two-dimensional spectral solve; returns `(φ, E1, E2)` as
/// `n1 x n2` grids.
pub fn poisson_2d_dense(rho: &DenseMatrix, length: (f64, f64)) -> Result<(DenseMatrix, DenseMatrix, DenseMatrix)> {
    if !rho.is_finite() {
        return Err(Error::NonFinite("poisson_2d_dense density"));
    }
    let (n1, n2) = rho.shape();
    let s1 = Spectral1D::new(n1, length.0)?;
    let s2 = Spectral1D::new(n2, length.1)?;
    let mut hat: Vec<Complex64> = rho.data().iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft2(&mut hat, n1, n2, &s1.forward, &s2.forward);
    let mut phi_hat = vec![Complex64::new(0.0, 0.0); n1 * n2];
    for j in 0..n2 {
        for i in 0..n1 {
            let k2 = s1.k[i] * s1.k[i] + s2.k[j] * s2.k[j];
            if k2 > 0.0 {
                phi_hat[i + n1 * j] = hat[i + n1 * j] / k2;
            }
        }
    }
    let back = |mut z: Vec<Complex64>| -> DenseMatrix {
        fft2(&mut z, n1, n2, &s1.inverse, &s2.inverse);
        let inv = 1.0 / (n1 * n2) as f64;
        DenseMatrix::from_col_major(n1, n2, z.iter().map(|c| c.re * inv).collect()).expect("sizes")
    };
    let mut e1_hat = phi_hat.clone();
    let mut e2_hat = phi_hat.clone();
    for j in 0..n2 {
        for i in 0..n1 {
            let idx = i + n1 * j;
            let k1 = if s1.is_nyquist(i) { 0.0 } else { s1.k[i] };
            let k2 = if s2.is_nyquist(j) { 0.0 } else { s2.k[j] };
            e1_hat[idx] *= Complex64::new(0.0, -k1);
            e2_hat[idx] *= Complex64::new(0.0, -k2);
        }
    }
    Ok((back(phi_hat), back(e1_hat), back(e2_hat)))
}

fn fft2(z: &mut [Complex64], n1: usize, n2: usize, f1: &Arc<dyn Fft<f64>>, f2: &Arc<dyn Fft<f64>>) {
    for col in z.chunks_mut(n1) {
        f1.process(col);
    }
    let mut row = vec![Complex64::new(0.0, 0.0); n2];
    for i in 0..n1 {
        for j in 0..n2 {
            row[j] = z[i + n1 * j];
        }
        f2.process(&mut row);
        for j in 0..n2 {
            z[i + n1 * j] = row[j];
        }
    }
}

/// Sign-definite splitting `E = E⁺ + E⁻` with `E± = (E ± α)/2`, `α = max|E|`.
pub fn split_field_2d(e: &LowRank2D) -> Result<(LowRank2D, LowRank2D, f64)> {
    let alpha = e.max_abs();
    let ones1 = vec![1.0; e.n1()];
    let ones2 = vec![1.0; e.n2()];
    let one = LowRank2D::rank1(&ones1, &ones2, 1.0);
    let mut plus = SumBuilder2D::new();
    plus.push(0.5, e);
    plus.push(0.5 * alpha, &one);
    let mut minus = SumBuilder2D::new();
    minus.push(0.5, e);
    minus.push(-0.5 * alpha, &one);
    Ok((plus.build()?, minus.build()?, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn cosine_density() {
        let n = 32;
        let l = 2.0 * PI;
        let x: Vec<f64> = (0..n).map(|i| i as f64 * l / n as f64).collect();
        let rho: Vec<f64> = x.iter().map(|x| x.cos()).collect();
        let fs = poisson_1d(&rho, l).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            assert!((fs.phi[i] - xi.cos()).abs() < 1e-13);
            assert!((fs.e[i] - xi.sin()).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_density_gives_zero_field() {
        let fs = poisson_1d(&[3.0; 16], 1.0).unwrap();
        assert!(fs.e.iter().all(|x| x.abs() < 1e-14));
        assert!(fs.phi.iter().all(|x| x.abs() < 1e-14));
    }
}
