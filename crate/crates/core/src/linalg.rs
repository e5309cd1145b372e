//! Small dense complex matrices and a cyclic Jacobi Hermitian eigensolver.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_SWEEPS: usize = 64;

/// Row-major square complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMat {
    pub m: usize,
    pub data: Vec<C64>,
}

impl CMat {
    pub fn zeros(m: usize) -> Self {
        CMat { m, data: vec![C64::new(0.0, 0.0); m * m] }
    }

    pub fn identity(m: usize) -> Self {
        let mut a = Self::zeros(m);
        for i in 0..m {
            a.data[i * m + i] = C64::new(1.0, 0.0);
        }
        a
    }

    pub fn from_real(m: usize, vals: &[f64]) -> Self {
        assert_eq!(vals.len(), m * m);
        CMat { m, data: vals.iter().map(|&v| C64::new(v, 0.0)).collect() }
    }

    pub fn diag(vals: &[f64]) -> Self {
        let mut a = Self::zeros(vals.len());
        for (i, &v) in vals.iter().enumerate() {
            a.data[i * vals.len() + i] = C64::new(v, 0.0);
        }
        a
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.m + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.m + j] = v;
    }

    pub fn scale(&self, s: f64) -> CMat {
        CMat { m: self.m, data: self.data.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, o: &CMat) -> CMat {
        CMat { m: self.m, data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, o: &CMat) -> CMat {
        CMat { m: self.m, data: self.data.iter().zip(&o.data).map(|(a, b)| a - b).collect() }
    }

    pub fn adjoint(&self) -> CMat {
        let m = self.m;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.data[j * m + i] = self.data[i * m + j].conj();
            }
        }
        out
    }

    pub fn mul(&self, o: &CMat) -> CMat {
        let m = self.m;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for l in 0..m {
                let a = self.data[i * m + l];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..m {
                    out.data[i * m + j] += a * o.data[l * m + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, z: &[C64]) -> Vec<C64> {
        let m = self.m;
        (0..m)
            .map(|i| (0..m).map(|j| self.data[i * m + j] * z[j]).sum())
            .collect()
    }

    /// `|A z|` without allocating.
    pub fn norm_of_product(&self, z: &[C64]) -> f64 {
        let m = self.m;
        let mut s = 0.0;
        for i in 0..m {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..m {
                acc += self.data[i * m + j] * z[j];
            }
            s += acc.norm_sqr();
        }
        s.sqrt()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, o: &CMat) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    pub fn is_diagonal(&self) -> bool {
        let m = self.m;
        (0..m).all(|i| (0..m).all(|j| i == j || self.data[i * m + j] == C64::new(0.0, 0.0)))
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|v| v.im == 0.0)
    }

    /// Spectral norm `‖A‖`.
    pub fn op_norm(&self) -> f64 {
        if self.m == 1 {
            return self.data[0].norm();
        }
        let g = self.adjoint().mul(self);
        hermitian_lambda_max(&g).max(0.0).sqrt()
    }

    /// Eigen-decomposition of a Hermitian matrix.
    pub fn eigh(&self) -> Result<Eigh> {
        eigh(self)
    }

    /// `A^α` for Hermitian positive definite `A`.
    pub fn hpd_power(&self, alpha: f64) -> Result<CMat> {
        matrix_power(self, alpha)
    }
}

/// Eigenvalues ascending and unitary eigenvectors stored column-wise.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Eigh {
    /// `U f(Λ) U*`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> CMat {
        let m = self.values.len();
        let u = &self.vectors;
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = CMat::zeros(m);
        for i in 0..m {
            for j in 0..m {
                let mut s = C64::new(0.0, 0.0);
                for l in 0..m {
                    s += u.at(i, l) * fv[l] * u.at(j, l).conj();
                }
                out.set(i, j, s);
            }
        }
        out
    }
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn hermitian_lambda_max(a: &CMat) -> f64 {
    match a.m {
        1 => a.data[0].re,
        2 => {
            let (p, d, b) = (a.data[0].re, a.data[3].re, a.data[1]);
            0.5 * (p + d) + (0.25 * (p - d) * (p - d) + b.norm_sqr()).sqrt()
        }
        _ => eigh(a).map(|e| *e.values.last().unwrap()).unwrap_or(f64::NAN),
    }
}

/// Cyclic Jacobi for Hermitian matrices.
pub fn eigh(a: &CMat) -> Result<Eigh> {
    let m = a.m;
    let mut w = a.clone();
    // symmetrize against rounding noise
    for i in 0..m {
        w.data[i * m + i] = C64::new(w.data[i * m + i].re, 0.0);
        for j in i + 1..m {
            let v = 0.5 * (w.at(i, j) + w.at(j, i).conj());
            w.set(i, j, v);
            w.set(j, i, v.conj());
        }
    }
    let mut u = CMat::identity(m);
    let scale = w.frobenius().max(f64::MIN_POSITIVE);
    let mut converged = m <= 1;
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| w.at(i, j).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale {
            converged = true;
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = w.at(p, q);
                let r = apq.norm();
                if r <= f64::MIN_POSITIVE {
                    continue;
                }
                // phase making the pivot real, then a real rotation
                let ph = apq / r;
                let app = w.at(p, p).re;
                let aqq = w.at(q, q).re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // V = [[c, s·ph], [-s·conj(ph), c]] applied as A ← V* A V
                let vpp = C64::new(c, 0.0);
                let vpq = ph * s;
                let vqp = -ph.conj() * s;
                let vqq = C64::new(c, 0.0);
                for k in 0..m {
                    let akp = w.at(k, p);
                    let akq = w.at(k, q);
                    w.set(k, p, akp * vpp + akq * vqp);
                    w.set(k, q, akp * vpq + akq * vqq);
                }
                for k in 0..m {
                    let apk = w.at(p, k);
                    let aqk = w.at(q, k);
                    w.set(p, k, vpp.conj() * apk + vqp.conj() * aqk);
                    w.set(q, k, vpq.conj() * apk + vqq.conj() * aqk);
                }
                w.set(p, q, C64::new(0.0, 0.0));
                w.set(q, p, C64::new(0.0, 0.0));
                for k in 0..m {
                    let ukp = u.at(k, p);
                    let ukq = u.at(k, q);
                    u.set(k, p, ukp * vpp + ukq * vqp);
                    u.set(k, q, ukp * vpq + ukq * vqq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::Numeric("Jacobi sweep limit reached".into()));
    }
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&x, &y| w.at(x, x).re.total_cmp(&w.at(y, y).re));
    let values = idx.iter().map(|&i| w.at(i, i).re).collect();
    let mut vectors = CMat::zeros(m);
    for (col, &i) in idx.iter().enumerate() {
        for r in 0..m {
            vectors.set(r, col, u.at(r, i));
        }
    }
    Ok(Eigh { values, vectors })
}

/// `U diag(λ^α) U*` for Hermitian positive definite `a`.
pub fn matrix_power(a: &CMat, alpha: f64) -> Result<CMat> {
    if a.m == 1 {
        let v = a.data[0].re;
        if v <= 0.0 || !v.is_finite() {
            return Err(Error::Domain(format!("matrix is not positive definite (λ = {v})")));
        }
        return Ok(CMat { m: 1, data: vec![C64::new(v.powf(alpha), 0.0)] });
    }
    if a.is_diagonal() {
        let m = a.m;
        let mut out = CMat::zeros(m);
        for i in 0..m {
            let v = a.data[i * m + i].re;
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Domain(format!("matrix is not positive definite (λ = {v})")));
            }
            out.data[i * m + i] = C64::new(v.powf(alpha), 0.0);
        }
        return Ok(out);
    }
    let e = eigh(a)?;
    if e.values[0] <= 0.0 {
        return Err(Error::Domain(format!(
            "matrix is not positive definite (λ_min = {})",
            e.values[0]
        )));
    }
    Ok(e.apply(|l| l.powf(alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_hpd(m: usize, rng: &mut ChaCha8Rng) -> CMat {
        let mut b = CMat::zeros(m);
        for v in b.data.iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        b.adjoint().mul(&b).add(&CMat::identity(m).scale(0.1))
    }

    #[test]
    fn power_examples() {
        let i2 = CMat::identity(2);
        assert!(matrix_power(&i2, 0.5).unwrap().max_abs_diff(&i2) < 1e-15);
        let d = matrix_power(&CMat::diag(&[4.0, 9.0]), 0.5).unwrap();
        assert!(d.max_abs_diff(&CMat::diag(&[2.0, 3.0])) < 1e-15);
        assert!(matrix_power(&CMat::diag(&[1.0, -1.0]), 0.5).is_err());
    }

    #[test]
    fn sqrt_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 2..=4 {
            for _ in 0..20 {
                let a = random_hpd(m, &mut rng);
                let r = matrix_power(&a, 0.5).unwrap();
                assert!(r.mul(&r).max_abs_diff(&a) < 1e-10);
            }
        }
    }

    #[test]
    fn eigenvectors_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hpd(5, &mut rng);
        let e = eigh(&a).unwrap();
        let u = &e.vectors;
        assert!(u.adjoint().mul(u).max_abs_diff(&CMat::identity(5)) < 1e-12);
        assert!(e.apply(|l| l).max_abs_diff(&a) < 1e-10);
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn op_norm_matches_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in 1..=4 {
            let a = random_hpd(m, &mut rng);
            let e = eigh(&a).unwrap();
            assert!((a.op_norm() - e.values[m - 1]).abs() < 1e-10 * e.values[m - 1]);
        }
    }
}
