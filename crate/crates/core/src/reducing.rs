//! Reducing operators `A_Q` for a matrix weight, and doubling orders of
//! matrix families.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dyadic::{box_nodes, separation_unchecked, CubeFilter, CubeId, Layout, Truncation};
use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh, matrix_power, CMat, C64};
use crate::par;
use crate::weights::{powers_at, subsample, MatrixWeight, QuadratureSpec};

/// Construction method for `A_Q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// `(⨍_Q W)^{1/2}`, valid for `p = 2`.
    ExactP2,
    /// John-ellipsoid fit of the `L^p` average norm.
    Mvee,
    /// Matrices supplied by the caller.
    Supplied,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact2" | "exact_p2" => Ok(Backend::ExactP2),
            "mvee" => Ok(Backend::Mvee),
            _ => invalid(format!("unknown backend {s}")),
        }
    }
}

const MVEE_EPS: f64 = 1e-8;
const MVEE_MAX_ITER: usize = 2_000;
/// Cap on quadrature nodes per cube when averaging `|W^{1/p} z|^p`.
const CUBE_NODE_CAP: usize = 1024;
/// Validation directions per sampled cube.
pub const VALIDATION_DIRECTIONS: usize = 200;

/// Node powers `W^{1/p}(x)` over a cube, singular nodes dropped.
#[derive(Clone, Debug)]
pub struct CubeAverager {
    mats: Vec<CMat>,
    p: f64,
}

impl CubeAverager {
    pub fn new(w: &MatrixWeight, p: f64, q: &CubeId, per_axis: usize) -> Result<Self> {
        let nodes = box_nodes(&q.corner(), q.edge(), per_axis);
        let mats: Vec<CMat> = powers_at(w, &nodes, 1.0 / p).into_iter().flatten().collect();
        if mats.is_empty() {
            return Err(Error::Domain("all quadrature nodes are singular".into()));
        }
        Ok(CubeAverager { mats, p })
    }

    /// Nodes per axis used for a window cube.
    pub fn per_axis_for(t: &Truncation, q: QuadratureSpec, j: i32) -> usize {
        let cap = (CUBE_NODE_CAP as f64).powf(1.0 / t.n as f64).floor() as usize;
        (q.g << (t.j_max - j).max(0)).clamp(1, cap.max(1))
    }

    /// `ρ(z) = (⨍_Q |W^{1/p} z|^p)^{1/p}`.
    pub fn rho(&self, z: &[C64]) -> f64 {
        let s: f64 = self.mats.iter().map(|a| a.norm_of_product(z).powf(self.p)).sum();
        (s / self.mats.len() as f64).powf(1.0 / self.p)
    }

    /// `(⨍_Q ‖W^{1/p} M‖^p)^{1/p}`.
    pub fn rho_matrix(&self, m: &CMat) -> f64 {
        let s: f64 = self.mats.iter().map(|a| a.mul(m).op_norm().powf(self.p)).sum();
        (s / self.mats.len() as f64).powf(1.0 / self.p)
    }

    /// `⨍_Q W` (requires `p = 2` node powers squared).
    pub fn mean_weight(&self) -> CMat {
        let m = self.mats[0].m;
        let mut acc = CMat::zeros(m);
        for a in &self.mats {
            let w = if self.p == 2.0 { a.mul(a) } else { matrix_power(a, self.p).unwrap_or_else(|_| a.clone()) };
            acc = acc.add(&w);
        }
        acc.scale(1.0 / self.mats.len() as f64)
    }
}

/// Sample directions for the ellipsoid fit.
pub fn fit_directions(m: usize, real: bool, seed: u64) -> Vec<Vec<C64>> {
    let count = (20 * m * m).max(40);
    let to_c = |v: Vec<f64>| v.into_iter().map(|x| C64::new(x, 0.0)).collect::<Vec<C64>>();
    if real && m == 1 {
        return vec![vec![C64::new(1.0, 0.0)]];
    }
    if real && m == 2 {
        return (0..count)
            .map(|i| {
                let t = PI * i as f64 / count as f64;
                to_c(vec![t.cos(), t.sin()])
            })
            .collect();
    }
    if real && m == 3 {
        // Fibonacci lattice on the sphere; antipodes are implied by symmetry
        let golden = PI * (3.0 - 5f64.sqrt());
        return (0..count)
            .map(|i| {
                let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                let r = (1.0 - y * y).sqrt();
                let th = golden * i as f64;
                to_c(vec![r * th.cos(), y, r * th.sin()])
            })
            .collect();
    }
    random_directions(m, count, real, seed)
}

/// Gaussian-normalised unit vectors.
pub fn random_directions(m: usize, count: usize, real: bool, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| loop {
            let v: Vec<C64> = (0..m)
                .map(|_| C64::new(rng.sample(StandardNormal), if real { 0.0 } else { rng.sample(StandardNormal) }))
                .collect();
            let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            if nrm > 1e-8 {
                break v.iter().map(|c| c / nrm).collect();
            }
        })
        .collect()
}

/// Cholesky factor of a real symmetric matrix; `None` unless positive definite.
fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn log_det(a: &[f64], d: usize) -> f64 {
    cholesky(a, d).map_or(f64::NEG_INFINITY, |l| (0..d).map(|i| 2.0 * l[i * d + i].ln()).sum())
}

/// Solves `A x = b` for symmetric positive definite `A`.
fn spd_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let d = b.len();
    let l = cholesky(a, d)?;
    let mut y = b.to_vec();
    for i in 0..d {
        for k in 0..i {
            y[i] -= l[i * d + k] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    for i in (0..d).rev() {
        for k in i + 1..d {
            y[i] -= l[k * d + i] * y[k];
        }
        y[i] /= l[i * d + i];
    }
    Some(y)
}

fn spd_inverse(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; d * d];
    for c in 0..d {
        let mut e = vec![0.0; d];
        e[c] = 1.0;
        let col = spd_solve(a, &e)?;
        for r in 0..d {
            inv[r * d + c] = col[r];
        }
    }
    Some(inv)
}

/// Symmetric basis `E_k` of `d×d` matrices, as `(row, col)` pairs with `row ≤ col`.
fn sym_basis(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|r| (r..d).map(move |c| (r, c))).collect()
}

fn sym_matrix(h: &[f64], basis: &[(usize, usize)], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for (&v, &(r, c)) in h.iter().zip(basis) {
        m[r * d + c] = v;
        m[c * d + r] = v;
    }
    m
}

/// Minimum-volume origin-centred ellipsoid `{x : xᵀHx ≤ 1}` containing `±points`.
///
/// Log-barrier Newton method on the entries of `H`; stops once the duality gap
/// in `-log det H` is below `eps`. Returns `H` row-major.
pub fn mvee_centered(points: &[Vec<f64>], eps: f64, max_iter: usize) -> Result<Vec<f64>> {
    let d = points.first().map_or(0, |p| p.len());
    let pts: Vec<&Vec<f64>> = points.iter().filter(|p| p.iter().any(|&v| v != 0.0)).collect();
    if d == 0 || pts.is_empty() {
        return invalid("ellipsoid fit needs nonzero points");
    }
    let basis = sym_basis(d);
    let nv = basis.len();
    // a[i][k] = x_iᵀ E_k x_i
    let a: Vec<Vec<f64>> = pts
        .iter()
        .map(|x| basis.iter().map(|&(r, c)| if r == c { x[r] * x[r] } else { 2.0 * x[r] * x[c] }).collect())
        .collect();
    let r2 = pts.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
    let mut h: Vec<f64> = basis.iter().map(|&(r, c)| if r == c { 0.5 / r2 } else { 0.0 }).collect();
    let k = pts.len() as f64;
    let slack = |h: &[f64]| -> Vec<f64> { a.iter().map(|ai| 1.0 - ai.iter().zip(h).map(|(x, y)| x * y).sum::<f64>()).collect() };
    let value = |h: &[f64], t: f64| -> f64 {
        let ld = log_det(&sym_matrix(h, &basis, d), d);
        let sl = slack(h);
        if ld == f64::NEG_INFINITY || sl.iter().any(|&s| !(s > 0.0)) {
            return f64::INFINITY;
        }
        -t * ld - sl.iter().map(|s| s.ln()).sum::<f64>()
    };
    let mut t = 1.0;
    let mut newton = 0;
    loop {
        // centre for the current t
        let mut prev_dec = f64::INFINITY;
        loop {
            newton += 1;
            if newton > max_iter {
                return Err(Error::Numeric(format!("ellipsoid fit did not converge in {max_iter} Newton steps")));
            }
            let hm = sym_matrix(&h, &basis, d);
            let inv = spd_inverse(&hm, d).ok_or_else(|| Error::Numeric("ellipsoid iterate left the cone".into()))?;
            let sl = slack(&h);
            let mut g = vec![0.0; nv];
            let mut hess = vec![0.0; nv * nv];
            // -t log det: gradient -t tr(H⁻¹E_k), Hessian t tr(H⁻¹E_k H⁻¹E_l)
            let ek = |m: &[f64], (r, c): (usize, usize), (p, q): (usize, usize)| -> f64 {
                // tr(M E_rc M E_pq) with E symmetric unit pattern
                let e = |i: usize, j: usize| m[i * d + j];
                let mut s = e(c, p) * e(q, r);
                if p != q {
                    s += e(c, q) * e(p, r);
                }
                if r != c {
                    s += e(r, p) * e(q, c);
                    if p != q {
                        s += e(r, q) * e(p, c);
                    }
                }
                s
            };
            for (i, &(r, c)) in basis.iter().enumerate() {
                g[i] = -t * if r == c { inv[r * d + r] } else { 2.0 * inv[r * d + c] };
                for (j, &bj) in basis.iter().enumerate() {
                    hess[i * nv + j] = t * ek(&inv, (r, c), bj);
                }
            }
            for (ai, &s) in a.iter().zip(&sl) {
                for i in 0..nv {
                    g[i] += ai[i] / s;
                    for j in 0..nv {
                        hess[i * nv + j] += ai[i] * ai[j] / (s * s);
                    }
                }
            }
            let neg: Vec<f64> = g.iter().map(|v| -v).collect();
            let step = spd_solve(&hess, &neg).ok_or_else(|| Error::Numeric("singular barrier Hessian".into()))?;
            let dec: f64 = -g.iter().zip(&step).map(|(x, y)| x * y).sum::<f64>();
            // stalled at the rounding floor once small steps stop contracting
            if dec / 2.0 <= 1e-10 || (dec < 1e-6 && dec > 0.5 * prev_dec) {
                break;
            }
            prev_dec = dec;
            let f0 = value(&h, t);
            // inside the quadratic region of a self-concordant barrier a full step is feasible
            let full = dec.sqrt() < 0.25;
            let mut alpha = 1.0;
            loop {
                let trial: Vec<f64> = h.iter().zip(&step).map(|(x, y)| x + alpha * y).collect();
                let f1 = value(&trial, t);
                if (full && f1.is_finite()) || f1 <= f0 - 0.25 * alpha * dec {
                    h = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    return Err(Error::Numeric("ellipsoid line search stalled".into()));
                }
            }
        }
        if k / t <= eps {
            return Ok(sym_matrix(&h, &basis, d));
        }
        t *= 10.0;
    }
}

/// `A_Q` for one cube.
pub fn reduce_cube(w: &MatrixWeight, p: f64, q: &CubeId, quad: QuadratureSpec, backend: Backend) -> Result<CMat> {
    let per = quad.g.max(1) * 8;
    let per = per.min((CUBE_NODE_CAP as f64).powf(1.0 / q.dim() as f64) as usize).max(1);
    let avg = CubeAverager::new(w, p, q, per)?;
    reduce_with(w, &avg, backend)
}

fn reduce_with(w: &MatrixWeight, avg: &CubeAverager, backend: Backend) -> Result<CMat> {
    match backend {
        Backend::ExactP2 => {
            if avg.p != 2.0 {
                return invalid("exact backend requires p = 2");
            }
            matrix_power(&avg.mean_weight(), 0.5)
        }
        Backend::Mvee => mvee_operator(w, avg),
        Backend::Supplied => invalid("supplied families are built with ReducingFamily::from_fn"),
    }
}

fn mvee_operator(w: &MatrixWeight, avg: &CubeAverager) -> Result<CMat> {
    let m = w.m;
    if m == 1 {
        let r = avg.rho(&[C64::new(1.0, 0.0)]);
        return Ok(CMat::diag(&[r]));
    }
    let dirs = fit_directions(m, w.real, 0x3EE);
    let rhos: Vec<f64> = dirs.iter().map(|z| avg.rho(z)).collect();
    if rhos.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::Numeric("degenerate average norm".into()));
    }
    let a = if w.real {
        let pts: Vec<Vec<f64>> = dirs.iter().zip(&rhos).map(|(z, r)| z.iter().map(|c| c.re / r).collect()).collect();
        let h = mvee_centered(&pts, MVEE_EPS, MVEE_MAX_ITER)?;
        let hc = CMat::from_real(m, &h);
        matrix_power(&hc, 0.5)?
    } else {
        // embed ℂ^m in ℝ^{2m}, add i·z copies so the fit commutes with J
        let mut pts = Vec::with_capacity(2 * dirs.len());
        for (z, r) in dirs.iter().zip(&rhos) {
            let mut a: Vec<f64> = z.iter().map(|c| c.re / r).collect();
            a.extend(z.iter().map(|c| c.im / r));
            pts.push(a);
            let mut b: Vec<f64> = z.iter().map(|c| -c.im / r).collect();
            b.extend(z.iter().map(|c| c.re / r));
            pts.push(b);
        }
        let h = mvee_centered(&pts, MVEE_EPS, MVEE_MAX_ITER)?;
        let d = 2 * m;
        let mut hc = CMat::zeros(m);
        for r in 0..m {
            for c in 0..m {
                let x = 0.5 * (h[r * d + c] + h[(r + m) * d + c + m]);
                let y = 0.5 * (h[(r + m) * d + c] - h[r * d + c + m]);
                hc.set(r, c, C64::new(x, y));
            }
        }
        matrix_power(&hc, 0.5)?
    };
    // centre the ratio interval |Az|/ρ(z) around 1
    let ratios: Vec<f64> = dirs.iter().zip(&rhos).map(|(z, r)| a.norm_of_product(z) / r).collect();
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(a.scale(1.0 / (lo * hi).sqrt()))
}

/// Reducing operators over every window cube.
#[derive(Clone, Debug)]
pub struct ReducingFamily {
    pub p: f64,
    pub m: usize,
    pub backend: Backend,
    pub layout: Layout,
    /// Per level (from `j_min`), per Morton block.
    pub mats: Vec<Vec<CMat>>,
    /// Empirical `(c_low, c_high)` of `|A_Q z| / ρ_Q(z)`.
    pub bounds: (f64, f64),
}

impl ReducingFamily {
    pub fn get(&self, q: &CubeId) -> Option<&CMat> {
        let b = self.layout.block_of(q)?;
        Some(&self.mats[(q.j - self.layout.trunc.j_min) as usize][b])
    }

    pub fn trunc(&self) -> &Truncation {
        &self.layout.trunc
    }

    /// Family from a per-cube closure; bounds are left at `(1, 1)`.
    pub fn from_fn(t: &Truncation, p: f64, m: usize, f: impl Fn(&CubeId) -> CMat + Sync + Send) -> Self {
        let layout = t.layout();
        let mats = (t.j_min..=t.j_max)
            .map(|j| par::map_range(layout.blocks(j), |b| f(&layout.cube_of_block(j, b))))
            .collect();
        ReducingFamily { p, m, backend: Backend::Supplied, layout, mats, bounds: (1.0, 1.0) }
    }

    /// Every `A_Q = I`.
    pub fn identity(t: &Truncation, p: f64, m: usize) -> Self {
        Self::from_fn(t, p, m, |_| CMat::identity(m))
    }
}

/// Build `A_Q` for all window cubes and record validation bounds.
pub fn build_family(w: &MatrixWeight, p: f64, t: &Truncation, quad: QuadratureSpec, backend: Backend) -> Result<ReducingFamily> {
    if !(p > 0.0 && p.is_finite()) {
        return invalid("p must be positive and finite");
    }
    if backend == Backend::ExactP2 && p != 2.0 {
        return invalid("exact backend requires p = 2");
    }
    if backend == Backend::Supplied {
        return invalid("supplied families are built with ReducingFamily::from_fn");
    }
    if w.n != t.n {
        return invalid("weight and window dimensions differ");
    }
    let layout = t.layout();
    let mut mats = Vec::with_capacity(t.levels());
    for j in t.j_min..=t.j_max {
        let per = CubeAverager::per_axis_for(t, quad, j);
        let lvl: Vec<Result<CMat>> = par::map_range(layout.blocks(j), |b| {
            let q = layout.cube_of_block(j, b);
            let avg = CubeAverager::new(w, p, &q, per)?;
            reduce_with(w, &avg, backend)
        });
        mats.push(lvl.into_iter().collect::<Result<Vec<_>>>()?);
    }
    let mut fam = ReducingFamily { p, m: w.m, backend, layout, mats, bounds: (1.0, 1.0) };
    fam.bounds = validate_family(w, &fam, quad, 64, VALIDATION_DIRECTIONS)?;
    Ok(fam)
}

/// `(min, max)` of `|A_Q z| / ρ_Q(z)` over sampled cubes and random directions.
pub fn validate_family(
    w: &MatrixWeight,
    fam: &ReducingFamily,
    quad: QuadratureSpec,
    cubes: usize,
    directions: usize,
) -> Result<(f64, f64)> {
    let t = fam.trunc().clone();
    let all = subsample(t.enumerate(&CubeFilter::All)?, cubes);
    let dirs = random_directions(w.m, directions, w.real, 0x7A11D);
    let per_cube: Vec<Result<(f64, f64)>> = par::map_slice(&all, |q| {
        let avg = CubeAverager::new(w, fam.p, q, CubeAverager::per_axis_for(&t, quad, q.j))?;
        let a = fam.get(q).expect("window cube");
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for z in &dirs {
            let r = a.norm_of_product(z) / avg.rho(z);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok((lo, hi))
    });
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for r in per_cube {
        let (a, b) = r?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok((lo, hi))
}

/// Fitted doubling orders of a family.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DoublingOrders {
    pub beta1: f64,
    pub beta2: f64,
    pub beta_weak: f64,
    pub c_strong: f64,
    pub c_weak: f64,
}

struct PairStat {
    /// `ln(sep)`
    x: f64,
    /// signed `ln(ℓ(R)/ℓ(Q))`
    g: f64,
    /// `ln ‖A_Q A_R^{-1}‖`
    y: f64,
}

/// Least-squares slope through per-bin maxima of `y` against `x`.
fn envelope_slope(pts: &[(f64, f64)], bins: usize) -> f64 {
    let xmax = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    if pts.is_empty() || xmax <= 0.0 {
        return 0.0;
    }
    let mut best: Vec<Option<(f64, f64)>> = vec![None; bins];
    for &(x, y) in pts {
        let b = ((x / xmax) * (bins as f64 - 1.0)).round() as usize;
        let e = &mut best[b];
        if e.is_none_or(|(_, v)| y > v) {
            *e = Some((x, y));
        }
    }
    let pts: Vec<(f64, f64)> = best.into_iter().flatten().collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if den <= 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Strong `(β₁, β₂)` (for `‖A_Q A_R^{-1}‖^p`) and weak `β` (for `‖A_Q A_R^{-1}‖`)
/// by envelope regression, raised where needed so that the implied constant stays within `cap`.
pub fn doubling_orders(fam: &ReducingFamily, cap: f64) -> Result<DoublingOrders> {
    let t = fam.trunc();
    let cubes = t.enumerate(&CubeFilter::All)?;
    let inv: Vec<CMat> = cubes
        .iter()
        .map(|q| matrix_power(fam.get(q).expect("window cube"), -1.0))
        .collect::<Result<_>>()?;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let n = cubes.len();
    if n * n <= crate::growth::PAIR_CAP {
        for a in 0..n {
            for b in 0..n {
                pairs.push((a, b));
            }
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xD0B);
        for _ in 0..crate::growth::PAIR_CAP {
            pairs.push((rng.gen_range(0..n), rng.gen_range(0..n)));
        }
    }
    let stats: Vec<PairStat> = par::map_slice(&pairs, |&(a, b)| {
        let (q, r) = (&cubes[a], &cubes[b]);
        let nrm = fam.get(q).unwrap().mul(&inv[b]).op_norm();
        PairStat {
            x: separation_unchecked(q, r).ln(),
            g: (r.edge() / q.edge()).ln(),
            y: nrm.max(1e-300).ln(),
        }
    });
    let p = fam.p;
    let same: Vec<(f64, f64)> = stats.iter().filter(|s| s.g == 0.0).map(|s| (s.x, s.y)).collect();
    let mut bw = envelope_slope(&same, 16).max(0.0);
    let weak_c = |b: f64| same.iter().map(|&(x, y)| y - b * x).fold(0.0, f64::max);
    raise_until(&mut bw, cap.ln(), weak_c);
    let c_weak = weak_c(bw).exp();

    let nested_up: Vec<(f64, f64)> = stats.iter().filter(|s| s.g > 0.0 && s.x < 2f64.ln() + 1e-12).map(|s| (s.g, p * s.y)).collect();
    let nested_dn: Vec<(f64, f64)> = stats.iter().filter(|s| s.g < 0.0 && s.x < 2f64.ln() + 1e-12).map(|s| (-s.g, p * s.y)).collect();
    let mut b1 = envelope_slope(&nested_up, 16).max(0.0);
    let mut b2 = envelope_slope(&nested_dn, 16).max(0.0);
    let same_p: Vec<(f64, f64)> = same.iter().map(|&(x, y)| (x, p * y)).collect();
    let need = envelope_slope(&same_p, 16).max(0.0);
    if b1 + b2 < need {
        let add = 0.5 * (need - b1 - b2);
        b1 += add;
        b2 += add;
    }
    let strong_c = |b1: f64, b2: f64| {
        stats
            .iter()
            .map(|s| {
                let lvl = if s.g >= 0.0 { b1 * s.g } else { -b2 * s.g };
                p * s.y - lvl - (b1 + b2) * s.x
            })
            .fold(0.0, f64::max)
    };
    let (base1, base2) = (b1, b2);
    let mut delta = 0.0;
    raise_until(&mut delta, cap.ln(), |d| strong_c(base1 + d, base2 + d));
    b1 = base1 + delta;
    b2 = base2 + delta;
    Ok(DoublingOrders { beta1: b1, beta2: b2, beta_weak: bw, c_strong: strong_c(b1, b2).exp(), c_weak })
}

/// Increase `beta` by bisection until `lnc(beta) ≤ target`.
fn raise_until(beta: &mut f64, target: f64, lnc: impl Fn(f64) -> f64) {
    if lnc(*beta) <= target {
        return;
    }
    let mut lo = *beta;
    let mut hi = (*beta).max(1.0);
    while lnc(hi) > target && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if lnc(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    *beta = hi;
}

/// `‖W^{1/p}(x) A_Q^{-1}‖` for the level-`j` cube containing `x`.
pub fn gamma_field(w: &MatrixWeight, fam: &ReducingFamily, j: i32, x: &[f64]) -> Result<f64> {
    let t = fam.trunc();
    if j < t.j_min || j > t.j_max {
        return Err(Error::Domain(format!("level {j} outside the family")));
    }
    let s = 2f64.powi(j);
    let q = CubeId::new(j, &x.iter().map(|v| (v * s).floor() as i64).collect::<Vec<_>>());
    let a = fam.get(&q).ok_or_else(|| Error::Domain("point outside the window".into()))?;
    let wp = w.power(x, 1.0 / fam.p).ok_or_else(|| Error::Domain("weight singular at point".into()))?;
    Ok(wp.mul(&matrix_power(a, -1.0)?).op_norm())
}

/// Smallest and largest eigenvalue of `A`.
pub fn spectrum_bounds(a: &CMat) -> Result<(f64, f64)> {
    let e = eigh(a)?;
    Ok((e.values[0], *e.values.last().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QuadratureSpec {
        QuadratureSpec::new(2).unwrap()
    }

    #[test]
    fn identity_weight_gives_identity() {
        let w = MatrixWeight::identity(1, 2);
        for backend in [Backend::ExactP2, Backend::Mvee] {
            let a = reduce_cube(&w, 2.0, &CubeId::new(0, &[0]), q(), backend).unwrap();
            assert!(a.max_abs_diff(&CMat::identity(2)) < 1e-6, "{backend:?} {a:?}");
        }
        let a = reduce_cube(&w, 1.0, &CubeId::new(0, &[0]), q(), Backend::Mvee).unwrap();
        assert!(a.max_abs_diff(&CMat::identity(2)) < 1e-6);
    }

    #[test]
    fn constant_and_scalar_examples() {
        let w = MatrixWeight::constant(1, CMat::diag(&[1.0, 4.0])).unwrap();
        let a = reduce_cube(&w, 2.0, &CubeId::new(0, &[0]), q(), Backend::ExactP2).unwrap();
        assert!(a.max_abs_diff(&CMat::diag(&[1.0, 2.0])) < 1e-12);
        assert!(reduce_cube(&w, 1.0, &CubeId::new(0, &[0]), q(), Backend::ExactP2).is_err());
        let cubic = MatrixWeight::custom(1, 1, "3x²", vec![], true, |x| CMat::diag(&[3.0 * x[0] * x[0]]));
        let a = reduce_cube(&cubic, 2.0, &CubeId::new(0, &[0]), QuadratureSpec::new(64).unwrap(), Backend::ExactP2).unwrap();
        assert!((a.at(0, 0).re - 1.0).abs() < 1e-4);
    }

    #[test]
    fn mvee_within_john_factor() {
        let w = MatrixWeight::rotated_diag_power(1, -0.5, 0.3);
        let t = Truncation::new(1, 0, 3, 2).unwrap();
        for p in [1.0, 2.0, 4.0] {
            let f = build_family(&w, p, &t, q(), Backend::Mvee).unwrap();
            let (lo, hi) = f.bounds;
            assert!(hi / lo <= 2.0 * 2f64.sqrt(), "p={p}: {lo} {hi}");
        }
    }

    #[test]
    fn mvee_converges_at_rounding_floor() {
        let pts = vec![
            vec![-1.9889048428160976, 3.9099753007359546],
            vec![-3.1714684207473582, 0.0],
            vec![-0.1490107532894817, 4.0355750667921875],
            vec![0.5778883001606909, 0.0],
            vec![0.0, 0.9396333271901793],
            vec![-0.697999360010956, 1.1467190719847367],
            vec![4.259977182666069, 4.596273303666264],
            vec![0.0, -2.596755466775723],
            vec![-3.7693345814873433, -1.615980875196984],
            vec![4.207392089863539, -1.7831172963434712],
            vec![0.0, -4.726340695210258],
            vec![0.0, 0.0],
        ];
        let h = mvee_centered(&pts, 1e-9, 2000).unwrap();
        let worst = pts.iter().map(|p| h[0] * p[0] * p[0] + 2.0 * h[1] * p[0] * p[1] + h[3] * p[1] * p[1]).fold(0.0, f64::max);
        assert!(worst <= 1.0 && worst > 1.0 - 1e-6);
    }

    #[test]
    fn complex_weight_fit() {
        let w = MatrixWeight::custom(1, 2, "hermitian", vec![], false, |x| {
            let s = 1.0 + x[0] * x[0];
            let mut a = CMat::diag(&[s, 1.0 / s]);
            a.set(0, 1, C64::new(0.2, 0.3));
            a.set(1, 0, C64::new(0.2, -0.3));
            a
        });
        let t = Truncation::new(1, 0, 2, 2).unwrap();
        let f = build_family(&w, 3.0, &t, q(), Backend::Mvee).unwrap();
        assert!(f.bounds.1 / f.bounds.0 <= 2.0 * 2f64.sqrt());
        for lvl in &f.mats {
            for a in lvl {
                assert!(a.hermitian_defect() < 1e-10);
            }
        }
    }

    #[test]
    fn doubling_of_identity_family_is_zero() {
        let t = Truncation::new(1, 0, 3, 2).unwrap();
        let f = ReducingFamily::identity(&t, 2.0, 2);
        let d = doubling_orders(&f, 10.0).unwrap();
        assert_eq!((d.beta1, d.beta2, d.beta_weak), (0.0, 0.0, 0.0));
        assert!((d.c_strong - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_field_examples() {
        let t = Truncation::new(1, 0, 2, 1).unwrap();
        let w = MatrixWeight::constant(1, CMat::diag(&[1.0, 4.0])).unwrap();
        let f = build_family(&w, 2.0, &t, q(), Backend::ExactP2).unwrap();
        assert!((gamma_field(&w, &f, 1, &[0.3]).unwrap() - 1.0).abs() < 1e-12);
        assert!(gamma_field(&w, &f, 1, &[3.0]).is_err());
    }
}
