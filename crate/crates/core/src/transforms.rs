//! Function-level tools on the periodic unit torus: the band-limited φ-transform,
//! periodic Daubechies wavelets, Peetre maximal functions and square functions.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::adops::ADParams;
use crate::dyadic::{CubeId, Truncation};
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMat, C64};
use crate::par;
use crate::reducing::ReducingFamily;
use crate::seqspace::{CoeffSeq, LevelData, LevelField};
use crate::weights::MatrixWeight;

/// Samples of `f: 𝕋^n → ℂ^m` at the lower corners `i/N`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub n: usize,
    pub size: usize,
    pub m: usize,
    /// Per component, row-major over the `N^n` points.
    pub values: Vec<Vec<C64>>,
}

fn log2_exact(size: usize) -> Result<u32> {
    if size < 2 || !size.is_power_of_two() {
        return invalid(format!("grid size must be a power of two ≥ 2, got {size}"));
    }
    Ok(size.trailing_zeros())
}

impl GridFunction {
    pub fn new(n: usize, size: usize, values: Vec<Vec<C64>>) -> Result<Self> {
        if !(1..=2).contains(&n) {
            return invalid("grid functions support n ∈ {1, 2}");
        }
        log2_exact(size)?;
        let pts = size.pow(n as u32);
        if values.is_empty() || values.iter().any(|v| v.len() != pts) {
            return invalid(format!("expected {pts} samples per component"));
        }
        if values.iter().flatten().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return invalid("non-finite sample");
        }
        Ok(GridFunction { n, size, m: values.len(), values })
    }

    pub fn zeros(n: usize, size: usize, m: usize) -> Result<Self> {
        Self::new(n, size, vec![vec![C64::new(0.0, 0.0); size.pow(n as u32)]; m.max(1)])
    }

    pub fn from_fn(n: usize, size: usize, m: usize, f: impl Fn(&[f64]) -> Vec<C64> + Sync + Send) -> Result<Self> {
        let pts = size.pow(n as u32);
        let samples: Vec<Vec<C64>> = par::map_range(pts, |i| f(&point(n, size, i)));
        let values = (0..m).map(|c| samples.iter().map(|v| v[c]).collect()).collect();
        Self::new(n, size, values)
    }

    pub fn points(&self) -> usize {
        self.size.pow(self.n as u32)
    }

    pub fn exponent(&self) -> u32 {
        self.size.trailing_zeros()
    }

    pub fn at(&self, i: usize) -> Vec<C64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    pub fn max_abs_diff(&self, o: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&o.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max)
    }

    /// `∫_𝕋 |f|²` by the grid rule.
    pub fn energy(&self) -> f64 {
        self.values.iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() / self.points() as f64
    }
}

/// Coordinates of grid point `i`.
pub fn point(n: usize, size: usize, i: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let mut rem = i;
    for a in (0..n).rev() {
        out[a] = (rem % size) as f64 / size as f64;
        rem /= size;
    }
    out
}

/// Periodic Euclidean distance on the unit torus.
pub fn torus_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(1.0);
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Signed lattice frequency of FFT index `i`.
fn freq(i: usize, size: usize) -> i64 {
    if i < size / 2 {
        i as i64
    } else {
        i as i64 - size as i64
    }
}

fn freq_vec(n: usize, size: usize, idx: usize) -> Vec<i64> {
    let mut out = vec![0; n];
    let mut rem = idx;
    for a in (0..n).rev() {
        out[a] = freq(rem % size, size);
        rem /= size;
    }
    out
}

/// JSON-constructible grid functions.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// Point-major samples, `m` `[re, im]` pairs per point.
    Samples { n: usize, values: Vec<Vec<(f64, f64)>> },
    /// `Σ c e^{2πi k·x}` over `(k, re, im)` triples.
    FourierModes { n: usize, size: usize, modes: Vec<(Vec<i64>, f64, f64)> },
    /// Periodised Gaussian bump.
    Gaussian { n: usize, size: usize, center: Vec<f64>, width: f64 },
    /// Seeded real noise, optionally projected onto the covered band.
    Noise { n: usize, size: usize, seed: u64, #[serde(default = "one")] m: usize, #[serde(default)] band_limited: bool },
}

fn one() -> usize {
    1
}

impl GridSpec {
    pub fn build(&self) -> Result<GridFunction> {
        match self {
            GridSpec::Samples { n, values } => {
                let pts = values.len();
                let size = (pts as f64).powf(1.0 / *n as f64).round() as usize;
                let m = values.first().map_or(1, |v| v.len());
                let comps = (0..m).map(|c| values.iter().map(|v| C64::new(v[c].0, v[c].1)).collect()).collect();
                GridFunction::new(*n, size, comps)
            }
            GridSpec::FourierModes { n, size, modes } => GridFunction::from_fn(*n, *size, 1, |x| {
                let mut acc = C64::new(0.0, 0.0);
                for (k, re, im) in modes {
                    let ph: f64 = 2.0 * PI * k.iter().zip(x).map(|(a, b)| *a as f64 * b).sum::<f64>();
                    acc += C64::new(*re, *im) * C64::new(ph.cos(), ph.sin());
                }
                vec![acc]
            }),
            GridSpec::Gaussian { n, size, center, width } => {
                if center.len() != *n || !(*width > 0.0) {
                    return invalid("gaussian needs an n-dimensional centre and positive width");
                }
                GridFunction::from_fn(*n, *size, 1, |x| {
                    let d = torus_dist(x, center);
                    vec![C64::new((-d * d / (2.0 * width * width)).exp(), 0.0)]
                })
            }
            GridSpec::Noise { n, size, seed, m, band_limited } => {
                if *band_limited {
                    let w = build_lp_window(*n, *size)?;
                    random_band_limited(&w, *m, *seed)
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                    let pts = size.pow(*n as u32);
                    let vals = (0..*m).map(|_| (0..pts).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect()).collect();
                    GridFunction::new(*n, *size, vals)
                }
            }
        }
    }
}

struct Plans {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plans(size: usize) -> Plans {
    let mut p = FftPlanner::new();
    Plans { fwd: p.plan_fft_forward(size), inv: p.plan_fft_inverse(size) }
}

/// Unnormalised DFT along every axis.
fn fft_nd(data: &mut [C64], n: usize, size: usize, pl: &Plans, inverse: bool) {
    let f = if inverse { &pl.inv } else { &pl.fwd };
    if n == 1 {
        f.process(data);
        return;
    }
    for row in data.chunks_mut(size) {
        f.process(row);
    }
    let mut col = vec![C64::new(0.0, 0.0); size];
    for c in 0..size {
        for r in 0..size {
            col[r] = data[r * size + c];
        }
        f.process(&mut col);
        for r in 0..size {
            data[r * size + c] = col[r];
        }
    }
}

/// `cos²((π/2) log₂ r)` on `[1/2, 2]`, zero elsewhere.
pub fn profile(r: f64) -> f64 {
    if r <= 0.5 || r >= 2.0 {
        return 0.0;
    }
    let c = (0.5 * PI * r.log2()).cos();
    c * c
}

/// Per-level Fourier multipliers `φ̂_j(k) = profile(2π|k|/2^j)` and their duals.
#[derive(Clone, Debug)]
pub struct LPWindow {
    pub n: usize,
    pub size: usize,
    /// Levels `1 ..= J−1`.
    pub levels: Vec<i32>,
    pub phi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    /// Lattice frequencies where `Σ_j |φ̂_j|² > 0`.
    pub covered: Vec<bool>,
}

pub fn build_lp_window(n: usize, size: usize) -> Result<LPWindow> {
    let big_j = log2_exact(size)? as i32;
    if big_j < 3 {
        return invalid("the φ-transform needs N = 2^J with J ≥ 3");
    }
    if !(1..=2).contains(&n) {
        return invalid("n must be 1 or 2");
    }
    let pts = size.pow(n as u32);
    let levels: Vec<i32> = (1..big_j).collect();
    let radius: Vec<f64> = (0..pts)
        .map(|i| 2.0 * PI * freq_vec(n, size, i).iter().map(|&k| (k * k) as f64).sum::<f64>().sqrt())
        .collect();
    let phi: Vec<Vec<f64>> = levels.iter().map(|&j| radius.iter().map(|r| profile(r / 2f64.powi(j))).collect()).collect();
    let denom: Vec<f64> = (0..pts).map(|i| phi.iter().map(|v| v[i] * v[i]).sum()).collect();
    let covered: Vec<bool> = denom.iter().map(|&d| d > 0.0).collect();
    let psi = phi
        .iter()
        .map(|v| v.iter().zip(&denom).map(|(a, d)| if *d > 0.0 { a / d } else { 0.0 }).collect())
        .collect();
    Ok(LPWindow { n, size, levels, phi, psi, covered })
}

impl LPWindow {
    /// `max |Σ_j φ̂_j ψ̂_j − 1|` over the covered band.
    pub fn partition_residual(&self) -> f64 {
        (0..self.covered.len())
            .filter(|&i| self.covered[i])
            .map(|i| (self.phi.iter().zip(&self.psi).map(|(a, b)| a[i] * b[i]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Coefficient window: levels `0 ..= J−1` on `[0,1)^n`.
    pub fn window(&self) -> Truncation {
        Truncation::new(self.n, 0, *self.levels.last().unwrap(), 1).expect("valid window")
    }

    fn level_index(&self, j: i32) -> Option<usize> {
        self.levels.iter().position(|&l| l == j)
    }

    /// Zero the Fourier coefficients outside the covered band.
    pub fn project(&self, f: &GridFunction) -> Result<GridFunction> {
        self.check(f)?;
        let pl = plans(self.size);
        let pts = f.points() as f64;
        let values = f
            .values
            .iter()
            .map(|v| {
                let mut d = v.clone();
                fft_nd(&mut d, self.n, self.size, &pl, false);
                for (c, &cov) in d.iter_mut().zip(&self.covered) {
                    if !cov {
                        *c = C64::new(0.0, 0.0);
                    }
                }
                fft_nd(&mut d, self.n, self.size, &pl, true);
                d.iter().map(|c| c / pts).collect()
            })
            .collect();
        GridFunction::new(f.n, f.size, values)
    }

    fn check(&self, f: &GridFunction) -> Result<()> {
        if f.n != self.n || f.size != self.size {
            return invalid("grid function and window have different shapes");
        }
        Ok(())
    }
}

/// Real random function with independent Gaussian Fourier coefficients on the covered band.
pub fn random_band_limited(w: &LPWindow, m: usize, seed: u64) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = w.size.pow(w.n as u32);
    let pl = plans(w.size);
    let mut values = Vec::with_capacity(m);
    for _ in 0..m {
        let mut spec = vec![C64::new(0.0, 0.0); pts];
        for i in 0..pts {
            if w.covered[i] {
                spec[i] = C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
        }
        // Hermitian symmetrisation keeps samples real
        let mirror = |i: usize| {
            let k = freq_vec(w.n, w.size, i);
            k.iter().fold(0usize, |acc, &c| acc * w.size + ((-c).rem_euclid(w.size as i64) as usize))
        };
        let sym: Vec<C64> = (0..pts).map(|i| 0.5 * (spec[i] + spec[mirror(i)].conj())).collect();
        let mut d = sym;
        fft_nd(&mut d, w.n, w.size, &pl, true);
        values.push(d.iter().map(|c| C64::new(c.re, 0.0)).collect());
    }
    GridFunction::new(w.n, w.size, values)
}

/// `(φ̃_j * f)` on the grid for every window level, in level order.
pub fn level_convolutions(f: &GridFunction, w: &LPWindow) -> Result<Vec<GridFunction>> {
    w.check(f)?;
    let pl = plans(w.size);
    let pts = f.points() as f64;
    let spectra: Vec<Vec<C64>> = f
        .values
        .iter()
        .map(|v| {
            let mut d = v.clone();
            fft_nd(&mut d, w.n, w.size, &pl, false);
            d.iter().map(|c| c / pts).collect()
        })
        .collect();
    let out: Vec<Result<GridFunction>> = par::map_range(w.levels.len(), |li| {
        let pl = plans(w.size);
        let vals = spectra
            .iter()
            .map(|s| {
                let mut d: Vec<C64> = s.iter().zip(&w.phi[li]).map(|(c, p)| c * *p).collect();
                fft_nd(&mut d, w.n, w.size, &pl, true);
                d
            })
            .collect();
        GridFunction::new(w.n, w.size, vals)
    });
    out.into_iter().collect()
}

/// `⟨f, φ_Q⟩ = |Q|^{1/2} (φ̃_j * f)(x_Q)` for all window cubes on levels `1 ..= J−1`.
pub fn phi_analyze(f: &GridFunction, w: &LPWindow) -> Result<CoeffSeq> {
    let conv = level_convolutions(f, w)?;
    let mut out = CoeffSeq::new(f.m);
    for (g, &j) in conv.iter().zip(&w.levels) {
        let side = 1usize << j;
        let stride = w.size / side;
        let scale = 2f64.powf(-0.5 * j as f64 * w.n as f64);
        for c in 0..side.pow(w.n as u32) {
            let k = freq_free_index(w.n, side, c);
            let gi = k.iter().fold(0usize, |acc, &a| acc * w.size + a as usize * stride);
            let v: Vec<C64> = g.values.iter().map(|comp| comp[gi] * scale).collect();
            out.insert(CubeId::new(j, &k), v)?;
        }
    }
    Ok(out)
}

fn freq_free_index(n: usize, side: usize, c: usize) -> Vec<i64> {
    let mut k = vec![0i64; n];
    let mut rem = c;
    for a in (0..n).rev() {
        k[a] = (rem % side) as i64;
        rem /= side;
    }
    k
}

/// `Σ_Q t_Q ψ_Q` on the grid.
pub fn phi_synthesize(tv: &CoeffSeq, w: &LPWindow) -> Result<GridFunction> {
    let pts = w.size.pow(w.n as u32);
    let mut acc = vec![vec![C64::new(0.0, 0.0); pts]; tv.m];
    let pl = plans(w.size);
    for q in tv.entries.keys() {
        if q.dim() != w.n {
            return invalid("coefficient dimension differs from the window");
        }
        if w.level_index(q.j).is_none() || q.k.iter().any(|&k| k < 0 || k >= (1i64 << q.j)) {
            return invalid(format!("coefficient at level {} outside the window", q.j));
        }
    }
    for (li, &j) in w.levels.iter().enumerate() {
        let stride = w.size >> j;
        let scale = 2f64.powf(-0.5 * j as f64 * w.n as f64);
        let entries: Vec<(&CubeId, &Vec<C64>)> = tv.entries.iter().filter(|(q, _)| q.j == j).collect();
        if entries.is_empty() {
            continue;
        }
        for (c, slot) in acc.iter_mut().enumerate() {
            let mut d = vec![C64::new(0.0, 0.0); pts];
            for (q, v) in &entries {
                let gi = q.k.iter().fold(0usize, |a, &k| a * w.size + k as usize * stride);
                d[gi] = v[c];
            }
            fft_nd(&mut d, w.n, w.size, &pl, false);
            for (x, p) in d.iter_mut().zip(&w.psi[li]) {
                *x *= *p * scale;
            }
            fft_nd(&mut d, w.n, w.size, &pl, true);
            for (a, b) in slot.iter_mut().zip(&d) {
                *a += b;
            }
        }
    }
    GridFunction::new(w.n, w.size, acc)
}

/// Direction of a transform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Analyze,
    Synthesize,
}

/// Result of [`phi_transform`].
#[derive(Clone, Debug)]
pub enum PhiOutput {
    Coefficients(CoeffSeq),
    Function(GridFunction),
}

pub fn phi_transform(f: Option<&GridFunction>, w: &LPWindow, direction: Direction, tv: Option<&CoeffSeq>) -> Result<PhiOutput> {
    match direction {
        Direction::Analyze => {
            let f = f.ok_or_else(|| Error::InvalidArgument("analysis needs a grid function".into()))?;
            Ok(PhiOutput::Coefficients(phi_analyze(f, w)?))
        }
        Direction::Synthesize => {
            let tv = tv.ok_or_else(|| Error::InvalidArgument("synthesis needs coefficients".into()))?;
            Ok(PhiOutput::Function(phi_synthesize(tv, w)?))
        }
    }
}

/// Daubechies filters with `k` vanishing moments (`2k` taps).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filter {
    pub k: usize,
}

const DB2: [f64; 4] = [-0.12940952255126038117, 0.22414386804201338103, 0.83651630373780790558, 0.48296291314453414337];
const DB3: [f64; 6] = [
    0.035226291885709536603,
    -0.085441273882026661693,
    -0.1350110200102545887,
    0.4598775021184915701,
    0.80689150931109257649,
    0.332670552950082616,
];
const DB4: [f64; 8] = [
    -0.010597401785069032105,
    0.032883011666885199735,
    0.030841381835560763627,
    -0.18703481171909308408,
    -0.027983769416859854211,
    0.63088076792985890788,
    0.71484657055291564709,
    0.23037781330889650086,
];
const DB6: [f64; 12] = [
    -0.0010773010853084795649,
    0.0047772575109455106396,
    0.00055384220116149613925,
    -0.031582039317486029565,
    0.027522865530305728626,
    0.097501605587323049102,
    -0.12976686756726193556,
    -0.22626469396543982008,
    0.31525035170919762909,
    0.75113390802109535068,
    0.49462389039845308568,
    0.11154074335010946362,
];
const DB8: [f64; 16] = [
    -0.00011747678412476953373,
    0.00067544940645056936637,
    -0.0003917403733769470463,
    -0.0048703529934515743104,
    0.0087460940474057767164,
    0.013981027917398281649,
    -0.044088253930794751507,
    -0.01736930100180754617,
    0.12874742662047845886,
    0.00047248457391328277036,
    -0.28401554296154692652,
    -0.015829105256349305667,
    0.58535468365420671277,
    0.67563073629728980681,
    0.31287159091429997066,
    0.054415842243104009955,
];

static FILTER_CHECK: OnceLock<std::result::Result<(), String>> = OnceLock::new();

/// Orthonormality defect `max_k |Σ_n h_n h_{n+2k} − δ_k|` and `|Σh − √2|`.
pub fn filter_defect(h: &[f64]) -> f64 {
    let l = h.len();
    let mut worst = (h.iter().sum::<f64>() - 2f64.sqrt()).abs();
    for s in (0..l).step_by(2) {
        let v: f64 = (0..l - s).map(|i| h[i] * h[i + s]).sum();
        worst = worst.max((v - if s == 0 { 1.0 } else { 0.0 }).abs());
    }
    worst
}

impl Filter {
    pub fn new(k: usize) -> Result<Self> {
        match k {
            2 | 3 | 4 | 6 | 8 => {}
            _ => return invalid(format!("DB-{k} is not available; use 2, 3, 4, 6 or 8")),
        }
        let check = FILTER_CHECK.get_or_init(|| {
            for k in [2, 3, 4, 6, 8] {
                let d = filter_defect(&Filter { k }.lowpass());
                if d > 1e-14 {
                    return Err(format!("DB-{k} orthonormality defect {d:e}"));
                }
            }
            Ok(())
        });
        check.clone().map_err(Error::Construction)?;
        Ok(Filter { k })
    }

    /// Scaling filter `h`, first tap largest in magnitude order of the usual convention.
    pub fn lowpass(&self) -> Vec<f64> {
        let raw: &[f64] = match self.k {
            2 => &DB2,
            3 => &DB3,
            4 => &DB4,
            6 => &DB6,
            _ => &DB8,
        };
        raw.iter().rev().cloned().collect()
    }

    /// `g_n = (−1)^n h_{L−1−n}`.
    pub fn highpass(&self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l).map(|i| if i % 2 == 0 { h[l - 1 - i] } else { -h[l - 1 - i] }).collect()
    }
}

fn analysis_step(a: &[C64], h: &[f64], g: &[f64]) -> (Vec<C64>, Vec<C64>) {
    let m = a.len();
    let half = m / 2;
    let mut lo = vec![C64::new(0.0, 0.0); half];
    let mut hi = vec![C64::new(0.0, 0.0); half];
    for i in 0..half {
        for (t, (hv, gv)) in h.iter().zip(g).enumerate() {
            let x = a[(2 * i + t) % m];
            lo[i] += x * *hv;
            hi[i] += x * *gv;
        }
    }
    (lo, hi)
}

fn synthesis_step(lo: &[C64], hi: &[C64], h: &[f64], g: &[f64]) -> Vec<C64> {
    let half = lo.len();
    let m = 2 * half;
    let mut a = vec![C64::new(0.0, 0.0); m];
    for i in 0..half {
        for (t, (hv, gv)) in h.iter().zip(g).enumerate() {
            a[(2 * i + t) % m] += lo[i] * *hv + hi[i] * *gv;
        }
    }
    a
}

/// Apply a 1-D step along `axis` of an `side^n` array; returns the (lo, hi) halves in place order.
fn along_axis(data: &[C64], n: usize, side: usize, axis: usize, f: impl Fn(&[C64]) -> Vec<C64>) -> Vec<C64> {
    if n == 1 {
        return f(data);
    }
    let mut out = vec![C64::new(0.0, 0.0); data.len()];
    let mut line = vec![C64::new(0.0, 0.0); side];
    for other in 0..side {
        for i in 0..side {
            line[i] = if axis == 0 { data[i * side + other] } else { data[other * side + i] };
        }
        let r = f(&line);
        for i in 0..side {
            if axis == 0 {
                out[i * side + other] = r[i];
            } else {
                out[other * side + i] = r[i];
            }
        }
    }
    out
}

/// Wavelet coefficients: coarse scaling block and per-`λ` details.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub n: usize,
    pub size: usize,
    pub m: usize,
    pub filter: Filter,
    pub levels: u32,
    /// Scaling coefficients on level `J − levels`.
    pub approx: CoeffSeq,
    /// `λ = 1 ..= 2^n − 1`; λ's bit `a` set means the wavelet factor along axis `n−1−a`.
    pub details: Vec<CoeffSeq>,
}

impl WaveletCoeffs {
    pub fn energy(&self) -> f64 {
        let s = |c: &CoeffSeq| c.entries.values().flatten().map(|z| z.norm_sqr()).sum::<f64>();
        s(&self.approx) + self.details.iter().map(s).sum::<f64>()
    }
}

/// Index of entry `k` in the `(2·side)^n` quadrant layout for subband `sel`.
fn quadrant_index(n: usize, side: usize, k: &[i64], sel: usize) -> usize {
    let full = 2 * side;
    k.iter().enumerate().fold(0usize, |acc, (a, &kk)| {
        let bit = (sel >> (n - 1 - a)) & 1;
        acc * full + kk as usize + bit * side
    })
}

fn pack(n: usize, side: usize, j: i32, data: &[Vec<C64>], sel: usize, into: &mut CoeffSeq) -> Result<()> {
    for c in 0..side.pow(n as u32) {
        let k = freq_free_index(n, side, c);
        let idx = quadrant_index(n, side, &k, sel);
        into.insert(CubeId::new(j, &k), data.iter().map(|v| v[idx]).collect())?;
    }
    Ok(())
}

/// One periodic analysis level for `side^n` data: quadrant layout (lo first along each axis).
fn analyze_level(d: &[C64], n: usize, side: usize, h: &[f64], g: &[f64]) -> Vec<C64> {
    let step = |line: &[C64]| {
        let (lo, hi) = analysis_step(line, h, g);
        lo.into_iter().chain(hi).collect::<Vec<_>>()
    };
    let mut cur = d.to_vec();
    for axis in 0..n {
        cur = along_axis(&cur, n, side, axis, step);
    }
    cur
}

fn synthesize_level(d: &[C64], n: usize, side: usize, h: &[f64], g: &[f64]) -> Vec<C64> {
    let step = |line: &[C64]| {
        let half = line.len() / 2;
        synthesis_step(&line[..half], &line[half..], h, g)
    };
    let mut cur = d.to_vec();
    for axis in (0..n).rev() {
        cur = along_axis(&cur, n, side, axis, step);
    }
    cur
}

fn sub_block(d: &[C64], n: usize, full: usize, side: usize) -> Vec<C64> {
    if n == 1 {
        return d[..side].to_vec();
    }
    (0..side * side).map(|i| d[(i / side) * full + i % side]).collect()
}

fn put_block(dst: &mut [C64], src: &[C64], n: usize, full: usize, side: usize) {
    if n == 1 {
        dst[..side].copy_from_slice(src);
        return;
    }
    for i in 0..side * side {
        dst[(i / side) * full + i % side] = src[i];
    }
}

/// Periodic orthonormal DWT with `levels` steps.
pub fn dwt_analyze(f: &GridFunction, filter: Filter, levels: u32) -> Result<WaveletCoeffs> {
    let big_j = f.exponent();
    if levels == 0 || levels > big_j {
        return invalid(format!("levels must lie in 1..={big_j}"));
    }
    let h = filter.lowpass();
    let g = filter.highpass();
    if h.len() > f.size {
        return invalid("filter longer than the grid");
    }
    let n = f.n;
    let norm = (f.points() as f64).powf(-0.5);
    let mut data: Vec<Vec<C64>> = f.values.iter().map(|v| v.iter().map(|c| c * norm).collect()).collect();
    let mut details = vec![CoeffSeq::new(f.m); (1 << n) - 1];
    let mut side = f.size;
    for step in 0..levels {
        let j = big_j as i32 - step as i32 - 1;
        let half = side / 2;
        for comp in data.iter_mut() {
            let block = sub_block(comp, n, f.size, side);
            let out = analyze_level(&block, n, side, &h, &g);
            put_block(comp, &out, n, f.size, side);
        }
        let blocks: Vec<Vec<C64>> = data.iter().map(|c| sub_block(c, n, f.size, side)).collect();
        for (lam, seq) in details.iter_mut().enumerate() {
            pack(n, half, j, &blocks, lam + 1, seq)?;
        }
        side = half;
    }
    let mut approx = CoeffSeq::new(f.m);
    let blocks: Vec<Vec<C64>> = data.iter().map(|c| sub_block(c, n, f.size, 2 * side)).collect();
    pack(n, side, big_j as i32 - levels as i32, &blocks, 0, &mut approx)?;
    Ok(WaveletCoeffs { n, size: f.size, m: f.m, filter, levels, approx, details })
}

/// Inverse of [`dwt_analyze`].
pub fn dwt_synthesize(c: &WaveletCoeffs) -> Result<GridFunction> {
    let n = c.n;
    let h = c.filter.lowpass();
    let g = c.filter.highpass();
    let pts = c.size.pow(n as u32);
    let mut data = Vec::new();
    let mut side = c.size >> c.levels;
    let put = |data: &mut Vec<Vec<C64>>, seq: &CoeffSeq, sel: usize, side: usize, level: i32| {
        for (q, v) in seq.entries.iter().filter(|(q, _)| q.j == level) {
            let idx = quadrant_index(n, side, &q.k, sel);
            for (comp, val) in data.iter_mut().zip(v) {
                comp[idx] = *val;
            }
        }
    };
    let mut blocks: Vec<Vec<C64>> = vec![vec![C64::new(0.0, 0.0); (2 * side).pow(n as u32)]; c.m];
    put(&mut blocks, &c.approx, 0, side, side.trailing_zeros() as i32);
    for _ in 0..c.levels {
        let full = 2 * side;
        let level = side.trailing_zeros() as i32;
        for (lam, seq) in c.details.iter().enumerate() {
            put(&mut blocks, seq, lam + 1, side, level);
        }
        let next: Vec<Vec<C64>> = blocks.iter().map(|b| synthesize_level(b, n, full, &h, &g)).collect();
        side = full;
        if side < c.size {
            blocks = next
                .into_iter()
                .map(|b| {
                    let mut z = vec![C64::new(0.0, 0.0); (2 * side).pow(n as u32)];
                    put_block(&mut z, &b, n, 2 * side, side);
                    z
                })
                .collect();
        } else {
            data = next;
        }
    }
    let norm = (pts as f64).sqrt();
    let values = data.into_iter().map(|v| v.into_iter().map(|z| z * norm).collect()).collect();
    GridFunction::new(n, c.size, values)
}

/// Transformer evaluated at a grid point.
#[derive(Clone, Debug)]
pub enum PointMode<'a> {
    Identity,
    /// `W^{1/p}(x)`.
    Matrix { w: &'a MatrixWeight, p: f64 },
    /// `A_Q` for the level-`j` cube containing `x`.
    Averaging(&'a ReducingFamily),
}

/// Matrices per grid point (matrix mode) or per level-`j` cube (averaging mode).
enum Evaluated<'a> {
    Identity,
    PerPoint(Vec<CMat>),
    PerCube(&'a ReducingFamily),
}

fn evaluate<'a>(mode: &PointMode<'a>, n: usize, size: usize) -> Result<Evaluated<'a>> {
    match mode {
        PointMode::Identity => Ok(Evaluated::Identity),
        PointMode::Matrix { w, p } => {
            let pts = size.pow(n as u32);
            let mats: Vec<Option<CMat>> = par::map_range(pts, |i| w.power(&point(n, size, i), 1.0 / p));
            mats.into_iter()
                .collect::<Option<Vec<_>>>()
                .map(Evaluated::PerPoint)
                .ok_or_else(|| Error::Domain("weight singular at a grid point".into()))
        }
        PointMode::Averaging(f) => Ok(Evaluated::PerCube(f)),
    }
}

fn matrix_at<'a>(ev: &'a Evaluated<'a>, n: usize, size: usize, j: i32, i: usize) -> Option<&'a CMat> {
    match ev {
        Evaluated::Identity => None,
        Evaluated::PerPoint(v) => Some(&v[i]),
        Evaluated::PerCube(f) => {
            let x = point(n, size, i);
            let s = 2f64.powi(j);
            let q = CubeId::new(j, &x.iter().map(|v| (v * s + 1e-9).floor() as i64).collect::<Vec<_>>());
            f.get(&q)
        }
    }
}

fn apply(m: Option<&CMat>, v: &[C64]) -> f64 {
    match m {
        None => crate::seqspace::vec_norm(v),
        Some(a) => a.norm_of_product(v),
    }
}

/// Precomputed samples of one level.
struct LevelCtx<'a> {
    j: i32,
    s: f64,
    n: usize,
    size: usize,
    coords: &'a [Vec<f64>],
    vals: Vec<Vec<C64>>,
    ev: &'a Evaluated<'a>,
}

impl LevelCtx<'_> {
    fn dist(&self, x: usize, y: usize) -> f64 {
        torus_dist(&self.coords[x], &self.coords[y])
    }

    fn matrix(&self, x: usize) -> Option<&CMat> {
        matrix_at(self.ev, self.n, self.size, self.j, x)
    }
}

/// `sup_y |M(x) F_j(y)| / (1 + 2^j d(x,y))^η` for every grid point and level.
pub fn peetre_maximal(fields: &[GridFunction], levels: &[i32], eta: f64, mode: &PointMode) -> Result<Vec<Vec<f64>>> {
    if !(eta > 0.0) {
        return invalid("η must be positive");
    }
    per_level(fields, levels, mode, |c, x| {
        let a = c.matrix(x);
        (0..c.vals.len())
            .map(|y| apply(a, &c.vals[y]) / (1.0 + c.s * c.dist(x, y)).powf(eta))
            .fold(0.0, f64::max)
    })
}

/// `|M(x) F_j(x)|` for every grid point and level.
pub fn weighted_magnitudes(fields: &[GridFunction], levels: &[i32], mode: &PointMode) -> Result<Vec<Vec<f64>>> {
    per_level(fields, levels, mode, |c, x| apply(c.matrix(x), &c.vals[x]))
}

/// Square-function variants.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SquareKind {
    /// Average over the closed ball `d(x,y) ≤ α 2^{-j}`.
    Lusin { alpha: f64, r: f64 },
    /// `(2^{jn} N^{-n} Σ_y |·|^r (1+2^j d)^{-λr})^{1/r}`.
    Gstar { r: f64, lambda: f64 },
}

pub fn square_functions(fields: &[GridFunction], levels: &[i32], kind: SquareKind, mode: &PointMode) -> Result<Vec<Vec<f64>>> {
    match kind {
        SquareKind::Lusin { alpha, r } if !(alpha > 0.0 && r > 0.0) => return invalid("α and r must be positive"),
        SquareKind::Gstar { r, lambda } if !(lambda > 0.0 && r > 0.0) => return invalid("λ and r must be positive"),
        _ => {}
    }
    per_level(fields, levels, mode, |c, x| {
        let a = c.matrix(x);
        let pts = c.vals.len();
        match kind {
            SquareKind::Lusin { alpha, r } => {
                let rad = alpha / c.s + 1e-12;
                let inside = (0..pts).filter(|&y| c.dist(x, y) <= rad);
                if r.is_infinite() {
                    inside.map(|y| apply(a, &c.vals[y])).fold(0.0, f64::max)
                } else {
                    let (sum, cnt) = inside.fold((0.0, 0usize), |(s, k), y| (s + apply(a, &c.vals[y]).powf(r), k + 1));
                    (sum / cnt as f64).powf(1.0 / r)
                }
            }
            SquareKind::Gstar { r, lambda } => {
                let term = |y: usize| (apply(a, &c.vals[y]), 1.0 + c.s * c.dist(x, y));
                if r.is_infinite() {
                    (0..pts).map(|y| {
                        let (v, d) = term(y);
                        v / d.powf(lambda)
                    })
                    .fold(0.0, f64::max)
                } else {
                    let sum: f64 = (0..pts)
                        .map(|y| {
                            let (v, d) = term(y);
                            v.powf(r) / d.powf(lambda * r)
                        })
                        .sum();
                    (sum * c.s.powi(c.n as i32) / pts as f64).powf(1.0 / r)
                }
            }
        }
    })
}

/// Number of grid points in the closed ball of radius `α 2^{-j}` (independent of the centre).
pub fn lusin_count(n: usize, size: usize, j: i32, alpha: f64) -> usize {
    let rad = alpha / 2f64.powi(j);
    let o = vec![0.0; n];
    (0..size.pow(n as u32)).filter(|&y| torus_dist(&o, &point(n, size, y)) <= rad + 1e-12).count()
}

fn per_level(
    fields: &[GridFunction],
    levels: &[i32],
    mode: &PointMode,
    f: impl Fn(&LevelCtx, usize) -> f64 + Sync + Send,
) -> Result<Vec<Vec<f64>>> {
    if fields.len() != levels.len() || fields.is_empty() {
        return invalid("one field per level is required");
    }
    let (n, size) = (fields[0].n, fields[0].size);
    if fields.iter().any(|g| g.n != n || g.size != size) {
        return invalid("fields have different shapes");
    }
    if n == 2 && size > 128 {
        return invalid("two-dimensional maximal functions are capped at N = 128");
    }
    let ev = evaluate(mode, n, size)?;
    let pts = size.pow(n as u32);
    let coords: Vec<Vec<f64>> = (0..pts).map(|i| point(n, size, i)).collect();
    let mut out = Vec::with_capacity(fields.len());
    for (fj, &j) in fields.iter().zip(levels) {
        let ctx = LevelCtx { j, s: 2f64.powi(j), n, size, coords: &coords, vals: (0..pts).map(|i| fj.at(i)).collect(), ev: &ev };
        out.push(par::map_range(pts, |i| f(&ctx, i)));
    }
    Ok(out)
}

/// Per-level grid values as a [`LevelField`] on `t` (grid points grouped by finest cell).
pub fn grid_field(values: &[Vec<f64>], levels: &[i32], scale: impl Fn(i32) -> f64, t: &Truncation, size: usize) -> Result<LevelField> {
    let layout = t.layout();
    let n = t.n;
    if t.j_max < 0 || (1usize << t.j_max) > size || t.root_extent != 1 || t.root_lo() != 0 {
        return invalid("window must tile the torus with cells no finer than the grid");
    }
    let sub = size >> t.j_max;
    let npc = sub.pow(n as u32);
    // grid index of each (cell, node)
    let map: Vec<usize> = (0..layout.cells())
        .flat_map(|c| {
            let q = layout.cube_of_block(t.j_max, c);
            (0..npc).map(move |a| {
                let off = freq_free_index(n, sub, a);
                q.k.iter().zip(off).fold(0usize, |acc, (&k, o)| acc * size + k as usize * sub + o as usize)
            })
        })
        .collect();
    let mut field = LevelField::zero(t, npc);
    for (vals, &j) in values.iter().zip(levels) {
        if j < t.j_min || j > t.j_max {
            return invalid(format!("level {j} outside the window"));
        }
        let s = scale(j);
        field.levels[(j - t.j_min) as usize] = LevelData::PerNode(map.iter().map(|&g| vals[g] * s).collect());
    }
    Ok(field)
}

/// Same-level periodic envelope `u^{DEF}` with torus distance.
fn periodic_entry(q: &CubeId, r: &CubeId, p: ADParams) -> f64 {
    let (xq, xr) = (q.corner(), r.corner());
    let l = q.edge().max(r.edge());
    let sep = 1.0 + torus_dist(&xq, &xr) / l;
    let (lq, lr) = (q.edge(), r.edge());
    let size = if lq <= lr { (lq / lr).powf(p.e) } else { (lr / lq).powf(p.f) };
    sep.powf(-p.d) * size
}

/// Discrete 1-D wavelets `θ_Q` of `filter` for detail levels of a `levels`-step DWT on `N = 2^big_j`.
fn wavelet_atoms(filter: Filter, big_j: u32, levels: u32) -> Result<Vec<(CubeId, Vec<C64>)>> {
    let size = 1usize << big_j;
    let zero = GridFunction::zeros(1, size, 1)?;
    let template = dwt_analyze(&zero, filter, levels)?;
    let keys: Vec<CubeId> = template.details[0].entries.keys().cloned().collect();
    let out: Vec<Result<(CubeId, Vec<C64>)>> = par::map_slice(&keys, |q| {
        let mut c = template.clone();
        c.details[0].entries.insert(q.clone(), vec![C64::new(1.0, 0.0)]);
        let g = dwt_synthesize(&c)?;
        Ok((q.clone(), g.values[0].clone()))
    });
    out.into_iter().collect()
}

/// `max |⟨θ_Q, θ_R⟩| / u^{DEF}_{Q,R}` over the detail atoms of a `levels`-step DWT on `N = 2^big_j`.
pub fn wavelet_gram_check(filter: Filter, levels: u32, p: ADParams, big_j: u32) -> Result<f64> {
    wavelet_cross_gram(filter, filter, big_j, levels, p)
}

/// As [`wavelet_gram_check`] with atoms of two different filters.
pub fn wavelet_cross_gram(f1: Filter, f2: Filter, big_j: u32, levels: u32, p: ADParams) -> Result<f64> {
    let a = wavelet_atoms(f1, big_j, levels)?;
    let b = if f1 == f2 { a.clone() } else { wavelet_atoms(f2, big_j, levels)? };
    let pts = (1usize << big_j) as f64;
    let ratios = par::map_slice(&a, |(q, u)| {
        b.iter()
            .map(|(r, v)| {
                let ip: C64 = u.iter().zip(v).map(|(x, y)| x * y.conj()).sum::<C64>() / pts;
                ip.norm() / periodic_entry(q, r, p)
            })
            .fold(0.0, f64::max)
    });
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_partition_and_support() {
        for size in [128, 256, 512] {
            let w = build_lp_window(1, size).unwrap();
            assert!(w.partition_residual() < 1e-12);
            let f = random_band_limited(&w, 1, size as u64).unwrap();
            let g = phi_synthesize(&phi_analyze(&f, &w).unwrap(), &w).unwrap();
            assert!(f.max_abs_diff(&g) < 1e-8);
        }
        let w = build_lp_window(1, 256).unwrap();
        for a in 0..w.levels.len() {
            for b in a + 2..w.levels.len() {
                assert!(w.phi[a].iter().zip(&w.phi[b]).all(|(x, y)| x * y == 0.0));
            }
        }
        assert!(w.phi.iter().flatten().all(|&v| v >= 0.0));
        assert!(build_lp_window(1, 4).is_err());
    }

    #[test]
    fn phi_round_trip_and_mode_locality() {
        let w = build_lp_window(1, 256).unwrap();
        let f = random_band_limited(&w, 1, 7).unwrap();
        let c = phi_analyze(&f, &w).unwrap();
        let g = phi_synthesize(&c, &w).unwrap();
        assert!(f.max_abs_diff(&g) < 1e-8, "{}", f.max_abs_diff(&g));
        let z = GridFunction::zeros(1, 256, 1).unwrap();
        assert!(phi_analyze(&z, &w).unwrap().entries.values().all(|v| v[0].norm() == 0.0));
        // single mode with 2π|k| = 2^5
        let k = (32.0 / (2.0 * PI)).round() as i64;
        let f = GridSpec::FourierModes { n: 1, size: 256, modes: vec![(vec![k], 1.0, 0.0)] }.build().unwrap();
        let c = phi_analyze(&f, &w).unwrap();
        let jk = (2.0 * PI * k as f64).log2();
        for (q, v) in &c.entries {
            if (q.j as f64 - jk).abs() >= 1.0 {
                assert!(v[0].norm() < 1e-12, "level {} {}", q.j, v[0].norm());
            }
        }
    }

    #[test]
    fn phi_round_trip_2d() {
        let w = build_lp_window(2, 32).unwrap();
        let f = random_band_limited(&w, 2, 3).unwrap();
        let g = phi_synthesize(&phi_analyze(&f, &w).unwrap(), &w).unwrap();
        assert!(f.max_abs_diff(&g) < 1e-8);
    }

    #[test]
    fn dwt_examples() {
        for k in [2, 3, 4, 6, 8] {
            assert!(filter_defect(&Filter::new(k).unwrap().lowpass()) < 1e-14);
        }
        let filt = Filter::new(4).unwrap();
        let c = GridFunction::from_fn(1, 64, 1, |_| vec![C64::new(2.0, 0.0)]).unwrap();
        let w = dwt_analyze(&c, filt, 4).unwrap();
        assert!(w.details[0].entries.values().all(|v| v[0].norm() < 1e-12));
        let f = GridSpec::Noise { n: 1, size: 512, seed: 3, m: 2, band_limited: false }.build().unwrap();
        let w = dwt_analyze(&f, filt, 6).unwrap();
        assert!((w.energy() - f.energy()).abs() < 1e-10);
        let g = dwt_synthesize(&w).unwrap();
        assert!(f.max_abs_diff(&g) < 1e-10);
        assert!(Filter::new(5).is_err());
        let short = GridFunction::zeros(1, 4, 1).unwrap();
        assert!(dwt_analyze(&short, Filter::new(8).unwrap(), 1).is_err());
    }

    #[test]
    fn dwt_2d_round_trip() {
        let f = GridSpec::Noise { n: 2, size: 32, seed: 1, m: 1, band_limited: false }.build().unwrap();
        let w = dwt_analyze(&f, Filter::new(2).unwrap(), 3).unwrap();
        assert_eq!(w.details.len(), 3);
        assert!((w.energy() - f.energy()).abs() < 1e-10);
        assert!(f.max_abs_diff(&dwt_synthesize(&w).unwrap()) < 1e-10);
        let c = GridFunction::from_fn(2, 32, 1, |_| vec![C64::new(1.0, 0.0)]).unwrap();
        let w = dwt_analyze(&c, Filter::new(3).unwrap(), 3).unwrap();
        assert!(w.details.iter().all(|d| d.entries.values().all(|v| v[0].norm() < 1e-12)));
    }

    #[test]
    fn peetre_and_square_examples() {
        let c = GridFunction::from_fn(1, 32, 1, |_| vec![C64::new(3.0, 0.0)]).unwrap();
        let p = peetre_maximal(std::slice::from_ref(&c), &[0], 1.0, &PointMode::Identity).unwrap();
        assert!(p[0].iter().all(|v| (v - 3.0).abs() < 1e-15));
        let l = square_functions(std::slice::from_ref(&c), &[2], SquareKind::Lusin { alpha: 0.5, r: 2.0 }, &PointMode::Identity).unwrap();
        assert!(l[0].iter().all(|v| (v - 3.0).abs() < 1e-14));
        let mut spike = GridFunction::zeros(1, 32, 1).unwrap();
        spike.values[0][5] = C64::new(2.0, 0.0);
        let p = peetre_maximal(&[spike.clone()], &[0], 1.0, &PointMode::Identity).unwrap();
        for (i, v) in p[0].iter().enumerate() {
            let d = torus_dist(&point(1, 32, i), &point(1, 32, 5));
            assert!((v - 2.0 / (1.0 + d)).abs() < 1e-15);
        }
    }

    #[test]
    fn gram_same_family_is_identity() {
        let f = Filter::new(4).unwrap();
        let p = ADParams::new(2.0, 1.5, 1.5);
        for big_j in [6, 7, 8] {
            let r = wavelet_gram_check(f, 4, p, big_j).unwrap();
            assert!((r - 1.0).abs() < 1e-10, "{r}");
        }
        let r = wavelet_cross_gram(f, Filter::new(2).unwrap(), 7, 4, p).unwrap();
        assert!(r.is_finite() && r > 0.0);
    }

    #[test]
    fn gstar_matches_direct_sum() {
        let f = GridSpec::Noise { n: 1, size: 64, seed: 11, m: 1, band_limited: false }.build().unwrap();
        let (r, lambda, j) = (2.0, 1.5, 3);
        let g = square_functions(std::slice::from_ref(&f), &[j], SquareKind::Gstar { r, lambda }, &PointMode::Identity).unwrap();
        for x in 0..64usize {
            let mut acc = 0.0;
            for y in 0..64usize {
                let d = ((x as f64 - y as f64).abs()).min(64.0 - (x as f64 - y as f64).abs()) / 64.0;
                acc += f.values[0][y].norm().powi(2) * (1.0 + 8.0 * d).powf(-lambda * r);
            }
            let want = (acc * 8.0 / 64.0).sqrt();
            assert!((g[0][x] - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn lusin_below_gstar_and_peetre_dominates() {
        let w = build_lp_window(1, 128).unwrap();
        let f = random_band_limited(&w, 1, 5).unwrap();
        let conv = level_convolutions(&f, &w).unwrap();
        let (alpha, r, lambda) = (0.5, 2.0, 1.0);
        let s = square_functions(&conv, &w.levels, SquareKind::Lusin { alpha, r }, &PointMode::Identity).unwrap();
        let g = square_functions(&conv, &w.levels, SquareKind::Gstar { r, lambda }, &PointMode::Identity).unwrap();
        let p = peetre_maximal(&conv, &w.levels, 1.0, &PointMode::Identity).unwrap();
        for l in 0..w.levels.len() {
            for i in 0..128 {
                assert!(s[l][i] <= (1.0 + alpha).powf(lambda) * g[l][i] * (1.0 + 1e-12));
                assert!(p[l][i] >= conv[l].values[0][i].norm());
            }
        }
    }
}
