//! Matrix weights, their fractional powers on quadrature grids, and the
//! exp-log characteristics built from them.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{box_nodes, CubeFilter, CubeId, Layout, Truncation};
use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh, matrix_power, CMat, C64};
use crate::par;

/// Midpoint tensor rule with `g` nodes per axis in every finest cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub g: usize,
}

impl QuadratureSpec {
    pub fn new(g: usize) -> Result<Self> {
        if g == 0 {
            return invalid("quadrature needs at least one node per axis");
        }
        Ok(QuadratureSpec { g })
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { g: 4 }
    }
}

type WeightFn = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Identity,
    Constant { mat: CMat },
    /// `diag(c_i |x - center|^{a_i})`
    DiagPower { coef: Vec<f64>, exps: Vec<f64>, center: Vec<f64> },
    Custom(WeightFn),
}

/// An `m×m` Hermitian positive definite field on `ℝ^n`.
#[derive(Clone)]
pub struct MatrixWeight {
    pub m: usize,
    pub n: usize,
    pub label: String,
    pub singular_set: Vec<Vec<f64>>,
    /// All values are real symmetric.
    pub real: bool,
    kind: Kind,
}

impl fmt::Debug for MatrixWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixWeight")
            .field("m", &self.m)
            .field("n", &self.n)
            .field("label", &self.label)
            .finish()
    }
}

/// JSON-nameable weight presets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightPreset {
    Identity { m: usize },
    /// Constant real symmetric matrix, row-major.
    Constant { m: usize, entries: Vec<f64> },
    /// `|x - center|^alpha`, scalar.
    ScalarPower { alpha: f64, #[serde(default)] center: Option<Vec<f64>> },
    /// `diag(|x - center|^{a_1}, …)`.
    DiagPower { exps: Vec<f64>, #[serde(default)] center: Option<Vec<f64>> },
    /// `|x - center|^alpha · I_m`.
    ScaledIdentity { m: usize, alpha: f64, #[serde(default)] center: Option<Vec<f64>> },
    /// `R(θ) diag(|x|^a, |x|^b) R(θ)^T` with `θ = x_1`.
    RotatedDiagPower { a: f64, b: f64 },
}

impl WeightPreset {
    pub const NAMES: [&'static str; 6] = ["identity", "constant", "diag-power", "scaled-identity", "torus-diag", "rotated"];

    /// Built-in presets by name.
    pub fn named(name: &str) -> Result<Self> {
        Ok(match name {
            "identity" => WeightPreset::Identity { m: 2 },
            "constant" => WeightPreset::Constant { m: 2, entries: vec![1.0, 0.0, 0.0, 4.0] },
            "diag-power" => WeightPreset::DiagPower { exps: vec![-0.5, -0.25], center: None },
            "scaled-identity" => WeightPreset::ScaledIdentity { m: 2, alpha: -0.5, center: None },
            "torus-diag" => WeightPreset::DiagPower { exps: vec![-0.5, 0.0], center: Some(vec![1.0 / 3.0]) },
            "rotated" => WeightPreset::RotatedDiagPower { a: -0.5, b: 0.5 },
            _ => return invalid(format!("unknown weight preset `{name}`; known: {}", Self::NAMES.join(", "))),
        })
    }

    pub fn build(&self, n: usize) -> Result<MatrixWeight> {
        match self {
            WeightPreset::Identity { m } => Ok(MatrixWeight::identity(n, *m)),
            WeightPreset::Constant { m, entries } => {
                if entries.len() != m * m {
                    return invalid("constant weight needs m*m entries");
                }
                MatrixWeight::constant(n, CMat::from_real(*m, entries))
            }
            WeightPreset::ScalarPower { alpha, center } => {
                MatrixWeight::diag_power(n, &[*alpha], center.clone())
            }
            WeightPreset::DiagPower { exps, center } => MatrixWeight::diag_power(n, exps, center.clone()),
            WeightPreset::ScaledIdentity { m, alpha, center } => {
                MatrixWeight::diag_power(n, &vec![*alpha; *m], center.clone())
            }
            WeightPreset::RotatedDiagPower { a, b } => Ok(MatrixWeight::rotated_diag_power(n, *a, *b)),
        }
    }
}

impl MatrixWeight {
    pub fn identity(n: usize, m: usize) -> Self {
        MatrixWeight {
            m,
            n,
            label: format!("identity(m={m})"),
            singular_set: vec![],
            real: true,
            kind: Kind::Identity,
        }
    }

    pub fn constant(n: usize, mat: CMat) -> Result<Self> {
        if mat.hermitian_defect() > 1e-12 {
            return Err(Error::Domain("constant weight is not Hermitian".into()));
        }
        let e = eigh(&mat)?;
        if e.values[0] <= 0.0 {
            return Err(Error::Domain("constant weight is not positive definite".into()));
        }
        Ok(MatrixWeight {
            m: mat.m,
            n,
            label: "constant".into(),
            singular_set: vec![],
            real: mat.is_real(),
            kind: Kind::Constant { mat },
        })
    }

    /// `diag(|x - c|^{a_i})`; every exponent must exceed `-n` for local integrability.
    pub fn diag_power(n: usize, exps: &[f64], center: Option<Vec<f64>>) -> Result<Self> {
        if exps.is_empty() {
            return invalid("at least one exponent required");
        }
        if exps.iter().any(|&a| a <= -(n as f64) || !a.is_finite()) {
            return invalid(format!("power exponents must lie in (-{n}, ∞)"));
        }
        let center = center.unwrap_or_else(|| vec![0.0; n]);
        if center.len() != n {
            return invalid("center dimension mismatch");
        }
        let label = if exps.len() == 1 {
            format!("|x|^{}", exps[0])
        } else {
            format!("diag({})", exps.iter().map(|a| format!("|x|^{a}")).collect::<Vec<_>>().join(", "))
        };
        let singular = if exps.iter().all(|&a| a == 0.0) { vec![] } else { vec![center.clone()] };
        Ok(MatrixWeight {
            m: exps.len(),
            n,
            label,
            singular_set: singular,
            real: true,
            kind: Kind::DiagPower { coef: vec![1.0; exps.len()], exps: exps.to_vec(), center },
        })
    }

    pub fn rotated_diag_power(n: usize, a: f64, b: f64) -> Self {
        let f = move |x: &[f64]| {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let (s, c) = x[0].sin_cos();
            let (da, db) = (r.powf(a), r.powf(b));
            CMat::from_real(2, &[c * c * da + s * s * db, c * s * (da - db), c * s * (da - db), s * s * da + c * c * db])
        };
        MatrixWeight {
            m: 2,
            n,
            label: format!("rotated diag(|x|^{a}, |x|^{b})"),
            singular_set: vec![vec![0.0; n]],
            real: true,
            kind: Kind::Custom(Arc::new(f)),
        }
    }

    /// Arbitrary closed-form weight.
    pub fn custom(
        n: usize,
        m: usize,
        label: impl Into<String>,
        singular_set: Vec<Vec<f64>>,
        real: bool,
        f: impl Fn(&[f64]) -> CMat + Send + Sync + 'static,
    ) -> Self {
        MatrixWeight { m, n, label: label.into(), singular_set, real, kind: Kind::Custom(Arc::new(f)) }
    }

    /// `c·W` for scalar `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.label = format!("{c}·{}", self.label);
        out.kind = match &self.kind {
            Kind::Identity => Kind::Constant { mat: CMat::identity(self.m).scale(c) },
            Kind::Constant { mat } => Kind::Constant { mat: mat.scale(c) },
            Kind::DiagPower { coef, exps, center } => Kind::DiagPower {
                coef: coef.iter().map(|v| v * c).collect(),
                exps: exps.clone(),
                center: center.clone(),
            },
            Kind::Custom(f) => {
                let f = f.clone();
                Kind::Custom(Arc::new(move |x: &[f64]| f(x).scale(c)))
            }
        };
        out
    }

    pub fn is_singular_at(&self, x: &[f64]) -> bool {
        self.singular_set.iter().any(|s| s.iter().zip(x).all(|(a, b)| a == b))
    }

    /// Whether every value is diagonal (enables cheap products).
    pub fn is_diagonal(&self) -> bool {
        matches!(self.kind, Kind::Identity | Kind::DiagPower { .. })
            || matches!(&self.kind, Kind::Constant { mat } if mat.is_diagonal())
    }

    /// `W(x)`, or `None` on the singular set.
    pub fn eval(&self, x: &[f64]) -> Option<CMat> {
        self.power(x, 1.0)
    }

    /// `W(x)^α`, or `None` on the singular set.
    pub fn power(&self, x: &[f64], alpha: f64) -> Option<CMat> {
        if self.is_singular_at(x) {
            return None;
        }
        match &self.kind {
            Kind::Identity => Some(CMat::identity(self.m)),
            Kind::Constant { mat } => matrix_power(mat, alpha).ok(),
            Kind::DiagPower { coef, exps, center } => {
                let r = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let vals: Vec<f64> = coef
                    .iter()
                    .zip(exps)
                    .map(|(c, e)| c.powf(alpha) * r.powf(e * alpha))
                    .collect();
                if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
                    Some(CMat::diag(&vals))
                } else {
                    None
                }
            }
            Kind::Custom(f) => {
                let w = f(x);
                if alpha == 1.0 {
                    Some(w)
                } else {
                    matrix_power(&w, alpha).ok()
                }
            }
        }
    }

    /// `‖W(x)‖`.
    pub fn norm_at(&self, x: &[f64]) -> Option<f64> {
        self.eval(x).map(|w| w.op_norm())
    }

    /// Power exponents when `W` is a diagonal power weight (zeros for constants).
    pub fn diag_exponents(&self) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::Identity | Kind::Constant { .. } => Some(vec![0.0]),
            Kind::DiagPower { exps, .. } => Some(exps.clone()),
            Kind::Custom(_) => None,
        }
    }

    /// `(coefficients, exponents, centre)` of a diagonal power weight.
    pub fn diag_power_parts(&self) -> Option<(&[f64], &[f64], &[f64])> {
        match &self.kind {
            Kind::DiagPower { coef, exps, center } => Some((coef, exps, center)),
            _ => None,
        }
    }

    /// `∫_a^{a+h} ‖W‖` in closed form where available (`n = 1`).
    pub fn norm_integral_1d(&self, a: f64, h: f64) -> Option<f64> {
        if self.n != 1 {
            return None;
        }
        match &self.kind {
            Kind::Identity => Some(h),
            Kind::Constant { mat } => Some(mat.op_norm() * h),
            Kind::DiagPower { coef, exps, center } => {
                let c = coef[0];
                if coef.iter().any(|&v| v != c) {
                    return None;
                }
                let lo = exps.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                // ‖W‖ = c·r^lo for r < 1 and c·r^hi for r ≥ 1
                let prim = |r: f64| {
                    if r <= 1.0 {
                        r.powf(lo + 1.0) / (lo + 1.0)
                    } else {
                        1.0 / (lo + 1.0) + (r.powf(hi + 1.0) - 1.0) / (hi + 1.0)
                    }
                };
                let (u, v) = (a - center[0], a + h - center[0]);
                let s = if u >= 0.0 {
                    prim(v) - prim(u)
                } else if v <= 0.0 {
                    prim(-u) - prim(-v)
                } else {
                    prim(-u) + prim(v)
                };
                Some(c * s)
            }
            Kind::Custom(_) => None,
        }
    }
}

/// `‖A B‖` with a shortcut for diagonal factors.
#[inline]
pub(crate) fn product_norm(a: &CMat, b: &CMat, diagonal: bool) -> f64 {
    if a.m == 1 {
        return (a.data[0] * b.data[0]).norm();
    }
    if diagonal {
        let m = a.m;
        return (0..m).map(|i| (a.data[i * m + i] * b.data[i * m + i]).norm()).fold(0.0, f64::max);
    }
    a.mul(b).op_norm()
}

/// `W^{α}` at the given flattened nodes.
pub fn powers_at(w: &MatrixWeight, nodes: &[f64], alpha: f64) -> Vec<Option<CMat>> {
    let n = w.n;
    par::map_range(nodes.len() / n, |i| w.power(&nodes[i * n..(i + 1) * n], alpha))
}

/// Precomputed `W^{1/p}` at every quadrature node of a window.
#[derive(Clone, Debug)]
pub struct PowerGrid {
    pub layout: Layout,
    pub g: usize,
    pub p: f64,
    pub m: usize,
    /// Node-major, `g^n` consecutive nodes per finest cell.
    pub mats: Vec<Option<CMat>>,
}

impl PowerGrid {
    pub fn new(w: &MatrixWeight, p: f64, t: &Truncation, q: QuadratureSpec) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return invalid("matrix mode requires 0 < p < ∞");
        }
        if w.n != t.n {
            return invalid("weight and window dimensions differ");
        }
        let layout = t.layout();
        let nodes = layout.nodes(q.g);
        let mats = powers_at(w, &nodes, 1.0 / p);
        if mats.iter().all(|m| m.is_none()) {
            return Err(Error::Domain("every quadrature node is singular".into()));
        }
        Ok(PowerGrid { layout, g: q.g, p, m: w.m, mats })
    }

    pub fn nodes_per_cell(&self) -> usize {
        self.g.pow(self.layout.n() as u32)
    }
}

/// Cap on quadrature nodes per cube in double averages.
const PAIR_NODE_CAP: usize = 1024;

fn nodes_per_axis(n: usize, want: usize) -> usize {
    let cap = (PAIR_NODE_CAP as f64).powf(1.0 / n as f64).floor().max(1.0) as usize;
    want.clamp(1, cap)
}

/// `exp(⨍_Y log ⨍_X ‖W^{1/p}(x) W^{-1/p}(y)‖^p dx dy)` over two node sets.
fn exp_log_double_average(
    w: &MatrixWeight,
    p: f64,
    x_nodes: &[f64],
    y_nodes: &[f64],
) -> Result<f64> {
    let xs: Vec<CMat> = powers_at(w, x_nodes, 1.0 / p).into_iter().flatten().collect();
    let ys: Vec<CMat> = powers_at(w, y_nodes, -1.0 / p).into_iter().flatten().collect();
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Domain("all quadrature nodes are singular".into()));
    }
    let diag = w.is_diagonal();
    let logs = par::map_slice(&ys, |b| {
        let s: f64 = xs.iter().map(|a| product_norm(a, b, diag).powf(p)).sum();
        (s / xs.len() as f64).ln()
    });
    Ok((logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// The `A_{p,∞}` exp-log characteristic on a single box.
pub fn apinf_box(w: &MatrixWeight, p: f64, corner: &[f64], edge: f64, per_axis: usize) -> Result<f64> {
    let nodes = box_nodes(corner, edge, per_axis);
    exp_log_double_average(w, p, &nodes, &nodes)
}

/// Window maximum of the `A_{p,∞}` characteristic.
pub fn apinf_characteristic(w: &MatrixWeight, p: f64, t: &Truncation, q: QuadratureSpec) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) {
        return invalid("p must be positive and finite");
    }
    if w.n != t.n {
        return invalid("weight and window dimensions differ");
    }
    let cubes = t.enumerate(&CubeFilter::All)?;
    let vals: Vec<Result<f64>> = cubes
        .iter()
        .map(|c| {
            let per = nodes_per_axis(t.n, q.g << (t.j_max - c.j));
            apinf_box(w, p, &c.corner(), c.edge(), per)
        })
        .collect();
    let mut best: f64 = 0.0;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

fn unit_directions(m: usize, count: usize, real: bool, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<Vec<C64>> = (0..m)
        .map(|i| (0..m).map(|j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    while out.len() < count + m {
        let v: Vec<C64> = (0..m)
            .map(|_| {
                let re: f64 = rng.gen_range(-1.0..1.0);
                let im: f64 = if real { 0.0 } else { rng.gen_range(-1.0..1.0) };
                C64::new(re, im)
            })
            .collect();
        let nrm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if nrm > 1e-3 {
            out.push(v.iter().map(|c| c / nrm).collect());
        }
    }
    out
}

fn box_power_integral(mats: &[Option<CMat>], z: &[C64], p: f64, cell: f64) -> f64 {
    let (mut s, mut cnt) = (0.0, 0usize);
    for a in mats.iter().flatten() {
        s += a.norm_of_product(z).powf(p);
        cnt += 1;
    }
    if cnt == 0 {
        0.0
    } else {
        s / cnt as f64 * cell * mats.len() as f64
    }
}

fn fits_in_hull(t: &Truncation, corner: &[f64], edge: f64) -> bool {
    let (lo, ext) = t.hull();
    corner.iter().all(|&c| c >= lo - 1e-12 && c + edge <= lo + ext + 1e-12)
}

/// Dilation of a cube about its centre.
pub fn dilate(q: &CubeId, lambda: f64) -> (Vec<f64>, f64) {
    let e = q.edge() * lambda;
    (q.center().iter().map(|c| c - 0.5 * e).collect(), e)
}

/// `log₂` of the largest ratio `∫_{2Q}|W^{1/p}z|^p / ∫_Q|W^{1/p}z|^p`.
pub fn doubling_exponent(
    w: &MatrixWeight,
    p: f64,
    t: &Truncation,
    q: QuadratureSpec,
    directions: usize,
) -> Result<f64> {
    let cubes: Vec<CubeId> = t
        .enumerate(&CubeFilter::All)?
        .into_iter()
        .filter(|c| {
            let (cc, e) = dilate(c, 2.0);
            fits_in_hull(t, &cc, e)
        })
        .collect();
    if cubes.is_empty() {
        return invalid("window too small to double any cube");
    }
    let cubes = subsample(cubes, 64);
    let dirs = unit_directions(w.m, directions, w.real, 0xD0B1);
    let ratios = par::map_slice(&cubes, |c| {
        let per = nodes_per_axis(t.n, (q.g << (t.j_max - c.j)).max(4)) / 2;
        let per = per.max(1);
        let inner = powers_at(w, &box_nodes(&c.corner(), c.edge(), per), 1.0 / p);
        let (oc, oe) = dilate(c, 2.0);
        let outer = powers_at(w, &box_nodes(&oc, oe, 2 * per), 1.0 / p);
        let cell = (c.edge() / per as f64).powi(t.n as i32);
        dirs.iter()
            .map(|z| {
                let a = box_power_integral(&inner, z, p, cell);
                let b = box_power_integral(&outer, z, p, cell);
                if a > 0.0 {
                    b / a
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    });
    Ok(ratios.into_iter().fold(0.0, f64::max).log2())
}

pub(crate) fn subsample<T: Clone>(items: Vec<T>, cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items;
    }
    let step = items.len() as f64 / cap as f64;
    (0..cap).map(|i| items[(i as f64 * step) as usize].clone()).collect()
}

/// Per-point eigenvalue extremes.
#[derive(Clone, Debug, Serialize)]
pub struct SpreadField {
    pub point: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// `sup λ_max/λ_min` over the sample points (singular points skipped).
pub fn eigen_spread(w: &MatrixWeight, points: &[Vec<f64>]) -> Result<(f64, Vec<SpreadField>)> {
    let mut fields = Vec::new();
    let mut sup: f64 = 0.0;
    for x in points {
        let Some(a) = w.eval(x) else { continue };
        let e = eigh(&a)?;
        let (lo, hi) = (e.values[0], *e.values.last().unwrap());
        sup = sup.max(hi / lo);
        fields.push(SpreadField { point: x.clone(), lambda_min: lo, lambda_max: hi });
    }
    if fields.is_empty() {
        return Err(Error::Domain("all sample points are singular".into()));
    }
    Ok((sup, fields))
}

/// Dilation factors used when estimating dimensions.
pub const DILATIONS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Dilations entering the slope fit.
const FIT_DILATIONS: [f64; 3] = [2.0, 4.0, 8.0];

/// Exp-log dilation quantities `(lower, upper)` for one cube and one `λ`.
pub fn dilation_values(w: &MatrixWeight, p: f64, q: &CubeId, lambda: f64, per_axis: usize) -> Result<(f64, f64)> {
    let inner = box_nodes(&q.corner(), q.edge(), per_axis);
    let (oc, oe) = dilate(q, lambda);
    let outer = box_nodes(&oc, oe, (per_axis as f64 * lambda).round() as usize);
    let lower = exp_log_double_average(w, p, &inner, &outer)?;
    let upper = exp_log_double_average(w, p, &outer, &inner)?;
    Ok((lower, upper))
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let num: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Least-squares growth exponents of the lower and upper dilation quantities.
pub fn estimate_dimensions(w: &MatrixWeight, p: f64, t: &Truncation, q: QuadratureSpec) -> Result<(f64, f64)> {
    if !(p > 0.0 && p.is_finite()) {
        return invalid("p must be positive and finite");
    }
    let lmax = *DILATIONS.last().unwrap();
    let mut levels = Vec::new();
    for j in t.j_min..=t.j_max {
        let ok: Vec<CubeId> = t
            .enumerate(&CubeFilter::Level(j))?
            .into_iter()
            .filter(|c| {
                let (cc, e) = dilate(c, lmax);
                fits_in_hull(t, &cc, e)
            })
            .collect();
        if !ok.is_empty() {
            levels.push(ok);
        }
        if levels.len() == 3 {
            break;
        }
    }
    if levels.is_empty() {
        return invalid("window leaves no room for the dilations");
    }
    let mut sample = Vec::new();
    for mut cubes in levels {
        cubes.sort_by(|a, b| {
            let da: f64 = a.center().iter().map(|v| v * v).sum();
            let db: f64 = b.center().iter().map(|v| v * v).sum();
            da.total_cmp(&db).then_with(|| a.cmp(b))
        });
        let near: Vec<CubeId> = cubes.iter().take(8).cloned().collect();
        let spread = subsample(cubes, 8);
        for c in near.into_iter().chain(spread) {
            if !sample.contains(&c) {
                sample.push(c);
            }
        }
    }
    let per_axis = if t.n == 1 { q.g.max(16) } else { q.g.max(4) };
    let logs: Vec<f64> = FIT_DILATIONS.iter().map(|l| l.ln()).collect();
    let fits: Vec<Result<(f64, f64)>> = sample
        .iter()
        .map(|c| {
            let mut lo = Vec::new();
            let mut up = Vec::new();
            for &l in FIT_DILATIONS.iter() {
                let (a, b) = dilation_values(w, p, c, l, per_axis)?;
                lo.push(a.ln());
                up.push(b.ln());
            }
            Ok((ls_slope(&logs, &lo), ls_slope(&logs, &up)))
        })
        .collect();
    let (mut dl, mut du) = (0.0f64, 0.0f64);
    for f in fits {
        let (a, b) = f?;
        dl = dl.max(a);
        du = du.max(b);
    }
    Ok((dl.max(0.0), du.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_evaluate() {
        let w = MatrixWeight::diag_power(1, &[-0.5, 0.0], None).unwrap();
        let a = w.eval(&[4.0]).unwrap();
        assert!((a.at(0, 0).re - 0.5).abs() < 1e-15);
        assert!((a.at(1, 1).re - 1.0).abs() < 1e-15);
        assert!(w.eval(&[0.0]).is_none());
        assert!(MatrixWeight::diag_power(1, &[-1.0], None).is_err());
        let r = MatrixWeight::rotated_diag_power(1, -0.5, 0.0);
        let v = r.eval(&[0.7]).unwrap();
        assert!(v.hermitian_defect() < 1e-15);
        let h = r.power(&[0.7], 0.5).unwrap();
        assert!(h.mul(&h).max_abs_diff(&v) < 1e-12);
    }

    #[test]
    fn apinf_constant_weights_are_one() {
        let t = Truncation::new(1, 0, 3, 2).unwrap();
        let q = QuadratureSpec::new(2).unwrap();
        let w = MatrixWeight::identity(1, 3);
        assert!((apinf_characteristic(&w, 1.5, &t, q).unwrap() - 1.0).abs() < 1e-12);
        let c = MatrixWeight::constant(1, CMat::from_real(2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        assert!((apinf_characteristic(&c, 3.0, &t, q).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apinf_sqrt_weight_matches_closed_form() {
        let w = MatrixWeight::diag_power(1, &[0.5], None).unwrap();
        let v = apinf_box(&w, 1.0, &[0.0], 1.0, 1024).unwrap();
        let exact = ((2.0f64 / 3.0).ln() + 0.5).exp();
        assert!((v - exact).abs() / exact < 1e-3, "{v} vs {exact}");
    }

    #[test]
    fn doubling_examples() {
        let t = Truncation::new(1, 0, 3, 4).unwrap();
        let q = QuadratureSpec::new(2).unwrap();
        let b = doubling_exponent(&MatrixWeight::identity(1, 1), 2.0, &t, q, 4).unwrap();
        assert!((b - 1.0).abs() < 1e-12);
        let t2 = Truncation::new(2, 0, 2, 4).unwrap();
        let b2 = doubling_exponent(&MatrixWeight::identity(2, 2), 2.0, &t2, q, 4).unwrap();
        assert!((b2 - 2.0).abs() < 1e-12);
        // |x| on [0,1): the centred double [-1/2, 3/2) carries 5/4 against 1/2
        let w = MatrixWeight::diag_power(1, &[1.0], None).unwrap();
        let b3 = doubling_exponent(&w, 1.0, &t, q, 1).unwrap();
        assert!(b3 >= 2.5f64.log2() - 1e-3);
    }

    #[test]
    fn spread_examples() {
        let pts: Vec<Vec<f64>> = [1.0, 4.0, 16.0].iter().map(|&x| vec![x]).collect();
        let w = MatrixWeight::diag_power(1, &[-0.5, 0.0], None).unwrap();
        let (sup, f) = eigen_spread(&w, &pts).unwrap();
        assert!((sup - 4.0).abs() < 1e-12);
        let r: Vec<f64> = f.iter().map(|s| s.lambda_max / s.lambda_min).collect();
        assert!((r[1] - 2.0).abs() < 1e-12);
        let c = MatrixWeight::constant(1, CMat::diag(&[1.0, 4.0])).unwrap();
        assert!((eigen_spread(&c, &pts).unwrap().0 - 4.0).abs() < 1e-12);
        assert!(eigen_spread(&w, &[vec![0.0]]).is_err());
    }

    #[test]
    fn dimensions_of_constant_weight_vanish() {
        let t = Truncation::new(1, -2, 3, 2).unwrap();
        let q = QuadratureSpec::new(2).unwrap();
        let (a, b) = estimate_dimensions(&MatrixWeight::identity(1, 2), 2.0, &t, q).unwrap();
        assert!(a.abs() < 1e-6 && b.abs() < 1e-6);
    }
}
