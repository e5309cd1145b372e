//! Coefficient sequences and the Besov-type / Triebel–Lizorkin-type sequence quasi-norms.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic::{box_nodes, CubeFilter, CubeId, Layout, Truncation};
use crate::error::{invalid, Result};
use crate::growth::{norm_integral, GrowthFn, GrowthSpec};
use crate::linalg::C64;
use crate::par;
use crate::reducing::ReducingFamily;
use crate::weights::{MatrixWeight, PowerGrid};

/// Values below this are treated as zero before raising to powers.
pub const UNDERFLOW: f64 = 1e-300;

/// Finite map `CubeId → ℂ^m`; absent cubes are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffSeq {
    pub m: usize,
    pub entries: BTreeMap<CubeId, Vec<C64>>,
}

type Record = ((i32, Vec<i64>), Vec<(f64, f64)>);

#[derive(Serialize, Deserialize)]
struct SeqRepr {
    m: usize,
    entries: Vec<Record>,
}

impl Serialize for CoeffSeq {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self
            .entries
            .iter()
            .map(|(q, v)| ((q.j, q.k.to_vec()), v.iter().map(|c| (c.re, c.im)).collect()))
            .collect();
        SeqRepr { m: self.m, entries }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoeffSeq {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SeqRepr::deserialize(d)?;
        let mut out = CoeffSeq::new(r.m);
        for ((j, k), v) in r.entries {
            let v: Vec<C64> = v.into_iter().map(|(a, b)| C64::new(a, b)).collect();
            out.insert(CubeId::new(j, &k), v).map_err(serde::de::Error::custom)?;
        }
        Ok(out)
    }
}

impl CoeffSeq {
    pub fn new(m: usize) -> Self {
        CoeffSeq { m, entries: BTreeMap::new() }
    }

    pub fn insert(&mut self, q: CubeId, v: Vec<C64>) -> Result<()> {
        if v.len() != self.m {
            return invalid(format!("vector length {} differs from m = {}", v.len(), self.m));
        }
        if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return invalid("non-finite coefficient");
        }
        self.entries.insert(q, v);
        Ok(())
    }

    pub fn get(&self, q: &CubeId) -> Option<&[C64]> {
        self.entries.get(q).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scale(&self, lambda: C64) -> CoeffSeq {
        let entries = self.entries.iter().map(|(q, v)| (q.clone(), v.iter().map(|c| c * lambda).collect())).collect();
        CoeffSeq { m: self.m, entries }
    }

    /// Scalar sequence `{|t_Q|}`.
    pub fn magnitudes(&self) -> CoeffSeq {
        let entries = self
            .entries
            .iter()
            .map(|(q, v)| (q.clone(), vec![C64::new(vec_norm(v), 0.0)]))
            .collect();
        CoeffSeq { m: 1, entries }
    }

    /// Scalar sequence from a per-cube map.
    pub fn from_scalars(it: impl IntoIterator<Item = (CubeId, f64)>) -> CoeffSeq {
        let entries = it.into_iter().map(|(q, v)| (q, vec![C64::new(v, 0.0)])).collect();
        CoeffSeq { m: 1, entries }
    }

    pub fn check_window(&self, t: &Truncation) -> Result<()> {
        for q in self.entries.keys() {
            if !t.contains_cube(q) {
                return invalid(format!("cube (j={}, k={:?}) outside the window", q.j, q.k.as_slice()));
            }
        }
        Ok(())
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Sequence-space family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    B,
    F,
}

/// How coefficient vectors are measured.
#[derive(Clone, Debug, Default)]
pub enum Mode {
    /// `|t_Q|`
    #[default]
    Unweighted,
    /// `|A_Q t_Q|`
    Averaging(Arc<ReducingFamily>),
    /// `|W^{1/p}(x) t_Q|` at quadrature nodes.
    Matrix(Arc<PowerGrid>),
    /// `w^{1/p}(x) |t_Q|` for a scalar weight.
    ScalarWeight(Arc<PowerGrid>),
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Unweighted => "unweighted",
            Mode::Averaging(_) => "averaging",
            Mode::Matrix(_) => "matrix",
            Mode::ScalarWeight(_) => "scalar_weight",
        }
    }
}

/// Indices of a sequence space.
#[derive(Clone, Debug)]
pub struct SpaceParams {
    pub family: Family,
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub growth: GrowthFn,
    pub mode: Mode,
}

impl SpaceParams {
    pub fn new(family: Family, s: f64, p: f64, q: f64) -> Self {
        SpaceParams { family, s, p, q, growth: GrowthFn::one(), mode: Mode::Unweighted }
    }

    pub fn with_growth(mut self, g: GrowthFn) -> Self {
        self.growth = g;
        self
    }

    pub fn with_mode(mut self, m: Mode) -> Self {
        self.mode = m;
        self
    }

    pub fn with_q(mut self, q: f64) -> Self {
        self.q = q;
        self
    }

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
        self
    }

    pub fn with_family(mut self, f: Family) -> Self {
        self.family = f;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) || self.p.is_nan() {
            return invalid("p must lie in (0, ∞]");
        }
        if !(self.q > 0.0) || self.q.is_nan() {
            return invalid("q must lie in (0, ∞]");
        }
        if !self.s.is_finite() {
            return invalid("s must be finite");
        }
        if self.p.is_infinite() {
            if self.family == Family::F {
                return invalid("p = ∞ is not available for the F family");
            }
            if !matches!(self.mode, Mode::Unweighted) {
                return invalid("p = ∞ requires unweighted mode");
            }
        }
        Ok(())
    }
}

/// `Γ_{p,q}`: `p` for B, `min(p, q)` for F.
pub fn gamma_pq(family: Family, p: f64, q: f64) -> f64 {
    match family {
        Family::B => p,
        Family::F => p.min(q),
    }
}

/// JSON form of [`SpaceParams`] without the mode.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub family: Family,
    pub s: f64,
    #[serde(with = "ext_f64")]
    pub p: f64,
    #[serde(with = "ext_f64")]
    pub q: f64,
    #[serde(default = "default_growth")]
    pub growth: GrowthSpec,
}

fn default_growth() -> GrowthSpec {
    GrowthSpec::Constant { value: 1.0 }
}

impl SpaceSpec {
    pub fn build(&self, n: usize) -> Result<SpaceParams> {
        let p = SpaceParams::new(self.family, self.s, self.p, self.q).with_growth(self.growth.build(n)?);
        p.validate()?;
        Ok(p)
    }
}

/// Serde for reals that may be `"inf"`.
pub mod ext_f64 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum V {
            N(f64),
            S(String),
        }
        match V::deserialize(d)? {
            V::N(x) => Ok(x),
            V::S(s) if matches!(s.as_str(), "inf" | "infinity" | "∞") => Ok(f64::INFINITY),
            V::S(s) => Err(D::Error::custom(format!("expected a number or \"inf\", got {s}"))),
        }
    }
}

/// One level of a scalar field on the window.
#[derive(Clone, Debug)]
pub enum LevelData {
    Zero,
    /// One value per level-`j` block.
    PerCube(Vec<f64>),
    /// One value per quadrature node, `npc` nodes per finest cell.
    PerNode(Vec<f64>),
}

/// Per-level nonnegative fields `f_j`, `j_min ≤ j ≤ j_max`.
#[derive(Clone, Debug)]
pub struct LevelField {
    pub layout: Layout,
    pub npc: usize,
    pub levels: Vec<LevelData>,
}

impl LevelField {
    pub fn zero(t: &Truncation, npc: usize) -> Self {
        LevelField { layout: t.layout(), npc, levels: vec![LevelData::Zero; t.levels()] }
    }

    /// Node values of level `j`, expanding per-cube data.
    pub fn node_values(&self, j: i32) -> Vec<f64> {
        let total = self.layout.cells() * self.npc;
        match &self.levels[(j - self.layout.trunc.j_min) as usize] {
            LevelData::Zero => vec![0.0; total],
            LevelData::PerNode(v) => v.clone(),
            LevelData::PerCube(v) => {
                let per = self.layout.cells_per_block(j) * self.npc;
                let mut out = vec![0.0; total];
                par::for_each_chunk_mut(&mut out, per, |b, chunk| chunk.fill(v[b]));
                out
            }
        }
    }

    /// The fields `2^{js} |M t_Q| |Q|^{-1/2}` of a sequence.
    pub fn from_seq(tv: &CoeffSeq, s: f64, mode: &Mode, t: &Truncation) -> Result<Self> {
        tv.check_window(t)?;
        let layout = t.layout();
        match mode {
            Mode::Unweighted | Mode::Averaging(_) => {
                if let Mode::Averaging(fam) = mode {
                    if fam.m != tv.m {
                        return invalid("sequence and reducing family have different m");
                    }
                    if fam.trunc() != t {
                        return invalid("reducing family was built on a different window");
                    }
                }
                let mut levels = vec![LevelData::Zero; t.levels()];
                for (q, v) in &tv.entries {
                    let mag = match mode {
                        Mode::Averaging(fam) => fam.get(q).expect("window cube").norm_of_product(v),
                        _ => vec_norm(v),
                    };
                    let val = 2f64.powf(q.j as f64 * s) * q.volume().powf(-0.5) * mag;
                    let li = (q.j - t.j_min) as usize;
                    if let LevelData::Zero = levels[li] {
                        levels[li] = LevelData::PerCube(vec![0.0; layout.blocks(q.j)]);
                    }
                    if let LevelData::PerCube(arr) = &mut levels[li] {
                        arr[layout.block_of(q).expect("window cube")] = val;
                    }
                }
                Ok(LevelField { layout, npc: 1, levels })
            }
            Mode::Matrix(grid) | Mode::ScalarWeight(grid) => {
                let scalar = matches!(mode, Mode::ScalarWeight(_));
                if scalar && grid.m != 1 {
                    return invalid("scalar_weight mode needs a 1×1 weight");
                }
                if !scalar && grid.m != tv.m {
                    return invalid("sequence and weight have different m");
                }
                if &grid.layout.trunc != t {
                    return invalid("weight grid was built on a different window");
                }
                let npc = grid.nodes_per_cell();
                let mut levels = vec![LevelData::Zero; t.levels()];
                let mut by_level: BTreeMap<i32, Vec<(&CubeId, &Vec<C64>)>> = BTreeMap::new();
                for (q, v) in &tv.entries {
                    by_level.entry(q.j).or_default().push((q, v));
                }
                for (j, items) in by_level {
                    let mut arr = vec![0.0; layout.cells() * npc];
                    let per = layout.cells_per_block(j) * npc;
                    let blocks: BTreeMap<usize, (&CubeId, &Vec<C64>)> =
                        items.into_iter().map(|(q, v)| (layout.block_of(q).expect("window cube"), (q, v))).collect();
                    let scale = 2f64.powf(j as f64 * s) * crate::dyadic::edge_of_level(j).powf(-0.5 * t.n as f64);
                    par::for_each_chunk_mut(&mut arr, per, |b, chunk| {
                        if let Some((_, v)) = blocks.get(&b) {
                            let nv = vec_norm(v);
                            for (i, slot) in chunk.iter_mut().enumerate() {
                                *slot = match &grid.mats[b * per + i] {
                                    None => f64::NAN,
                                    Some(a) if scalar => a.at(0, 0).re * nv * scale,
                                    Some(a) => a.norm_of_product(v) * scale,
                                };
                            }
                        }
                    });
                    levels[(j - t.j_min) as usize] = LevelData::PerNode(arr);
                }
                Ok(LevelField { layout, npc, levels })
            }
        }
    }
}

#[inline]
fn clamp(v: f64) -> f64 {
    if v < UNDERFLOW {
        0.0
    } else {
        v
    }
}

/// Per-cell integral (or sup for `p = ∞`) of `g(v)` over the `npc` nodes of each cell; NaN nodes are skipped.
fn cell_reduce(vals: &[f64], npc: usize, cell_vol: f64, sup: bool, g: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    let cells = vals.len() / npc;
    par::map_range(cells, |c| {
        let chunk = &vals[c * npc..(c + 1) * npc];
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for &v in chunk {
            if v.is_nan() {
                continue;
            }
            cnt += 1;
            let x = g(clamp(v));
            if sup {
                acc = f64::max(acc, x);
            } else {
                acc += x;
            }
        }
        if sup || cnt == 0 {
            acc
        } else {
            acc * cell_vol / cnt as f64
        }
    })
}

/// Sum (or max) contiguous runs of `per` entries.
fn coarsen(v: &[f64], per: usize, sup: bool) -> Vec<f64> {
    par::map_range(v.len() / per, |b| {
        let s = &v[b * per..(b + 1) * per];
        if sup {
            s.iter().cloned().fold(0.0, f64::max)
        } else {
            s.iter().sum()
        }
    })
}

/// `sup_P υ(P)^{-1} ‖{f_j 1_P}_{j ≥ j_P}‖` with `ℓ^q(L^p)` (B) or `L^p(ℓ^q)` (F) mixing.
pub fn la_norm(field: &LevelField, params: &SpaceParams) -> Result<f64> {
    params.validate()?;
    let per_p = la_profile(field, params)?;
    let t = &field.layout.trunc;
    let mut best: f64 = 0.0;
    for (li, vals) in per_p.iter().enumerate() {
        let j = t.j_min + li as i32;
        let m = par::max_range(vals.len(), |b| {
            let v = vals[b];
            if v == 0.0 {
                0.0
            } else {
                v / params.growth.eval(&field.layout.cube_of_block(j, b))
            }
        });
        best = best.max(m);
    }
    Ok(best)
}

/// Unnormalised `‖{f_j 1_P}_{j ≥ j_P}‖` for every window cube `P`, per level and Morton block.
pub fn la_profile(field: &LevelField, params: &SpaceParams) -> Result<Vec<Vec<f64>>> {
    let (p, q) = (params.p, params.q);
    let layout = &field.layout;
    let t = &layout.trunc;
    let n = t.n as u32;
    let npc = field.npc;
    let cell_vol = layout.cell_volume();
    let levels = t.levels();
    let mut acc: Vec<Vec<f64>> = (t.j_min..=t.j_max).map(|j| vec![0.0; layout.blocks(j)]).collect();
    match params.family {
        Family::B => {
            let sup_p = p.is_infinite();
            for li in 0..levels {
                let j = t.j_min + li as i32;
                let mut x: Vec<f64> = match &field.levels[li] {
                    LevelData::Zero => continue,
                    LevelData::PerCube(v) => {
                        let vol = crate::dyadic::edge_of_level(j).powi(n as i32);
                        v.iter().map(|&a| if sup_p { clamp(a) } else { clamp(a).powf(p) * vol }).collect()
                    }
                    LevelData::PerNode(v) => {
                        let cells = cell_reduce(v, npc, cell_vol, sup_p, |a| if sup_p { a } else { a.powf(p) });
                        coarsen(&cells, layout.cells_per_block(j), sup_p)
                    }
                };
                for i in (0..=li).rev() {
                    let lvl = &mut acc[i];
                    for (slot, &xi) in lvl.iter_mut().zip(&x) {
                        let norm_p = if sup_p { xi } else { xi.powf(1.0 / p) };
                        if q.is_infinite() {
                            *slot = f64::max(*slot, norm_p);
                        } else if norm_p > 0.0 {
                            *slot += if sup_p { norm_p.powf(q) } else { xi.powf(q / p) };
                        }
                    }
                    if i > 0 {
                        x = coarsen(&x, 1 << n, sup_p);
                    }
                }
            }
            if q.is_finite() {
                for lvl in acc.iter_mut() {
                    for v in lvl.iter_mut() {
                        *v = v.powf(1.0 / q);
                    }
                }
            }
        }
        Family::F => {
            if p.is_infinite() {
                return invalid("p = ∞ is not available for the F family");
            }
            let total = layout.cells() * npc;
            let mut g = vec![0.0; total];
            for li in (0..levels).rev() {
                let j = t.j_min + li as i32;
                if !matches!(field.levels[li], LevelData::Zero) {
                    let vals = field.node_values(j);
                    par::for_each_chunk_mut(&mut g, npc.max(1) * 64, |c, chunk| {
                        let base = c * npc.max(1) * 64;
                        for (i, slot) in chunk.iter_mut().enumerate() {
                            let v = vals[base + i];
                            if v.is_nan() {
                                *slot = f64::NAN;
                                continue;
                            }
                            let v = clamp(v);
                            if q.is_infinite() {
                                *slot = f64::max(*slot, v);
                            } else if v > 0.0 {
                                *slot += v.powf(q);
                            }
                        }
                    });
                }
                let expo = if q.is_infinite() { p } else { p / q };
                let cells = cell_reduce(&g, npc, cell_vol, false, |a| if a == 0.0 { 0.0 } else { a.powf(expo) });
                let blocks = coarsen(&cells, layout.cells_per_block(j), false);
                acc[li] = blocks.into_iter().map(|v| v.powf(1.0 / p)).collect();
            }
        }
    }
    Ok(acc)
}

/// `‖t‖` in the sequence space described by `params`.
pub fn seq_norm(tv: &CoeffSeq, params: &SpaceParams, t: &Truncation) -> Result<f64> {
    params.validate()?;
    match &params.mode {
        Mode::Averaging(f) if f.p != params.p => return invalid("reducing family was built for a different p"),
        Mode::Matrix(g) | Mode::ScalarWeight(g) if g.p != params.p => return invalid("weight grid was built for a different p"),
        _ => {}
    }
    let field = LevelField::from_seq(tv, params.s, &params.mode, t)?;
    la_norm(&field, params)
}

/// `sup_P {w(P)^{-1} Σ_{Q ⊆ P} (|Q|^{-s/n-1/2}|t_Q|)^q w(Q)}^{1/q}`, computed by ancestor accumulation.
pub fn finfty_norm(tv: &CoeffSeq, s: f64, q: f64, w: Option<&MatrixWeight>, t: &Truncation) -> Result<f64> {
    if tv.m != 1 {
        return invalid("finfty_norm takes a scalar sequence");
    }
    if !(q > 0.0) {
        return invalid("q must lie in (0, ∞]");
    }
    if let Some(w) = w {
        if w.m != 1 {
            return invalid("finfty_norm takes a scalar weight");
        }
    }
    tv.check_window(t)?;
    let n = t.n as f64;
    let coef = |qq: &CubeId, v: &[C64]| qq.volume().powf(-s / n - 0.5) * v[0].norm();
    if q.is_infinite() {
        return Ok(tv.entries.iter().map(|(qq, v)| coef(qq, v)).fold(0.0, f64::max));
    }
    let mass = |qq: &CubeId| match w {
        None => qq.volume(),
        Some(w) => norm_integral(w, qq),
    };
    let mut acc: BTreeMap<CubeId, f64> = BTreeMap::new();
    for (qq, v) in &tv.entries {
        let c = clamp(coef(qq, v));
        if c == 0.0 {
            continue;
        }
        let contrib = c.powf(q) * mass(qq);
        let mut a = qq.clone();
        loop {
            *acc.entry(a.clone()).or_insert(0.0) += contrib;
            if a.j == t.j_min {
                break;
            }
            a = a.parent();
        }
    }
    Ok(acc.iter().map(|(p, v)| (v / mass(p)).powf(1.0 / q)).fold(0.0, f64::max))
}

/// Nodes per axis for the independent oracle quadrature.
const ORACLE_NODES: usize = 1 << 14;

/// `2^{j(s+n/2)} υ(Q)^{-1} (∫_Q |W^{1/p} z|^p)^{1/p}`.
pub fn single_point_oracle(q: &CubeId, z: &[C64], params: &SpaceParams, w: Option<&MatrixWeight>) -> Result<f64> {
    params.validate()?;
    let n = q.dim() as f64;
    let p = params.p;
    let pre = 2f64.powf(q.j as f64 * (params.s + n / 2.0)) / params.growth.eval(q);
    let zn = vec_norm(z);
    if zn == 0.0 {
        return Ok(0.0);
    }
    let integral_root = match w {
        None => {
            if p.is_infinite() {
                zn
            } else {
                zn * q.volume().powf(1.0 / p)
            }
        }
        Some(w) => {
            if w.m != z.len() {
                return invalid("vector and weight have different m");
            }
            if p.is_infinite() {
                return invalid("weighted oracle needs p < ∞");
            }
            match closed_form_power_integral(w, q, z, p) {
                Some(v) => v.powf(1.0 / p),
                None => {
                    let per = (ORACLE_NODES as f64).powf(1.0 / n).floor() as usize;
                    let nodes = box_nodes(&q.corner(), q.edge(), per);
                    let dim = q.dim();
                    let vals: Vec<Option<f64>> = par::map_range(nodes.len() / dim, |i| {
                        w.power(&nodes[i * dim..(i + 1) * dim], 1.0 / p).map(|a| a.norm_of_product(z).powf(p))
                    });
                    let good: Vec<f64> = vals.into_iter().flatten().collect();
                    (good.iter().sum::<f64>() / good.len() as f64 * q.volume()).powf(1.0 / p)
                }
            }
        }
    };
    Ok(pre * integral_root)
}

/// `∫_Q |W^{1/p} z|^p` in closed form for 1-D diagonal power weights and a single-component `z`.
fn closed_form_power_integral(w: &MatrixWeight, q: &CubeId, z: &[C64], p: f64) -> Option<f64> {
    if q.dim() != 1 {
        return None;
    }
    let nz: Vec<usize> = (0..z.len()).filter(|&i| z[i].norm() > 0.0).collect();
    if nz.len() != 1 {
        return None;
    }
    let i = nz[0];
    let (coef, exps, center) = w.diag_power_parts()?;
    let a = exps[i];
    let c = center[0];
    let (lo, hi) = (q.corner()[0] - c, q.corner()[0] + q.edge() - c);
    let anti = |u: f64| u.signum() * u.abs().powf(a + 1.0) / (a + 1.0);
    Some(coef[i] * z[i].norm().powf(p) * (anti(hi) - anti(lo)))
}

/// How random coefficient magnitudes scale with cube volume.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScaleLaw {
    /// `|t_Q| ∝ |Q|^σ`
    pub sigma: f64,
}

/// Sequence recipes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeqKind {
    SinglePoint { j: i32, k: Vec<i64>, z: Vec<(f64, f64)> },
    Random { seed: u64, density: f64, sigma: f64, m: usize, #[serde(default)] real: bool },
    BesovCounterexample { levels: i32 },
}

/// Deterministic sequence builders.
pub fn build_sequence(kind: &SeqKind, t: &Truncation) -> Result<CoeffSeq> {
    t.validate()?;
    match kind {
        SeqKind::SinglePoint { j, k, z } => {
            let q = CubeId::new(*j, k);
            if !t.contains_cube(&q) {
                return invalid("cube outside the window");
            }
            let mut s = CoeffSeq::new(z.len());
            s.insert(q, z.iter().map(|&(a, b)| C64::new(a, b)).collect())?;
            Ok(s)
        }
        SeqKind::Random { seed, density, sigma, m, real } => random_sequence(t, *m, *seed, *density, ScaleLaw { sigma: *sigma }, *real),
        SeqKind::BesovCounterexample { levels } => {
            let mut s = CoeffSeq::new(1);
            for q in t.enumerate(&CubeFilter::All)? {
                if q.j >= 0 && q.j <= *levels && q.k[0].rem_euclid(q.j as i64 + 1) == 0 {
                    let v = q.volume().sqrt();
                    s.insert(q, vec![C64::new(v, 0.0)])?;
                }
            }
            Ok(s)
        }
    }
}

/// Each window cube is present with probability `density`; entries are Gaussian times `|Q|^σ`.
pub fn random_sequence(t: &Truncation, m: usize, seed: u64, density: f64, law: ScaleLaw, real: bool) -> Result<CoeffSeq> {
    if !(0.0..=1.0).contains(&density) {
        return invalid("density must lie in [0, 1]");
    }
    if m == 0 {
        return invalid("m must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = CoeffSeq::new(m);
    for q in t.enumerate(&CubeFilter::All)? {
        let keep: f64 = rng.gen();
        if keep >= density {
            continue;
        }
        let scale = q.volume().powf(law.sigma);
        let v: Vec<C64> = (0..m)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = if real { 0.0 } else { rng.sample(StandardNormal) };
                C64::new(re, im) * scale
            })
            .collect();
        s.insert(q, v)?;
    }
    Ok(s)
}
