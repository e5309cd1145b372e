//! Almost-diagonal envelopes, their action on sequences, admissibility thresholds,
//! majorant sequences and molecule thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dyadic::{separation_unchecked, CubeFilter, CubeId, Truncation};
use crate::error::{invalid, Result};
use crate::growth::GrowthClass;
use crate::linalg::C64;
use crate::par;
use crate::seqspace::{gamma_pq, vec_norm, CoeffSeq, Family};

/// Decay parameters `(D, E, F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ADParams {
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl ADParams {
    pub fn new(d: f64, e: f64, f: f64) -> Self {
        ADParams { d, e, f }
    }
}

/// `u^{DEF}_{Q,R}`.
pub fn ad_entry(q: &CubeId, r: &CubeId, p: ADParams) -> f64 {
    let sep = separation_unchecked(q, r);
    let (lq, lr) = (q.edge(), r.edge());
    let size = if lq <= lr { (lq / lr).powf(p.e) } else { (lr / lq).powf(p.f) };
    sep.powf(-p.d) * size
}

/// An operator on window sequences.
#[derive(Clone, Debug)]
pub enum AdOperator {
    /// `u_{Q,R} = u^{DEF}_{Q,R}`.
    Envelope(ADParams),
    /// Explicit nonzero entries `(Q, R) → u_{Q,R}`.
    Table(BTreeMap<(CubeId, CubeId), f64>),
}

/// `(Ut)_Q = Σ_R u_{Q,R} t_R` for every window cube `Q`; zero outputs are dropped.
pub fn ad_apply(u: &AdOperator, tv: &CoeffSeq, t: &Truncation) -> Result<CoeffSeq> {
    tv.check_window(t)?;
    let m = tv.m;
    let mut out = CoeffSeq::new(m);
    match u {
        AdOperator::Envelope(p) => {
            let cubes = t.enumerate(&CubeFilter::All)?;
            let src: Vec<(&CubeId, &Vec<C64>)> = tv.entries.iter().collect();
            let rows: Vec<Vec<C64>> = par::map_slice(&cubes, |q| {
                let mut acc = vec![C64::new(0.0, 0.0); m];
                for (r, v) in &src {
                    let w = ad_entry(q, r, *p);
                    for (a, b) in acc.iter_mut().zip(v.iter()) {
                        *a += b * w;
                    }
                }
                acc
            });
            for (q, v) in cubes.into_iter().zip(rows) {
                if vec_norm(&v) > 0.0 {
                    out.insert(q, v)?;
                }
            }
        }
        AdOperator::Table(tab) => {
            let mut acc: BTreeMap<CubeId, Vec<C64>> = BTreeMap::new();
            for ((q, r), w) in tab {
                if !t.contains_cube(q) {
                    return invalid("table row outside the window");
                }
                if let Some(v) = tv.get(r) {
                    let slot = acc.entry(q.clone()).or_insert_with(|| vec![C64::new(0.0, 0.0); m]);
                    for (a, b) in slot.iter_mut().zip(v) {
                        *a += b * *w;
                    }
                }
            }
            for (q, v) in acc {
                if vec_norm(&v) > 0.0 {
                    out.insert(q, v)?;
                }
            }
        }
    }
    Ok(out)
}

/// Which case of the `J` dispatch applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Supercritical,
    Critical,
    Subcritical,
}

/// Strict lower bounds for `(D, E, F)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thresholds {
    pub j: f64,
    pub d_min: f64,
    pub e_min: f64,
    pub f_min: f64,
    pub regime: Regime,
    pub weighted: bool,
    /// `Δ` of the weighted case.
    pub delta: Option<f64>,
}

impl Thresholds {
    /// `(D_min, E_min, F_min)` shifted up by `margin`.
    pub fn admissible(&self, margin: f64) -> ADParams {
        ADParams::new(self.d_min + margin, self.e_min + margin, self.f_min + margin)
    }

    pub fn admits(&self, p: ADParams) -> bool {
        p.d > self.d_min && p.e > self.e_min && p.f > self.f_min
    }
}

const EQ_TOL: f64 = 1e-12;

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// `J` and its regime.
pub fn j_regime(n: usize, family: Family, p: f64, q: f64, class: GrowthClass) -> (f64, Regime) {
    let n = n as f64;
    let ip = 1.0 / p;
    let (d1, d2) = (class.delta1, class.delta2);
    let eq = |a: f64, b: f64| (a - b).abs() <= EQ_TOL;
    if d1 > ip + EQ_TOL || (eq(d1, ip) && q.is_infinite()) {
        (n, Regime::Supercritical)
    } else if family == Family::F && eq(d1, ip) && eq(d2, ip) && q.is_finite() {
        (n / q.min(1.0), Regime::Critical)
    } else {
        (n / gamma_pq(family, p, q).min(1.0), Regime::Subcritical)
    }
}

/// Admissibility thresholds, optionally with weight dimensions `(d_lower, d_upper)`.
pub fn ad_thresholds(
    n: usize,
    s: f64,
    p: f64,
    q: f64,
    family: Family,
    class: GrowthClass,
    dims: Option<(f64, f64)>,
) -> Result<Thresholds> {
    let class = GrowthClass::new(class.delta1, class.delta2, class.omega)?;
    if !(p > 0.0) || !(q > 0.0) {
        return invalid("p and q must be positive");
    }
    if family == Family::F && p.is_infinite() {
        return invalid("p = ∞ is not available for the F family");
    }
    let nf = n as f64;
    let ip = 1.0 / p;
    let (j, regime) = j_regime(n, family, p, q, class);
    let (d1, d2, om) = (class.delta1, class.delta2, class.omega);
    let f_un = j - nf / 2.0 - s - nf * pos(d1 - ip);
    match dims {
        None => Ok(Thresholds {
            j,
            d_min: j + om.min(nf * pos(d2 - ip)),
            e_min: nf / 2.0 + s + nf * pos(d2 - ip),
            f_min: f_un,
            regime,
            weighted: false,
            delta: None,
        }),
        Some((dl, du)) => {
            if !(0.0..nf).contains(&dl) {
                return invalid(format!("d_lower must lie in [0, n), got {dl}"));
            }
            if !(du >= 0.0) {
                return invalid(format!("d_upper must be nonnegative, got {du}"));
            }
            let delta = pos(d2 - ip + dl / (nf * p));
            Ok(Thresholds {
                j,
                d_min: j + (nf * delta).min(om + dl / p) + du / p,
                e_min: nf / 2.0 + s + nf * delta,
                f_min: f_un + du / p,
                regime,
                weighted: true,
                delta: Some(delta),
            })
        }
    }
}

/// `t*_{r,λ}` over all window cubes on the levels present in `tv`.
pub fn majorant(tv: &CoeffSeq, r: f64, lambda: f64, t: &Truncation) -> Result<CoeffSeq> {
    if !(r > 0.0) {
        return invalid("r must lie in (0, ∞]");
    }
    tv.check_window(t)?;
    let mut by_level: BTreeMap<i32, Vec<(&CubeId, f64)>> = BTreeMap::new();
    for (q, v) in &tv.entries {
        let a = vec_norm(v);
        if a > 0.0 {
            by_level.entry(q.j).or_default().push((q, a));
        }
    }
    let mut out = CoeffSeq::new(1);
    for (j, items) in by_level {
        let cubes = t.enumerate(&CubeFilter::Level(j))?;
        let vals: Vec<f64> = par::map_slice(&cubes, |q| {
            let mut acc: f64 = 0.0;
            for (rr, a) in &items {
                let dist: f64 = q.k.iter().zip(rr.k.iter()).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt();
                let dec = (1.0 + dist).powf(-lambda);
                if r.is_infinite() {
                    acc = acc.max(a * dec);
                } else {
                    acc += (a * dec).powf(r);
                }
            }
            if r.is_infinite() {
                acc
            } else {
                acc.powf(1.0 / r)
            }
        });
        for (q, v) in cubes.into_iter().zip(vals) {
            if v > 0.0 {
                out.insert(q, vec![C64::new(v, 0.0)])?;
            }
        }
    }
    Ok(out)
}

/// Composition constant `max_{Q,R} Σ_P u¹_{Q,P} u²_{P,R} / u^{claimed}_{Q,R}`.
pub fn compose_check(p1: ADParams, p2: ADParams, t: &Truncation) -> Result<(f64, ADParams)> {
    if p1.d != p2.d {
        return invalid("compose_check expects D₁ = D₂");
    }
    let claimed = ADParams::new(p1.d, p1.e.min(p2.e), p1.f.min(p2.f));
    let cubes = t.enumerate(&CubeFilter::All)?;
    let c = par::max_range(cubes.len(), |a| {
        let q = &cubes[a];
        let row: Vec<f64> = cubes.iter().map(|pp| ad_entry(q, pp, p1)).collect();
        cubes
            .iter()
            .map(|r| {
                let s: f64 = cubes.iter().zip(&row).map(|(pp, u1)| u1 * ad_entry(pp, r, p2)).sum();
                s / ad_entry(q, r, claimed)
            })
            .fold(0.0, f64::max)
    });
    Ok((c, claimed))
}

/// Minimal `(K, L, M, N)` of one molecule family; `strict` marks `>` bounds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MoleculeBounds {
    pub k: f64,
    pub l: f64,
    pub m: f64,
    pub n: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MoleculeThresholds {
    /// `K > k, L ≥ l, M > m, N > n`.
    pub analysis: MoleculeBounds,
    /// Same shape with `E` and `F` exchanged.
    pub synthesis: MoleculeBounds,
    /// Smallest integer wavelet smoothness exceeding `max(E − n/2, F − n/2)`.
    pub k_min: i64,
}

/// Molecule and wavelet-smoothness thresholds from `(D, E, F)` lower bounds.
pub fn molecule_thresholds(th: &Thresholds, n: usize) -> MoleculeThresholds {
    let h = n as f64 / 2.0;
    let (d, e, f) = (th.d_min, th.e_min, th.f_min);
    let shape = |e: f64, f: f64| MoleculeBounds { k: d.max(e + h), l: e - h, m: d, n: f - h };
    let top = (e - h).max(f - h);
    MoleculeThresholds { analysis: shape(e, f), synthesis: shape(f, e), k_min: top.floor() as i64 + 1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(j: i32, k: i64) -> CubeId {
        CubeId::new(j, &[k])
    }

    #[test]
    fn entry_examples() {
        let p = ADParams::new(2.0, 2.0, 1.0);
        assert_eq!(ad_entry(&c(0, 0), &c(0, 0), p), 1.0);
        assert!((ad_entry(&c(1, 0), &c(0, 0), ADParams::new(0.0, 2.0, 0.0)) - 0.25).abs() < 1e-15);
        assert!((ad_entry(&c(0, 3), &c(0, 0), p) - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn apply_examples() {
        let t = Truncation::new(1, -2, 2, 1).unwrap();
        let mut s = CoeffSeq::new(1);
        s.insert(c(0, 0), vec![C64::new(1.0, 0.0)]).unwrap();
        let u = ad_apply(&AdOperator::Envelope(ADParams::new(0.0, 0.0, 0.0)), &s, &t).unwrap();
        assert_eq!(u.len(), t.cube_count());
        assert!(u.entries.values().all(|v| v[0] == C64::new(1.0, 0.0)));
        let u = ad_apply(&AdOperator::Envelope(ADParams::new(2.0, 1.0, 1.0)), &s, &t).unwrap();
        assert!((u.get(&c(0, 3)).unwrap()[0].re - 0.0625).abs() < 1e-15);
        let id: BTreeMap<_, _> = t.enumerate(&CubeFilter::All).unwrap().into_iter().map(|q| ((q.clone(), q), 1.0)).collect();
        assert_eq!(ad_apply(&AdOperator::Table(id), &s, &t).unwrap(), s);
    }

    #[test]
    fn threshold_examples() {
        let z = GrowthClass::new(0.0, 0.0, 0.0).unwrap();
        let th = ad_thresholds(1, 0.0, 2.0, 2.0, Family::F, z, None).unwrap();
        assert_eq!(th.regime, Regime::Subcritical);
        assert_eq!((th.j, th.d_min, th.e_min, th.f_min), (1.0, 1.0, 0.5, 0.5));
        let sup = GrowthClass::new(1.0, 1.0, 0.0).unwrap();
        let th = ad_thresholds(1, 0.0, 2.0, 2.0, Family::B, sup, None).unwrap();
        assert_eq!((th.regime, th.j), (Regime::Supercritical, 1.0));
        let crit = GrowthClass::new(0.5, 0.5, 0.0).unwrap();
        let th = ad_thresholds(1, 0.0, 2.0, 0.5, Family::F, crit, None).unwrap();
        assert_eq!((th.regime, th.j), (Regime::Critical, 2.0));
        let cl = GrowthClass::new(0.1, 0.7, 0.3).unwrap();
        let a = ad_thresholds(2, 0.3, 1.5, 0.8, Family::B, cl, None).unwrap();
        let b = ad_thresholds(2, 0.3, 1.5, 0.8, Family::B, cl, Some((0.0, 0.0))).unwrap();
        assert_eq!((a.d_min, a.e_min, a.f_min), (b.d_min, b.e_min, b.f_min));
        assert!(ad_thresholds(1, 0.0, 2.0, 2.0, Family::F, z, Some((1.0, 0.0))).is_err());
    }

    #[test]
    fn majorant_examples() {
        let t = Truncation::new(1, 0, 0, 4).unwrap();
        let mut s = CoeffSeq::new(1);
        s.insert(c(0, 0), vec![C64::new(1.0, 0.0)]).unwrap();
        let a = majorant(&s, 1.0, 2.0, &t).unwrap();
        assert!((a.get(&c(0, 1)).unwrap()[0].re - 0.25).abs() < 1e-15);
        let b = majorant(&s, f64::INFINITY, 2.0, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.get(&c(0, 0)).unwrap()[0].re, 1.0);
    }

    #[test]
    fn compose_examples() {
        let t = Truncation::new(1, 0, 0, 1).unwrap();
        let big = ADParams::new(9.0, 9.0, 9.0);
        assert_eq!(compose_check(big, big, &t).unwrap().0, 1.0);
        let t = Truncation::new(1, 0, 3, 1).unwrap();
        let p = ADParams::new(3.0, 2.0, 2.0);
        let (cc, claimed) = compose_check(p, p, &t).unwrap();
        assert!(cc.is_finite() && cc <= 50.0, "{cc}");
        assert_eq!(claimed, p);
    }

    #[test]
    fn molecule_examples() {
        let z = GrowthClass::new(0.0, 0.0, 0.0).unwrap();
        let th = ad_thresholds(1, 0.0, 2.0, 2.0, Family::F, z, None).unwrap();
        let m = molecule_thresholds(&th, 1);
        assert_eq!((m.analysis.k, m.analysis.l, m.analysis.m, m.analysis.n), (1.0, 0.0, 1.0, 0.0));
        assert_eq!(m.k_min, 1);
        let th1 = ad_thresholds(1, 1.0, 2.0, 2.0, Family::F, z, None).unwrap();
        assert_eq!((th1.e_min - th.e_min, th1.f_min - th.f_min), (1.0, -1.0));
        let tw = ad_thresholds(1, 0.0, 2.0, 2.0, Family::F, z, Some((0.0, 2.0))).unwrap();
        assert_eq!(tw.f_min - th.f_min, 1.0);
    }
}
