//! Growth functions `υ` on dyadic cubes and empirical class constants.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic::{box_nodes, separation_unchecked, CubeFilter, CubeId, Truncation};
use crate::error::{invalid, Error, Result};
use crate::par;
use crate::weights::{MatrixWeight, WeightPreset};

/// Growth class `(δ₁, δ₂; ω)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthClass {
    pub delta1: f64,
    pub delta2: f64,
    pub omega: f64,
}

impl GrowthClass {
    pub fn new(delta1: f64, delta2: f64, omega: f64) -> Result<Self> {
        if delta2 < delta1 {
            return invalid(format!("δ₂ = {delta2} is below δ₁ = {delta1}"));
        }
        if omega < 0.0 {
            return invalid(format!("ω = {omega} is negative"));
        }
        Ok(GrowthClass { delta1, delta2, omega })
    }

    /// Right-hand side of the two-branch growth bound for the pair `(Q, R)`.
    pub fn bound(&self, q: &CubeId, r: &CubeId) -> f64 {
        let sep = separation_unchecked(q, r);
        let ratio = q.volume() / r.volume();
        let d = if q.edge() <= r.edge() { self.delta1 } else { self.delta2 };
        sep.powf(self.omega) * ratio.powf(d)
    }
}

type CubeFn = Arc<dyn Fn(&CubeId) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Power { tau: f64 },
    Constant { value: f64 },
    PiecewisePower { alpha: f64, beta: f64 },
    Length { g: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
    WeightPower { tau: f64, weight: MatrixWeight, cache: Arc<RwLock<HashMap<CubeId, f64>>> },
    Custom(CubeFn),
}

/// A positive function on dyadic cubes.
#[derive(Clone)]
pub struct GrowthFn {
    pub label: String,
    pub declared: Option<GrowthClass>,
    kind: Kind,
}

impl fmt::Debug for GrowthFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrowthFn").field("label", &self.label).field("declared", &self.declared).finish()
    }
}

/// JSON-nameable growth functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrowthSpec {
    Power { tau: f64 },
    Constant { value: f64 },
    /// `υ(Q) = ℓ(Q)^{exponent}` with `0 ≤ exponent ≤ n/p`.
    Length { exponent: f64, p: f64 },
    PiecewisePower { alpha: f64, beta: f64 },
    /// `υ(Q) = (∫_Q ‖W‖)^τ`.
    WeightPower { weight: WeightPreset, tau: f64 },
}

impl GrowthSpec {
    pub fn build(&self, n: usize) -> Result<GrowthFn> {
        match self {
            GrowthSpec::Power { tau } => GrowthFn::power(*tau),
            GrowthSpec::Constant { value } => GrowthFn::constant(*value),
            GrowthSpec::Length { exponent, p } => GrowthFn::length_power(n, *exponent, *p),
            GrowthSpec::PiecewisePower { alpha, beta } => GrowthFn::piecewise_power(*alpha, *beta),
            GrowthSpec::WeightPower { weight, tau } => GrowthFn::weight_power(weight.build(n)?, *tau),
        }
    }
}

impl Default for GrowthFn {
    fn default() -> Self {
        GrowthFn::one()
    }
}

impl GrowthFn {
    /// `υ ≡ 1`.
    pub fn one() -> Self {
        GrowthFn {
            label: "1".into(),
            declared: Some(GrowthClass { delta1: 0.0, delta2: 0.0, omega: 0.0 }),
            kind: Kind::Constant { value: 1.0 },
        }
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::Construction(format!("constant growth {value} is not positive")));
        }
        Ok(GrowthFn {
            label: format!("{value}"),
            declared: Some(GrowthClass::new(0.0, 0.0, 0.0)?),
            kind: Kind::Constant { value },
        })
    }

    /// `υ(Q) = |Q|^τ`.
    pub fn power(tau: f64) -> Result<Self> {
        if tau < 0.0 || !tau.is_finite() {
            return invalid(format!("power growth needs τ ≥ 0, got {tau}"));
        }
        Ok(GrowthFn {
            label: format!("|Q|^{tau}"),
            declared: Some(GrowthClass::new(tau, tau, 0.0)?),
            kind: Kind::Power { tau },
        })
    }

    /// `ℓ(Q)^β` for `ℓ(Q) ≥ 1`, `ℓ(Q)^α` otherwise.
    pub fn piecewise_power(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > beta {
            return invalid(format!("piecewise power needs α ≤ β, got α = {alpha}, β = {beta}"));
        }
        Ok(GrowthFn {
            label: format!("piecewise(α={alpha}, β={beta})"),
            declared: Some(GrowthClass::new(alpha, beta, 0.0)?),
            kind: Kind::PiecewisePower { alpha, beta },
        })
    }

    /// `υ(Q) = g(ℓ(Q))` with `g` nondecreasing and `g(t) t^{-n/p}` nonincreasing.
    pub fn length(p: f64, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(p > 0.0) {
            return invalid("length growth needs p > 0");
        }
        Ok(GrowthFn {
            label: "g(ℓ(Q))".into(),
            declared: Some(GrowthClass::new(0.0, 1.0 / p, 0.0)?),
            kind: Kind::Length { g: Arc::new(g) },
        })
    }

    pub fn length_power(n: usize, exponent: f64, p: f64) -> Result<Self> {
        if exponent < 0.0 || exponent > n as f64 / p + 1e-12 {
            return invalid(format!("length exponent must lie in [0, n/p], got {exponent}"));
        }
        let mut g = Self::length(p, move |l| l.powf(exponent))?;
        g.label = format!("ℓ(Q)^{exponent}");
        Ok(g)
    }

    /// `υ(Q) = (∫_Q ‖W‖)^τ`.
    pub fn weight_power(weight: MatrixWeight, tau: f64) -> Result<Self> {
        if tau < 0.0 || !tau.is_finite() {
            return invalid("weight power needs τ ≥ 0");
        }
        let declared = power_weight_exponents(&weight).map(|(lo, hi)| {
            let n = weight.n as f64;
            let d1 = tau * (1.0 + lo / n).min(1.0);
            let d2 = tau * (1.0 + hi / n).max(1.0);
            GrowthClass { delta1: d1, delta2: d2, omega: n * (d2 - d1) }
        });
        Ok(GrowthFn {
            label: format!("(∫‖{}‖)^{tau}", weight.label),
            declared,
            kind: Kind::WeightPower { tau, weight, cache: Arc::new(RwLock::new(HashMap::new())) },
        })
    }

    pub fn custom(label: impl Into<String>, declared: Option<GrowthClass>, f: impl Fn(&CubeId) -> f64 + Send + Sync + 'static) -> Self {
        GrowthFn { label: label.into(), declared, kind: Kind::Custom(Arc::new(f)) }
    }

    /// Replace the declared class, validating it.
    pub fn with_class(mut self, c: GrowthClass) -> Result<Self> {
        self.declared = Some(GrowthClass::new(c.delta1, c.delta2, c.omega)?);
        Ok(self)
    }

    pub fn eval(&self, q: &CubeId) -> f64 {
        match &self.kind {
            Kind::Power { tau } => q.volume().powf(*tau),
            Kind::Constant { value } => *value,
            Kind::PiecewisePower { alpha, beta } => {
                let l = q.edge();
                if l >= 1.0 {
                    l.powf(*beta)
                } else {
                    l.powf(*alpha)
                }
            }
            Kind::Length { g } => g(q.edge()),
            Kind::WeightPower { tau, weight, cache } => {
                if let Some(v) = cache.read().ok().and_then(|c| c.get(q).copied()) {
                    return v;
                }
                let v = norm_integral(weight, q).powf(*tau);
                if let Ok(mut c) = cache.write() {
                    c.insert(q.clone(), v);
                }
                v
            }
            Kind::Custom(f) => f(q),
        }
    }

    /// Evaluate on every window cube, rejecting nonpositive values.
    pub fn check_positive(&self, t: &Truncation) -> Result<()> {
        for q in t.enumerate(&CubeFilter::All)? {
            let v = self.eval(&q);
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Construction(format!("υ({q:?}) = {v} is not positive")));
            }
        }
        Ok(())
    }
}

/// Extreme exponents of `‖W‖` for scalar-multiple power weights.
fn power_weight_exponents(w: &MatrixWeight) -> Option<(f64, f64)> {
    let exps = w.diag_exponents()?;
    let lo = exps.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
    let hi = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    Some((lo, hi))
}

/// `∫_Q ‖W(x)‖ dx`, in closed form for one-dimensional power weights.
pub fn norm_integral(w: &MatrixWeight, q: &CubeId) -> f64 {
    if w.n == 1 {
        if let Some(v) = w.norm_integral_1d(q.corner()[0], q.edge()) {
            return v;
        }
    }
    let per = if w.n == 1 { 256 } else { 32 };
    let nodes = box_nodes(&q.corner(), q.edge(), per);
    let vals: Vec<f64> = nodes.chunks(w.n).filter_map(|x| w.norm_at(x)).collect();
    if vals.is_empty() {
        return 0.0;
    }
    vals.iter().sum::<f64>() / vals.len() as f64 * q.volume()
}

/// Report from [`class_constant`].
#[derive(Clone, Debug, Serialize)]
pub struct ClassReport {
    pub constant: f64,
    pub pairs: usize,
    pub subsampled: bool,
}

/// Pair-sweep cap before random subsampling.
pub const PAIR_CAP: usize = 2_000_000;

/// Largest `υ(Q)/υ(R)` divided by the growth bound over window pairs.
pub fn class_constant(u: &GrowthFn, class: GrowthClass, t: &Truncation) -> Result<ClassReport> {
    let class = GrowthClass::new(class.delta1, class.delta2, class.omega)?;
    let cubes = t.enumerate(&CubeFilter::All)?;
    if cubes.is_empty() {
        return Ok(ClassReport { constant: 1.0, pairs: 0, subsampled: false });
    }
    let vals: Vec<f64> = par::map_slice(&cubes, |q| u.eval(q));
    let n = cubes.len();
    let ratio = |a: usize, b: usize| vals[a] / vals[b] / class.bound(&cubes[a], &cubes[b]);
    if n * n <= PAIR_CAP {
        let c = par::max_range(n, |a| (0..n).map(|b| ratio(a, b)).fold(0.0, f64::max));
        return Ok(ClassReport { constant: c, pairs: n * n, subsampled: false });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6E0);
    let pairs: Vec<(usize, usize)> = (0..PAIR_CAP).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
    let c = par::max_range(pairs.len(), |i| ratio(pairs[i].0, pairs[i].1));
    Ok(ClassReport { constant: c, pairs: PAIR_CAP, subsampled: true })
}

/// Worst `υ(Q)/υ(P)` over nested window pairs `Q ⊆ P`, and whether it stays within `cap`.
pub fn is_almost_increasing(u: &GrowthFn, t: &Truncation, cap: f64) -> Result<(bool, f64)> {
    let cubes = t.enumerate(&CubeFilter::All)?;
    let worst = par::max_range(cubes.len(), |i| {
        let q = &cubes[i];
        let vq = u.eval(q);
        let mut w: f64 = 0.0;
        for lvl in t.j_min..=q.j {
            let p = q.ancestor(lvl).expect("ancestor within window");
            w = w.max(vq / u.eval(&p));
        }
        w
    });
    Ok((worst <= cap, worst))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(jmax: i32) -> Truncation {
        Truncation::new(1, 0, jmax, 1).unwrap()
    }

    #[test]
    fn builtin_examples() {
        let one = GrowthFn::power(0.0).unwrap();
        assert_eq!(one.eval(&CubeId::new(3, &[1])), 1.0);
        assert_eq!(one.declared, Some(GrowthClass { delta1: 0.0, delta2: 0.0, omega: 0.0 }));
        assert_eq!(GrowthFn::power(1.0).unwrap().eval(&CubeId::new(2, &[0])), 0.25);
        let w = GrowthFn::weight_power(MatrixWeight::identity(1, 1), 1.0).unwrap();
        assert!((w.eval(&CubeId::new(1, &[0])) - 0.5).abs() < 1e-15);
        assert!(GrowthFn::piecewise_power(1.0, 0.0).is_err());
        assert!(GrowthClass::new(1.0, 0.0, 0.0).is_err());
        assert!(GrowthClass::new(0.0, 1.0, -1.0).is_err());
        assert!(GrowthFn::constant(0.0).is_err());
    }

    #[test]
    fn class_constant_examples() {
        let p = GrowthFn::power(0.7).unwrap();
        let c = class_constant(&p, GrowthClass::new(0.7, 0.7, 0.0).unwrap(), &win(4)).unwrap();
        assert!((c.constant - 1.0).abs() < 1e-12);
        let p1 = GrowthFn::power(1.0).unwrap();
        let zero = GrowthClass::new(0.0, 0.0, 0.0).unwrap();
        let c1 = class_constant(&p1, zero, &win(4)).unwrap();
        assert!((c1.constant - 16.0).abs() < 1e-12);
        let five = GrowthFn::constant(5.0).unwrap();
        assert_eq!(class_constant(&five, zero, &win(3)).unwrap().constant, 1.0);
    }

    #[test]
    fn almost_increasing_examples() {
        let t = win(3);
        assert_eq!(is_almost_increasing(&GrowthFn::power(1.0).unwrap(), &t, 1.0).unwrap(), (true, 1.0));
        let inv = GrowthFn::custom("|Q|^-1", None, |q| 1.0 / q.volume());
        let (_, c) = is_almost_increasing(&inv, &t, 100.0).unwrap();
        assert!((c - 8.0).abs() < 1e-12);
    }

    #[test]
    fn weight_power_declares_class() {
        let w = MatrixWeight::diag_power(1, &[-0.5], None).unwrap();
        let g = GrowthFn::weight_power(w, 1.0).unwrap();
        let c = g.declared.unwrap();
        assert!((c.delta1 - 0.5).abs() < 1e-15 && (c.delta2 - 1.0).abs() < 1e-15);
        assert!((c.omega - 0.5).abs() < 1e-15);
        // ∫_0^1 x^{-1/2} = 2
        assert!((g.eval(&CubeId::new(0, &[0])) - 2.0).abs() < 1e-12);
        // ∫_{-1}^0 |x|^{-1/2} = 2
        assert!((g.eval(&CubeId::new(0, &[-1])) - 2.0).abs() < 1e-12);
    }
}
