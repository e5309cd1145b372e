//! Dyadic cubes, finite windows of cubes and their finest-cell layout.

use std::cmp::Ordering;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Result};

/// Integer coordinate vector of a cube.
pub type Coords = SmallVec<[i64; 3]>;

/// The dyadic cube `2^{-j}([0,1)^n + k)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubeId {
    pub j: i32,
    pub k: Coords,
}

impl Ord for CubeId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.j
            .cmp(&other.j)
            .then_with(|| self.k.as_slice().cmp(other.k.as_slice()))
    }
}

impl PartialOrd for CubeId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `2^{-j}` computed exactly.
#[inline]
pub fn edge_of_level(j: i32) -> f64 {
    2f64.powi(-j)
}

impl CubeId {
    pub fn new(j: i32, k: &[i64]) -> Self {
        CubeId { j, k: Coords::from_slice(k) }
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    pub fn edge(&self) -> f64 {
        edge_of_level(self.j)
    }

    /// Lebesgue measure `2^{-jn}`.
    pub fn volume(&self) -> f64 {
        2f64.powi(-self.j * self.dim() as i32)
    }

    /// Lower corner `x_Q = 2^{-j} k`.
    pub fn corner(&self) -> Vec<f64> {
        let h = self.edge();
        self.k.iter().map(|&k| k as f64 * h).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        let h = self.edge();
        self.k.iter().map(|&k| (k as f64 + 0.5) * h).collect()
    }

    /// `(x_Q, ℓ(Q), j_Q)`.
    pub fn geometry(&self) -> (Vec<f64>, f64, i32) {
        (self.corner(), self.edge(), self.j)
    }

    pub fn parent(&self) -> CubeId {
        CubeId { j: self.j - 1, k: self.k.iter().map(|&k| k >> 1).collect() }
    }

    /// The `2^n` children in lexicographic order.
    pub fn children(&self) -> Vec<CubeId> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| CubeId {
                j: self.j + 1,
                k: (0..n).map(|i| 2 * self.k[i] + ((mask >> (n - 1 - i)) & 1) as i64).collect(),
            })
            .collect()
    }

    /// The unique level-`i` cube containing this one.
    pub fn ancestor(&self, i: i32) -> Result<CubeId> {
        if i > self.j {
            return invalid(format!("ancestor level {i} is finer than cube level {}", self.j));
        }
        let sh = (self.j - i) as u32;
        Ok(CubeId { j: i, k: self.k.iter().map(|&k| shr(k, sh)).collect() })
    }

    /// Whether `other ⊆ self`.
    pub fn contains(&self, other: &CubeId) -> bool {
        other.j >= self.j
            && other.dim() == self.dim()
            && other
                .k
                .iter()
                .zip(self.k.iter())
                .all(|(&a, &b)| shr(a, (other.j - self.j) as u32) == b)
    }
}

#[inline]
fn shr(k: i64, s: u32) -> i64 {
    if s >= 63 {
        if k < 0 {
            -1
        } else {
            0
        }
    } else {
        k >> s
    }
}

/// `1 + |x_Q - x_R| / max(ℓ(Q), ℓ(R))` with Euclidean distance of lower corners.
pub fn separation(q: &CubeId, r: &CubeId) -> Result<f64> {
    if q.dim() != r.dim() {
        return invalid(format!("dimension mismatch {} vs {}", q.dim(), r.dim()));
    }
    Ok(separation_unchecked(q, r))
}

pub(crate) fn separation_unchecked(q: &CubeId, r: &CubeId) -> f64 {
    let (hq, hr) = (q.edge(), r.edge());
    let d2: f64 = q
        .k
        .iter()
        .zip(r.k.iter())
        .map(|(&a, &b)| {
            let d = a as f64 * hq - b as f64 * hr;
            d * d
        })
        .sum();
    1.0 + d2.sqrt() / hq.max(hr)
}

/// A finite window of dyadic cubes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub n: usize,
    pub j_min: i32,
    pub j_max: i32,
    pub root_extent: usize,
}

/// Selection for [`Truncation::enumerate`].
#[derive(Clone, Debug)]
pub enum CubeFilter {
    All,
    Level(i32),
    ContainedIn(CubeId),
}

impl Truncation {
    pub fn new(n: usize, j_min: i32, j_max: i32, root_extent: usize) -> Result<Self> {
        let t = Truncation { n, j_min, j_max, root_extent };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("dimension must be at least 1");
        }
        if self.j_min > self.j_max {
            return invalid(format!("j_min {} exceeds j_max {}", self.j_min, self.j_max));
        }
        if self.root_extent == 0 {
            return invalid("root_extent must be at least 1");
        }
        let bits = self.n as u64 * (self.j_max - self.j_min) as u64;
        if bits > 40 {
            return invalid("window too large");
        }
        Ok(())
    }

    /// Lowest root coordinate along each axis.
    pub fn root_lo(&self) -> i64 {
        -((self.root_extent / 2) as i64)
    }

    pub fn levels(&self) -> usize {
        (self.j_max - self.j_min + 1) as usize
    }

    /// Per-axis range of `k` at level `j`.
    pub fn axis_range(&self, j: i32) -> Range<i64> {
        let s = 1i64 << (j - self.j_min);
        let lo = self.root_lo() * s;
        lo..lo + self.root_extent as i64 * s
    }

    pub fn cubes_at_level(&self, j: i32) -> usize {
        (self.root_extent << (j - self.j_min)).pow(self.n as u32)
    }

    pub fn cube_count(&self) -> usize {
        (self.j_min..=self.j_max).map(|j| self.cubes_at_level(j)).sum()
    }

    pub fn contains_cube(&self, q: &CubeId) -> bool {
        if q.dim() != self.n || q.j < self.j_min || q.j > self.j_max {
            return false;
        }
        let r = self.axis_range(q.j);
        q.k.iter().all(|k| r.contains(k))
    }

    /// Lower corner and edge of the window hull.
    pub fn hull(&self) -> (f64, f64) {
        let h = edge_of_level(self.j_min);
        (self.root_lo() as f64 * h, self.root_extent as f64 * h)
    }

    /// Cubes in lexicographic `(j, k)` order.
    pub fn enumerate(&self, filter: &CubeFilter) -> Result<Vec<CubeId>> {
        match filter {
            CubeFilter::All => {
                let mut out = Vec::with_capacity(self.cube_count());
                for j in self.j_min..=self.j_max {
                    self.push_level(j, &mut out);
                }
                Ok(out)
            }
            CubeFilter::Level(j) => {
                if *j < self.j_min || *j > self.j_max {
                    return invalid(format!("level {j} outside [{}, {}]", self.j_min, self.j_max));
                }
                let mut out = Vec::with_capacity(self.cubes_at_level(*j));
                self.push_level(*j, &mut out);
                Ok(out)
            }
            CubeFilter::ContainedIn(p) => {
                if !self.contains_cube(p) {
                    return invalid("cube is not inside the window");
                }
                let mut out = Vec::new();
                for j in p.j..=self.j_max {
                    let s = j - p.j;
                    let ranges: Vec<Range<i64>> =
                        p.k.iter().map(|&k| (k << s)..((k + 1) << s)).collect();
                    lex_product(&ranges, |k| out.push(CubeId::new(j, k)));
                }
                Ok(out)
            }
        }
    }

    fn push_level(&self, j: i32, out: &mut Vec<CubeId>) {
        let r = self.axis_range(j);
        let ranges = vec![r; self.n];
        lex_product(&ranges, |k| out.push(CubeId::new(j, k)));
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.clone())
    }
}

fn lex_product(ranges: &[Range<i64>], mut f: impl FnMut(&[i64])) {
    if ranges.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.start).collect();
    loop {
        f(&cur);
        let mut i = ranges.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < ranges[i].end {
                break;
            }
            cur[i] = ranges[i].start;
        }
    }
}

/// Morton (Z-order) layout of a window: every cube is a contiguous run of finest cells.
#[derive(Clone, Debug)]
pub struct Layout {
    pub trunc: Truncation,
    depth: u32,
}

impl Layout {
    pub fn new(trunc: Truncation) -> Self {
        let depth = (trunc.j_max - trunc.j_min) as u32;
        Layout { trunc, depth }
    }

    pub fn n(&self) -> usize {
        self.trunc.n
    }

    /// Number of level-`j` blocks.
    pub fn blocks(&self, j: i32) -> usize {
        self.trunc.cubes_at_level(j)
    }

    pub fn cells(&self) -> usize {
        self.blocks(self.trunc.j_max)
    }

    /// Finest cells per level-`j` block.
    pub fn cells_per_block(&self, j: i32) -> usize {
        1usize << (self.n() as u32 * (self.trunc.j_max - j) as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        edge_of_level(self.trunc.j_max).powi(self.n() as i32)
    }

    /// Block index of a window cube.
    pub fn block_of(&self, q: &CubeId) -> Option<usize> {
        if !self.trunc.contains_cube(q) {
            return None;
        }
        let n = self.n();
        let d = (q.j - self.trunc.j_min) as u32;
        let lo = self.trunc.root_lo();
        let r = self.trunc.root_extent;
        let mut root = 0usize;
        let mut code = 0usize;
        for (i, &k) in q.k.iter().enumerate() {
            let rel = (k - (lo << d)) as usize;
            root = root * r + (rel >> d);
            let local = rel & ((1usize << d) - 1);
            for b in 0..d {
                code |= ((local >> b) & 1) << (b as usize * n + (n - 1 - i));
            }
        }
        Some((root << (n as u32 * d)) | code)
    }

    /// Inverse of [`Layout::block_of`].
    pub fn cube_of_block(&self, j: i32, b: usize) -> CubeId {
        let n = self.n();
        let d = (j - self.trunc.j_min) as u32;
        let r = self.trunc.root_extent;
        let mut root = b >> (n as u32 * d);
        let code = b & ((1usize << (n as u32 * d)) - 1);
        let mut k = vec![0i64; n];
        for i in (0..n).rev() {
            let ri = root % r;
            root /= r;
            let mut local = 0usize;
            for bit in 0..d {
                local |= ((code >> (bit as usize * n + (n - 1 - i))) & 1) << bit;
            }
            k[i] = ((ri << d) | local) as i64 + (self.trunc.root_lo() << d);
        }
        CubeId::new(j, &k)
    }

    /// Finest cells covered by level-`j` block `b`.
    pub fn cell_range(&self, j: i32, b: usize) -> Range<usize> {
        let c = self.cells_per_block(j);
        b * c..(b + 1) * c
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Lower corners of every finest cell, flattened (`n` values per cell).
    pub fn cell_corners(&self) -> Vec<f64> {
        let jm = self.trunc.j_max;
        let mut out = Vec::with_capacity(self.cells() * self.n());
        for c in 0..self.cells() {
            out.extend(self.cube_of_block(jm, c).corner());
        }
        out
    }

    /// Midpoint quadrature nodes, `g^n` per finest cell, grouped by cell.
    pub fn nodes(&self, g: usize) -> Vec<f64> {
        let n = self.n();
        let h = edge_of_level(self.trunc.j_max);
        let corners = self.cell_corners();
        let per = g.pow(n as u32);
        let mut out = Vec::with_capacity(self.cells() * per * n);
        for c in 0..self.cells() {
            let base = &corners[c * n..(c + 1) * n];
            for a in 0..per {
                let mut rem = a;
                let mut pt = [0.0; 8];
                for i in (0..n).rev() {
                    pt[i] = base[i] + ((rem % g) as f64 + 0.5) * h / g as f64;
                    rem /= g;
                }
                out.extend_from_slice(&pt[..n]);
            }
        }
        out
    }

    /// Index of the finest cell containing point `x`, if inside the window.
    pub fn cell_of_point(&self, x: &[f64]) -> Option<usize> {
        let jm = self.trunc.j_max;
        let s = 2f64.powi(jm);
        let k: Vec<i64> = x.iter().map(|&v| (v * s).floor() as i64).collect();
        self.block_of(&CubeId::new(jm, &k))
    }
}

/// Midpoint nodes of an axis-aligned box, `per_axis^n` of them.
pub fn box_nodes(corner: &[f64], edge: f64, per_axis: usize) -> Vec<f64> {
    let n = corner.len();
    let total = per_axis.pow(n as u32);
    let mut out = Vec::with_capacity(total * n);
    let step = edge / per_axis as f64;
    for a in 0..total {
        let mut rem = a;
        let start = out.len();
        out.resize(start + n, 0.0);
        for i in (0..n).rev() {
            out[start + i] = corner[i] + ((rem % per_axis) as f64 + 0.5) * step;
            rem /= per_axis;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_examples() {
        let q = CubeId::new(0, &[0]);
        assert_eq!(q.geometry(), (vec![0.0], 1.0, 0));
        let q = CubeId::new(2, &[3]);
        assert_eq!(q.geometry(), (vec![0.75], 0.25, 2));
        let q = CubeId::new(-1, &[1, 0]);
        assert_eq!(q.geometry(), (vec![2.0, 0.0], 2.0, -1));
    }

    #[test]
    fn relations() {
        let q = CubeId::new(0, &[0]);
        assert_eq!(q.children(), vec![CubeId::new(1, &[0]), CubeId::new(1, &[1])]);
        assert_eq!(CubeId::new(1, &[1]).parent(), q);
        assert_eq!(CubeId::new(3, &[5]).ancestor(1).unwrap(), CubeId::new(1, &[1]));
        assert!(CubeId::new(1, &[1]).ancestor(2).is_err());
        assert_eq!(CubeId::new(2, &[-1]).parent(), CubeId::new(1, &[-1]));
        assert!(CubeId::new(0, &[-1]).contains(&CubeId::new(3, &[-3])));
    }

    #[test]
    fn separation_examples() {
        let a = CubeId::new(0, &[3]);
        let b = CubeId::new(0, &[0]);
        assert_eq!(separation(&a, &a).unwrap(), 1.0);
        assert_eq!(separation(&a, &b).unwrap(), 4.0);
        assert_eq!(separation(&CubeId::new(1, &[0]), &CubeId::new(0, &[2])).unwrap(), 3.0);
        assert!(separation(&a, &CubeId::new(0, &[0, 0])).is_err());
    }

    #[test]
    fn enumerate_examples() {
        let t = Truncation::new(1, 0, 1, 1).unwrap();
        let all = t.enumerate(&CubeFilter::All).unwrap();
        assert_eq!(all.len(), 3);
        let inside = t.enumerate(&CubeFilter::ContainedIn(CubeId::new(0, &[0]))).unwrap();
        assert_eq!(inside, vec![CubeId::new(0, &[0]), CubeId::new(1, &[0]), CubeId::new(1, &[1])]);
        let t2 = Truncation::new(2, 0, 0, 2).unwrap();
        assert_eq!(t2.enumerate(&CubeFilter::All).unwrap().len(), 4);
        assert!(t.enumerate(&CubeFilter::Level(5)).is_err());
    }

    #[test]
    fn enumeration_is_sorted() {
        let t = Truncation::new(2, -1, 2, 3).unwrap();
        let all = t.enumerate(&CubeFilter::All).unwrap();
        assert_eq!(all.len(), t.cube_count());
        assert!(all.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn layout_round_trip_and_contiguity() {
        for (n, r) in [(1usize, 3usize), (2, 2), (3, 1)] {
            let t = Truncation::new(n, -1, 2, r).unwrap();
            let lay = t.layout();
            for j in t.j_min..=t.j_max {
                for q in t.enumerate(&CubeFilter::Level(j)).unwrap() {
                    let b = lay.block_of(&q).unwrap();
                    assert_eq!(lay.cube_of_block(j, b), q);
                    for c in lay.cell_range(j, b) {
                        let cell = lay.cube_of_block(t.j_max, c);
                        assert!(q.contains(&cell));
                    }
                }
            }
        }
    }

    #[test]
    fn cell_of_point_matches_containment() {
        let t = Truncation::new(2, 0, 3, 2).unwrap();
        let lay = t.layout();
        let c = lay.cell_of_point(&[-0.3, 0.7]).unwrap();
        let cube = lay.cube_of_block(3, c);
        assert_eq!(cube, CubeId::new(3, &[-3, 5]));
        assert!(lay.cell_of_point(&[5.0, 0.0]).is_none());
    }
}
