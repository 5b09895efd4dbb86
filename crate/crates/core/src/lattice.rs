//! Integer mode lattices: elementary extensions `2r - s`, windowed closure,
//! saturation checks and extension-chain planning.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// A lattice wavevector `k` in `Z^d`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeIndex(pub SmallVec<[i64; 4]>);

impl ModeIndex {
    pub fn new(coords: &[i64]) -> Self {
        ModeIndex(SmallVec::from_slice(coords))
    }

    pub fn zero(dim: usize) -> Self {
        ModeIndex(SmallVec::from_elem(0, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// `2 self - other`.
    pub fn extend_with(&self, other: &ModeIndex) -> ModeIndex {
        ModeIndex(self.0.iter().zip(other.0.iter()).map(|(a, b)| 2 * a - b).collect())
    }

    pub fn sub(&self, other: &ModeIndex) -> ModeIndex {
        ModeIndex(self.0.iter().zip(other.0.iter()).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &ModeIndex) -> ModeIndex {
        ModeIndex(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    pub fn neg(&self) -> ModeIndex {
        ModeIndex(self.0.iter().map(|a| -a).collect())
    }

    /// `|k|^2`.
    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|a| a * a).sum()
    }

    pub fn norm_l1(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).sum()
    }

    pub fn norm_inf(&self) -> i64 {
        self.0.iter().map(|a| a.abs()).max().unwrap_or(0)
    }
}

impl fmt::Debug for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<&[i64]> for ModeIndex {
    fn from(v: &[i64]) -> Self {
        ModeIndex::new(v)
    }
}

impl<const N: usize> From<[i64; N]> for ModeIndex {
    fn from(v: [i64; N]) -> Self {
        ModeIndex::new(&v)
    }
}

/// A finite set of modes of a common dimension. Serialized as a JSON array
/// of integer vectors.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModeIndex>", into = "Vec<ModeIndex>")]
pub struct ModeSet {
    dim: usize,
    members: BTreeSet<ModeIndex>,
}

impl TryFrom<Vec<ModeIndex>> for ModeSet {
    type Error = Error;
    fn try_from(v: Vec<ModeIndex>) -> Result<Self> {
        let dim = v
            .first()
            .map(|k| k.dim())
            .ok_or_else(|| Error::InvalidArgument("mode set must not be empty".into()))?;
        ModeSet::from_modes(dim, v)
    }
}

impl From<ModeSet> for Vec<ModeIndex> {
    fn from(s: ModeSet) -> Self {
        s.members.into_iter().collect()
    }
}

impl ModeSet {
    pub fn empty(dim: usize) -> Self {
        ModeSet { dim, members: BTreeSet::new() }
    }

    pub fn from_modes<I: IntoIterator<Item = ModeIndex>>(dim: usize, modes: I) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        let mut members = BTreeSet::new();
        for k in modes {
            if k.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: k.dim() });
            }
            members.insert(k);
        }
        Ok(ModeSet { dim, members })
    }

    /// Convenience constructor from coordinate slices; panics on ragged input.
    pub fn from_coords(coords: &[&[i64]]) -> Self {
        let dim = coords.first().map(|c| c.len()).expect("non-empty mode list");
        ModeSet::from_modes(dim, coords.iter().map(|c| ModeIndex::new(c)))
            .expect("consistent dimensions")
    }

    /// All modes with `|k|_inf <= radius`.
    pub fn box_modes(dim: usize, radius: i64) -> Self {
        let side = (2 * radius + 1) as usize;
        let total = side.pow(dim as u32);
        let mut members = BTreeSet::new();
        for lin in 0..total {
            members.insert(box_mode(dim, radius, lin));
        }
        ModeSet { dim, members }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, k: &ModeIndex) -> bool {
        self.members.contains(k)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModeIndex> {
        self.members.iter()
    }

    pub fn insert(&mut self, k: ModeIndex) -> Result<bool> {
        self.check_dim(&k)?;
        Ok(self.members.insert(k))
    }

    pub fn is_subset(&self, other: &ModeSet) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn union(&self, other: &ModeSet) -> ModeSet {
        ModeSet { dim: self.dim, members: self.members.union(&other.members).cloned().collect() }
    }

    pub fn difference(&self, other: &ModeSet) -> ModeSet {
        ModeSet {
            dim: self.dim,
            members: self.members.difference(&other.members).cloned().collect(),
        }
    }

    pub fn max_norm_inf(&self) -> i64 {
        self.members.iter().map(|k| k.norm_inf()).max().unwrap_or(0)
    }

    fn check_dim(&self, k: &ModeIndex) -> Result<()> {
        if k.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: k.dim() });
        }
        Ok(())
    }

    /// Residue class mod 2 shared by every member, if there is one.
    pub fn common_parity(&self) -> Option<Vec<i64>> {
        let mut it = self.members.iter();
        let first: Vec<i64> = it.next()?.0.iter().map(|c| c.rem_euclid(2)).collect();
        for k in it {
            if k.0.iter().zip(&first).any(|(c, p)| c.rem_euclid(2) != *p) {
                return None;
            }
        }
        Some(first)
    }
}

/// Mode at linear position `lin` of the box `|k|_inf <= radius`, row-major
/// with the first coordinate varying slowest.
pub(crate) fn box_mode(dim: usize, radius: i64, mut lin: usize) -> ModeIndex {
    let side = (2 * radius + 1) as usize;
    let mut coords: SmallVec<[i64; 4]> = SmallVec::from_elem(0, dim);
    for j in (0..dim).rev() {
        coords[j] = (lin % side) as i64 - radius;
        lin /= side;
    }
    ModeIndex(coords)
}

/// Returns `set ∪ {2r - s}`.
pub fn elementary_extension(set: &ModeSet, r: &ModeIndex, s: &ModeIndex) -> Result<ModeSet> {
    set.check_dim(r)?;
    set.check_dim(s)?;
    for k in [r, s] {
        if !set.contains(k) {
            return Err(Error::ModeNotInSet(k.clone()));
        }
    }
    let mut out = set.clone();
    out.members.insert(r.extend_with(s));
    Ok(out)
}

/// One step of an extension chain: `new = 2r - s`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainStep {
    pub r: ModeIndex,
    pub s: ModeIndex,
    pub new: ModeIndex,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtensionChain {
    pub base: ModeSet,
    pub steps: Vec<ChainStep>,
}

impl ExtensionChain {
    pub fn empty(base: ModeSet) -> Self {
        ExtensionChain { base, steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Replays the chain, checking each step, and returns the sets
    /// `K^0 = base, K^1, ..., K^L`.
    pub fn replay(&self) -> Result<Vec<ModeSet>> {
        let mut sets = vec![self.base.clone()];
        for step in &self.steps {
            let cur = sets.last().expect("non-empty");
            if step.r.extend_with(&step.s) != step.new {
                return Err(Error::InvalidArgument(format!(
                    "step {} -> {} is not 2r - s",
                    step.r, step.new
                )));
            }
            if cur.contains(&step.new) {
                return Err(Error::InvalidArgument(format!(
                    "step adds {} which is already present",
                    step.new
                )));
            }
            let next = elementary_extension(cur, &step.r, &step.s)?;
            sets.push(next);
        }
        Ok(sets)
    }

    pub fn final_set(&self) -> Result<ModeSet> {
        Ok(self.replay()?.pop().expect("non-empty"))
    }
}

/// Dense membership table over the box `|k|_inf <= radius`.
struct BoxTable {
    radius: i64,
    side: i64,
    flags: Vec<bool>,
}

impl BoxTable {
    fn new(dim: usize, radius: i64) -> Self {
        let side = 2 * radius + 1;
        BoxTable { radius, side, flags: vec![false; (side as usize).pow(dim as u32)] }
    }

    fn index(&self, k: &[i64]) -> Option<usize> {
        let mut lin = 0i64;
        for &c in k {
            if c.abs() > self.radius {
                return None;
            }
            lin = lin * self.side + (c + self.radius);
        }
        Some(lin as usize)
    }

    fn insert(&mut self, k: &[i64]) -> bool {
        match self.index(k) {
            Some(i) if !self.flags[i] => {
                self.flags[i] = true;
                true
            }
            _ => false,
        }
    }

    fn contains(&self, k: &[i64]) -> bool {
        self.index(k).is_some_and(|i| self.flags[i])
    }
}

fn check_window(window: i64, max_iter: usize) -> Result<()> {
    if window < 1 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    if max_iter < 1 {
        return Err(Error::InvalidArgument("maxIter must be at least 1".into()));
    }
    Ok(())
}

/// Default closure iteration cap for a window.
pub fn default_max_iter(window: i64) -> usize {
    (4 * window).max(1) as usize
}

/// Iterates `K^j = {2m - n | m, n in K^{j-1}}`. Members within `2 window`
/// are retained internally; each reported set is cut to `|k|_inf <= window`.
/// Stops when the internal set stops growing, the window is full, or after
/// `max_iter` iterations.
pub fn closure_sequence(base: &ModeSet, window: i64, max_iter: usize) -> Result<Vec<ModeSet>> {
    check_window(window, max_iter)?;
    let dim = base.dim();
    let halo = 2 * window;
    let mut table = BoxTable::new(dim, halo);
    let mut current: Vec<ModeIndex> = Vec::new();
    for k in base.iter() {
        if table.insert(k.coords()) {
            current.push(k.clone());
        }
    }
    let window_size = ((2 * window + 1) as usize).pow(dim as u32);
    let mut out = Vec::new();
    let mut buf = vec![0i64; dim];
    for _ in 0..max_iter {
        let mut added = Vec::new();
        for m in &current {
            for n in &current {
                for j in 0..dim {
                    buf[j] = 2 * m.0[j] - n.0[j];
                }
                if table.insert(&buf) {
                    added.push(ModeIndex::new(&buf));
                }
            }
        }
        let grew = !added.is_empty();
        current.extend(added);
        let in_window = ModeSet::from_modes(
            dim,
            current.iter().filter(|k| k.norm_inf() <= window).cloned(),
        )?;
        let full = in_window.len() == window_size;
        out.push(in_window);
        if !grew || full {
            break;
        }
    }
    Ok(out)
}

/// Window-bounded saturation verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationVerdict {
    /// True when the closure fills the whole window box. This is a
    /// window-bounded proxy; saturation of all of `Z^d` is not finitely checkable.
    pub saturating_within_window: bool,
    pub window: i64,
    pub iterations: usize,
    pub reached: usize,
    pub window_size: usize,
    /// Unreached mode of least `l1` norm, ties broken towards the
    /// lexicographically largest (positive directions first).
    pub witness: Option<ModeIndex>,
}

pub fn is_saturating_within(base: &ModeSet, window: i64, max_iter: usize) -> Result<SaturationVerdict> {
    let seq = closure_sequence(base, window, max_iter)?;
    let dim = base.dim();
    let last = seq.last().cloned().unwrap_or_else(|| ModeSet::empty(dim));
    let window_box = ModeSet::box_modes(dim, window);
    let witness = window_box
        .iter()
        .filter(|k| !last.contains(k))
        .min_by(|a, b| a.norm_l1().cmp(&b.norm_l1()).then_with(|| b.cmp(a)))
        .cloned();
    Ok(SaturationVerdict {
        saturating_within_window: witness.is_none(),
        window,
        iterations: seq.len(),
        reached: last.len(),
        window_size: window_box.len(),
        witness,
    })
}

/// Generator set of all `2^d` subset sums of `k_list`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeGenerators {
    pub set: ModeSet,
    pub det: i64,
    /// Set when `|det| != 1`, in which case the set need not saturate.
    pub det_warning: bool,
}

pub fn build_cube_generators(k_list: &[ModeIndex]) -> Result<CubeGenerators> {
    let d = k_list.len();
    if d == 0 {
        return Err(Error::InvalidArgument("need at least one generator".into()));
    }
    for k in k_list {
        if k.dim() != d {
            return Err(Error::InvalidArgument(format!(
                "expected {d} generators of dimension {d}, got one of dimension {}",
                k.dim()
            )));
        }
    }
    let rows: Vec<Vec<i64>> = k_list.iter().map(|k| k.coords().to_vec()).collect();
    let det = integer_det(&rows);
    if det == 0 {
        return Err(Error::InvalidArgument("generators are linearly dependent".into()));
    }
    let mut set = ModeSet::empty(d);
    for mask in 0u32..(1u32 << d) {
        let mut acc = ModeIndex::zero(d);
        for (j, k) in k_list.iter().enumerate() {
            if mask & (1 << j) != 0 {
                acc = acc.add(k);
            }
        }
        set.members.insert(acc);
    }
    Ok(CubeGenerators { set, det, det_warning: det.abs() != 1 })
}

/// Fraction-free (Bareiss) determinant.
fn integer_det(rows: &[Vec<i64>]) -> i64 {
    let n = rows.len();
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    (sign * a[n - 1][n - 1]) as i64
}

/// Breadth-first chain planning. Each newly reached mode records the
/// generating pair `(r, s)` from the previous layer with least
/// `|r|_1 + |s|_1`, ties broken lexicographically. The chain contains
/// exactly the modes needed to reach `targets`, ordered by layer.
pub fn plan_extension_chain(base: &ModeSet, targets: &ModeSet, window: i64) -> Result<ExtensionChain> {
    plan_extension_chain_with(base, targets, window, default_max_iter(window))
}

pub fn plan_extension_chain_with(
    base: &ModeSet,
    targets: &ModeSet,
    window: i64,
    max_iter: usize,
) -> Result<ExtensionChain> {
    check_window(window, max_iter)?;
    if targets.dim() != base.dim() {
        return Err(Error::DimensionMismatch { expected: base.dim(), found: targets.dim() });
    }
    if let Some(k) = targets.iter().find(|k| k.norm_inf() > window) {
        return Err(Error::InvalidArgument(format!("target {k} lies outside the window")));
    }
    let dim = base.dim();
    let halo = 2 * window;
    let mut table = BoxTable::new(dim, halo);
    let mut current: Vec<ModeIndex> = Vec::new();
    for k in base.iter() {
        if table.insert(k.coords()) {
            current.push(k.clone());
        }
    }
    // mode -> (layer, r, s)
    let mut parent: BTreeMap<ModeIndex, (usize, ModeIndex, ModeIndex)> = BTreeMap::new();
    let reached_all = |table: &BoxTable| targets.iter().all(|k| base.contains(k) || table.contains(k.coords()));
    let mut layer = 0;
    while !reached_all(&table) && layer < max_iter {
        layer += 1;
        let mut best: BTreeMap<ModeIndex, (i64, ModeIndex, ModeIndex)> = BTreeMap::new();
        for m in &current {
            for n in &current {
                let new = m.extend_with(n);
                if table.contains(new.coords()) || new.norm_inf() > halo {
                    continue;
                }
                let cost = m.norm_l1() + n.norm_l1();
                let better = match best.get(&new) {
                    None => true,
                    Some((c, r, s)) => (cost, m, n) < (*c, r, s),
                };
                if better {
                    best.insert(new, (cost, m.clone(), n.clone()));
                }
            }
        }
        if best.is_empty() {
            break;
        }
        for (new, (_, r, s)) in best {
            table.insert(new.coords());
            current.push(new.clone());
            parent.insert(new, (layer, r, s));
        }
    }
    let unreached: Vec<ModeIndex> = targets
        .iter()
        .filter(|k| !base.contains(k) && !parent.contains_key(*k))
        .cloned()
        .collect();
    if !unreached.is_empty() {
        return Err(Error::NoChainFound { unreached });
    }
    // Collect the ancestors of the targets.
    let mut needed: BTreeSet<(usize, ModeIndex)> = BTreeSet::new();
    let mut stack: Vec<ModeIndex> = targets.iter().filter(|k| !base.contains(k)).cloned().collect();
    while let Some(k) = stack.pop() {
        let (l, r, s) = &parent[&k];
        if needed.insert((*l, k.clone())) {
            for p in [r, s] {
                if !base.contains(p) {
                    stack.push(p.clone());
                }
            }
        }
    }
    let steps = needed
        .into_iter()
        .map(|(_, new)| {
            let (_, r, s) = parent[&new].clone();
            ChainStep { r, s, new }
        })
        .collect();
    let chain = ExtensionChain { base: base.clone(), steps };
    chain.replay()?;
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube2() -> ModeSet {
        ModeSet::from_coords(&[&[0, 0], &[1, 0], &[0, 1], &[1, 1]])
    }

    #[test]
    fn extension_adds_two_r_minus_s() {
        let out = elementary_extension(&cube2(), &[1, 0].into(), &[0, 1].into()).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.contains(&[2, -1].into()));
    }

    #[test]
    fn extension_with_equal_pair_is_identity() {
        let k: ModeIndex = [1, 1].into();
        assert_eq!(elementary_extension(&cube2(), &k, &k).unwrap(), cube2());
    }

    #[test]
    fn extension_in_one_dimension() {
        let base = ModeSet::from_coords(&[&[0], &[1]]);
        let out = elementary_extension(&base, &[0].into(), &[1].into()).unwrap();
        assert_eq!(out, ModeSet::from_coords(&[&[-1], &[0], &[1]]));
    }

    #[test]
    fn extension_errors() {
        assert!(matches!(
            elementary_extension(&cube2(), &[2, 2].into(), &[0, 0].into()),
            Err(Error::ModeNotInSet(_))
        ));
        assert!(matches!(
            elementary_extension(&cube2(), &[1].into(), &[0, 0].into()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn witness_on_even_sublattice() {
        let base = ModeSet::from_coords(&[&[0, 0], &[2, 0], &[0, 2], &[2, 2]]);
        let v = is_saturating_within(&base, 3, default_max_iter(3)).unwrap();
        assert!(!v.saturating_within_window);
        assert_eq!(v.witness, Some([1, 0].into()));
    }

    #[test]
    fn cube_generators() {
        let g = build_cube_generators(&[[1, 0].into(), [0, 1].into()]).unwrap();
        assert_eq!(g.set, cube2());
        assert!(!g.det_warning);
        let g = build_cube_generators(&[[1].into()]).unwrap();
        assert_eq!(g.set, ModeSet::from_coords(&[&[0], &[1]]));
        let g = build_cube_generators(&[[2, 0].into(), [0, 1].into()]).unwrap();
        assert_eq!(g.det, 2);
        assert!(g.det_warning);
        assert!(build_cube_generators(&[[1, 0].into()]).is_err());
    }

    #[test]
    fn bareiss_matches_cofactor() {
        assert_eq!(integer_det(&[vec![2, 1, 0], vec![1, 3, 1], vec![0, 1, 4]]), 18);
        assert_eq!(integer_det(&[vec![0, 1], vec![1, 0]]), -1);
    }

    #[test]
    fn single_step_chain() {
        let targets = ModeSet::from_coords(&[&[2, -1]]);
        let chain = plan_extension_chain(&cube2(), &targets, 2).unwrap();
        assert_eq!(
            chain.steps,
            vec![ChainStep { r: [1, 0].into(), s: [0, 1].into(), new: [2, -1].into() }]
        );
    }

    #[test]
    fn chain_to_unit_box() {
        let targets = ModeSet::box_modes(2, 1);
        let chain = plan_extension_chain(&cube2(), &targets, 1).unwrap();
        assert_eq!(chain.len(), 5);
        let added: BTreeSet<ModeIndex> = chain.steps.iter().map(|s| s.new.clone()).collect();
        let expected: BTreeSet<ModeIndex> =
            [[-1, 0], [0, -1], [-1, 1], [1, -1], [-1, -1]].into_iter().map(ModeIndex::from).collect();
        assert_eq!(added, expected);
        assert!(targets.is_subset(&chain.final_set().unwrap()));
    }

    #[test]
    fn parity_blocks_chain() {
        let base = ModeSet::from_coords(&[&[0], &[2]]);
        let targets = ModeSet::from_coords(&[&[1]]);
        assert!(matches!(
            plan_extension_chain(&base, &targets, 5),
            Err(Error::NoChainFound { .. })
        ));
    }

    #[test]
    fn json_round_trip() {
        let s = serde_json::to_string(&cube2()).unwrap();
        assert_eq!(s, "[[0,0],[0,1],[1,0],[1,1]]");
        let back: ModeSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cube2());
        assert!(serde_json::from_str::<ModeSet>("[[0,0],[1]]").is_err());
    }
}
