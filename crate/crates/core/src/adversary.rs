//! Threshold and general mixed adversary structures.
//!
//! Parties are numbered `1..=n`; party `P_i` is bit `i - 1` of a [`PartySet`].
//! A [`Structure`] is stored by its maximal sets only (an antichain), sorted
//! ascending by member list. Membership means "subset of some maximal set".

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_PARTIES: usize = 32;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PartySet {
    n: u8,
    mask: u32,
}

impl PartySet {
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_PARTIES, "at most {MAX_PARTIES} parties");
        Self { n: n as u8, mask: 0 }
    }

    pub fn full(n: usize) -> Self {
        let mut s = Self::empty(n);
        s.mask = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
        s
    }

    /// From 1-based party indices.
    pub fn from_members(n: usize, members: &[usize]) -> Result<Self> {
        let mut s = Self::empty(n);
        for &p in members {
            if p == 0 || p > n {
                return Err(Error::InvalidParameter(format!("party index {p} outside 1..={n}")));
            }
            s.mask |= 1 << (p - 1);
        }
        Ok(s)
    }

    pub fn from_mask(n: usize, mask: u32) -> Self {
        let mut s = Self::empty(n);
        s.mask = mask & Self::full(n).mask;
        s
    }

    pub fn universe(&self) -> usize {
        self.n as usize
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.mask == 0
    }

    pub fn contains(&self, party: usize) -> bool {
        party >= 1 && party <= self.universe() && self.mask & (1 << (party - 1)) != 0
    }

    pub fn insert(&mut self, party: usize) {
        assert!(party >= 1 && party <= self.universe());
        self.mask |= 1 << (party - 1);
    }

    pub fn union(&self, other: &Self) -> Self {
        Self { n: self.n, mask: self.mask | other.mask }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self { n: self.n, mask: self.mask & other.mask }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self { n: self.n, mask: self.mask & !other.mask }
    }

    pub fn complement(&self) -> Self {
        Self { n: self.n, mask: !self.mask & Self::full(self.universe()).mask }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.mask & !other.mask == 0
    }

    /// 1-based members in ascending order.
    pub fn members(&self) -> Vec<usize> {
        (1..=self.universe()).filter(|&p| self.contains(p)).collect()
    }
}

impl fmt::Debug for PartySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, p) in self.members().iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "P{p}")?;
        }
        write!(f, "}}")
    }
}

/// All `k`-subsets, in lexicographic order of their member lists.
pub fn lex_subsets(n: usize, k: usize) -> Vec<PartySet> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<PartySet>) {
        if cur.len() == k {
            out.push(PartySet::from_members(n, cur).expect("indices in range"));
            return;
        }
        for p in start..=n {
            if n - p + 1 < k - cur.len() {
                break;
            }
            cur.push(p);
            rec(n, k, p + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= n {
        rec(n, k, 1, &mut Vec::new(), &mut out);
    }
    out
}

/// All `k`-subsets of `n` parties, ordered so that their complements ascend
/// lexicographically. For `k = n - t` the `j`-th set is held by everyone outside
/// the `j`-th `t`-subset, which is the share layout of the replicated scheme.
pub fn combinations(n: usize, k: usize) -> Vec<PartySet> {
    if k > n {
        return Vec::new();
    }
    lex_subsets(n, n - k).iter().map(PartySet::complement).collect()
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Structure {
    n: usize,
    maximal: Vec<PartySet>,
}

fn normalize(mut sets: Vec<PartySet>) -> Vec<PartySet> {
    sets.sort_by_key(|s| std::cmp::Reverse(s.len()));
    sets.dedup_by_key(|s| s.mask);
    let mut keep: Vec<PartySet> = Vec::with_capacity(sets.len());
    // larger sets first, so anything dominated is seen after its dominator
    let mut seen = std::collections::HashSet::new();
    for s in sets {
        if !seen.insert(s.mask) {
            continue;
        }
        if keep.iter().any(|k| s.is_subset(k)) {
            continue;
        }
        keep.push(s);
    }
    keep.sort_by_key(|a| a.members());
    keep
}

impl Structure {
    /// Builds the structure generated by `sets`; dominated sets are dropped.
    pub fn from_sets(n: usize, sets: Vec<PartySet>) -> Result<Self> {
        for s in &sets {
            if s.universe() != n {
                return Err(Error::UniverseMismatch(n, s.universe()));
            }
        }
        let maximal = if sets.is_empty() { vec![PartySet::empty(n)] } else { normalize(sets) };
        Ok(Self { n, maximal })
    }

    /// From 1-based index lists, the JSON form.
    pub fn from_lists(n: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let sets = lists
            .iter()
            .map(|l| PartySet::from_members(n, l))
            .collect::<Result<Vec<_>>>()?;
        Self::from_sets(n, sets)
    }

    pub fn to_lists(&self) -> Vec<Vec<usize>> {
        self.maximal.iter().map(PartySet::members).collect()
    }

    /// Only the empty set: no party can be corrupted.
    pub fn trivial(n: usize) -> Self {
        Self { n, maximal: vec![PartySet::empty(n)] }
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn maximal_sets(&self) -> &[PartySet] {
        &self.maximal
    }

    pub fn contains(&self, set: &PartySet) -> bool {
        self.maximal.iter().any(|m| set.is_subset(m))
    }

    /// True when `other`'s sets all belong to `self`.
    pub fn includes(&self, other: &Structure) -> bool {
        other.maximal.iter().all(|s| self.contains(s))
    }
}

pub fn threshold_structure(n: usize, t: usize) -> Result<Structure> {
    if t > n {
        return Err(Error::InvalidParameter(format!("threshold {t} exceeds {n} parties")));
    }
    if n > MAX_PARTIES {
        return Err(Error::InvalidParameter(format!("at most {MAX_PARTIES} parties")));
    }
    Ok(Structure { n, maximal: lex_subsets(n, t) })
}

pub fn sqcup(a: &Structure, b: &Structure) -> Result<Structure> {
    if a.n != b.n {
        return Err(Error::UniverseMismatch(a.n, b.n));
    }
    let mut unions = Vec::with_capacity(a.maximal.len() * b.maximal.len());
    for x in &a.maximal {
        for y in &b.maximal {
            unions.push(x.union(y));
        }
    }
    Structure::from_sets(a.n, unions)
}

fn full_in_join(parts: &[&Structure]) -> bool {
    let n = parts[0].n;
    let full = PartySet::full(n);
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        acc = sqcup(&acc, p).expect("same universe");
        if acc.contains(&full) {
            return true;
        }
    }
    acc.contains(&full)
}

/// The full party set must not be covered by one Σ-set and two Ω-sets.
pub fn vss_feasible(adv: &MixedAdversary) -> bool {
    !full_in_join(&[&adv.sigma, &adv.omega, &adv.omega])
}

pub fn broadcast_feasible(omega: &Structure) -> bool {
    !full_in_join(&[omega, omega, omega])
}

/// Smallest set outside Σ, lexicographically first among equals.
pub fn min_generating_set(sigma: &Structure) -> Result<PartySet> {
    for k in 1..=sigma.n {
        if let Some(s) = lex_subsets(sigma.n, k).into_iter().find(|s| !sigma.contains(s)) {
            return Ok(s);
        }
    }
    Err(Error::Infeasible("every party set lies in the structure".into()))
}

pub fn biggest_set_size(sigma: &Structure) -> usize {
    sigma.maximal.iter().map(PartySet::len).max().unwrap_or(0)
}

pub fn prune_aborted(sigma: &Structure, aborted: &PartySet) -> Structure {
    let sets = sigma.maximal.iter().map(|m| m.difference(aborted)).collect();
    Structure::from_sets(sigma.n, sets).expect("same universe")
}

/// Mixed adversary: Σ bounds everything Eve sees, Ω what she controls.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MixedAdversary {
    pub sigma: Structure,
    pub omega: Structure,
}

impl MixedAdversary {
    pub fn new(sigma: Structure, omega: Structure) -> Result<Self> {
        if sigma.n != omega.n {
            return Err(Error::UniverseMismatch(sigma.n, omega.n));
        }
        if !sigma.includes(&omega) {
            return Err(Error::InvalidParameter("active structure not contained in passive one".into()));
        }
        Ok(Self { sigma, omega })
    }

    pub fn threshold(n: usize, t: usize) -> Result<Self> {
        let s = threshold_structure(n, t)?;
        Ok(Self { sigma: s.clone(), omega: s })
    }

    pub fn universe(&self) -> usize {
        self.sigma.n
    }

    /// Whether Eve may read `seen` and control `active`.
    pub fn permits(&self, seen: &PartySet, active: &PartySet) -> bool {
        self.sigma.contains(&seen.union(active)) && self.omega.contains(active)
    }
}

/// JSON form: `{"sigma": [[1],[2,3]], "omega": [[1]]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedAdversarySpec {
    pub sigma: Vec<Vec<usize>>,
    pub omega: Vec<Vec<usize>>,
}

impl MixedAdversarySpec {
    pub fn build(&self, n: usize) -> Result<MixedAdversary> {
        MixedAdversary::new(Structure::from_lists(n, &self.sigma)?, Structure::from_lists(n, &self.omega)?)
    }

    pub fn of(adv: &MixedAdversary) -> Self {
        Self { sigma: adv.sigma.to_lists(), omega: adv.omega.to_lists() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(n: usize, m: &[usize]) -> PartySet {
        PartySet::from_members(n, m).unwrap()
    }

    fn binom(n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(threshold_structure(4, 0).unwrap().to_lists(), vec![Vec::<usize>::new()]);
        assert_eq!(threshold_structure(4, 1).unwrap().to_lists(), vec![vec![1], vec![2], vec![3], vec![4]]);
        let t2 = threshold_structure(4, 2).unwrap();
        assert_eq!(
            t2.to_lists(),
            vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]
        );
        assert!(threshold_structure(3, 4).is_err());
    }

    #[test]
    fn combinations_examples() {
        let c = combinations(4, 3);
        assert_eq!(
            c.iter().map(PartySet::members).collect::<Vec<_>>(),
            vec![vec![2, 3, 4], vec![1, 3, 4], vec![1, 2, 4], vec![1, 2, 3]]
        );
        assert_eq!(combinations(3, 3), vec![PartySet::full(3)]);
        assert_eq!(combinations(5, 4).len(), 5);
        for n in 0..=7 {
            for k in 0..=n {
                let c = combinations(n, k);
                assert_eq!(c.len(), binom(n, k));
                assert!(c.iter().all(|s| s.len() == k));
            }
        }
    }

    #[test]
    fn sqcup_examples() {
        let t1 = threshold_structure(4, 1).unwrap();
        assert_eq!(sqcup(&t1, &Structure::trivial(4)).unwrap(), t1);
        assert_eq!(sqcup(&t1, &t1).unwrap(), threshold_structure(4, 2).unwrap());
        let a = Structure::from_lists(4, &[vec![1]]).unwrap();
        let b = Structure::from_lists(4, &[vec![2]]).unwrap();
        assert_eq!(sqcup(&a, &b).unwrap().to_lists(), vec![vec![1, 2]]);
        assert!(matches!(sqcup(&t1, &Structure::trivial(5)), Err(Error::UniverseMismatch(4, 5))));
    }

    #[test]
    fn feasibility_examples() {
        assert!(vss_feasible(&MixedAdversary::threshold(4, 1).unwrap()));
        assert!(!vss_feasible(&MixedAdversary::threshold(3, 1).unwrap()));
        let sigma = Structure::from_lists(4, &[vec![1, 2, 3], vec![4]]).unwrap();
        let passive = MixedAdversary::new(sigma, Structure::trivial(4)).unwrap();
        assert!(vss_feasible(&passive));
        assert!(broadcast_feasible(&threshold_structure(4, 1).unwrap()));
        assert!(!broadcast_feasible(&threshold_structure(3, 1).unwrap()));
        assert!(broadcast_feasible(&Structure::trivial(3)));
    }

    #[test]
    fn feasibility_matches_threshold_bound() {
        for n in 1..=9 {
            for t in 0..=n {
                let adv = MixedAdversary::threshold(n, t).unwrap();
                assert_eq!(vss_feasible(&adv), 3 * t < n, "n={n} t={t}");
                assert_eq!(broadcast_feasible(&adv.omega), 3 * t < n, "n={n} t={t}");
            }
        }
    }

    #[test]
    fn min_generating_set_examples() {
        let t1 = threshold_structure(4, 1).unwrap();
        assert_eq!(min_generating_set(&t1).unwrap(), set(4, &[1, 2]));
        for n in 1..=7 {
            for t in 0..n {
                let g = min_generating_set(&threshold_structure(n, t).unwrap()).unwrap();
                assert_eq!(g.members(), (1..=t + 1).collect::<Vec<_>>());
            }
        }
        assert_eq!(min_generating_set(&Structure::trivial(3)).unwrap(), set(3, &[1]));
        assert!(min_generating_set(&threshold_structure(3, 3).unwrap()).is_err());
    }

    #[test]
    fn biggest_and_prune_examples() {
        assert_eq!(biggest_set_size(&threshold_structure(5, 2).unwrap()), 2);
        assert_eq!(biggest_set_size(&Structure::from_lists(4, &[vec![1, 2, 3], vec![4]]).unwrap()), 3);
        assert_eq!(biggest_set_size(&Structure::trivial(4)), 0);

        let t2 = threshold_structure(4, 2).unwrap();
        assert_eq!(prune_aborted(&t2, &PartySet::empty(4)), t2);
        assert_eq!(
            prune_aborted(&t2, &set(4, &[1])).to_lists(),
            vec![vec![2, 3], vec![2, 4], vec![3, 4]]
        );
        let s = Structure::from_lists(4, &[vec![1, 2]]).unwrap();
        assert_eq!(prune_aborted(&s, &set(4, &[1, 2])), Structure::trivial(4));
    }

    #[test]
    fn closure_exhaustive_small_universes() {
        // every structure generated by up to three random-ish sets, n <= 5
        for n in 1..=5usize {
            let all: Vec<PartySet> = (0..1u32 << n).map(|m| PartySet::from_mask(n, m)).collect();
            for (a, b) in [(0usize, 3usize), (5, 6), (7, 9), (12, 1), (3, 10)] {
                let gens: Vec<PartySet> = [a, b]
                    .iter()
                    .map(|&i| all[i % all.len()])
                    .collect();
                let s = Structure::from_sets(n, gens.clone()).unwrap();
                for x in &all {
                    let expect = gens.iter().any(|g| x.is_subset(g));
                    assert_eq!(s.contains(x), expect);
                }
                for (i, m) in s.maximal_sets().iter().enumerate() {
                    for (k, o) in s.maximal_sets().iter().enumerate() {
                        if i != k {
                            assert!(!m.is_subset(o));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn json_lists_round_trip() {
        let spec = MixedAdversarySpec { sigma: vec![vec![1], vec![2, 3]], omega: vec![vec![1]] };
        let adv = spec.build(4).unwrap();
        assert_eq!(MixedAdversarySpec::of(&adv), spec);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"sigma":[[1],[2,3]],"omega":[[1]]}"#);
        let bad = MixedAdversarySpec { sigma: vec![vec![1]], omega: vec![vec![2]] };
        assert!(bad.build(4).is_err());
    }

    fn arb_structure(n: usize) -> impl Strategy<Value = Structure> {
        proptest::collection::vec(0u32..(1 << n), 1..5)
            .prop_map(move |ms| Structure::from_sets(n, ms.into_iter().map(|m| PartySet::from_mask(n, m)).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn sqcup_commutative_associative(
            (a, b, c) in (1usize..=6).prop_flat_map(|n| (arb_structure(n), arb_structure(n), arb_structure(n)))
        ) {
            prop_assert_eq!(sqcup(&a, &b).unwrap(), sqcup(&b, &a).unwrap());
            let l = sqcup(&sqcup(&a, &b).unwrap(), &c).unwrap();
            let r = sqcup(&a, &sqcup(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(l, r);
        }

        #[test]
        fn prune_is_monotone(s in arb_structure(5), aborted in 0u32..32) {
            let ab = PartySet::from_mask(5, aborted);
            let p = prune_aborted(&s, &ab);
            prop_assert!(s.includes(&p));
            prop_assert!(biggest_set_size(&p) <= biggest_set_size(&s));
            for m in p.maximal_sets() {
                prop_assert!(m.intersection(&ab).is_empty());
            }
        }
    }
}
