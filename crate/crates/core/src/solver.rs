//! Path constraints and a bounded-enumeration satisfiability oracle.
//!
//! Equalities between a byte variable and a constant are kept as pins and
//! propagated into the remaining constraints before anything is enumerated.
//! What is left is split into independent groups; each group is solved in
//! one pass over all assignments of its variables, provided it has at most
//! `enum_limit` of them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::expr::{CmpOp, Compiled, Node, SymExpr, VarId};

pub const DEFAULT_ENUM_LIMIT: usize = 3;

/// Replaces pinned variables, skipping the rebuild when none occur.
pub fn substitute_pins(e: &SymExpr, pins: &BTreeMap<VarId, u8>) -> SymExpr {
    if pins.is_empty() || e.as_const().is_some() {
        return e.clone();
    }
    if let Some(v) = e.as_var() {
        return match pins.get(&v) {
            Some(b) => SymExpr::constant(8, *b as u64),
            None => e.clone(),
        };
    }
    if !e.vars().iter().any(|v| pins.contains_key(v)) {
        return e.clone();
    }
    e.substitute(&|v| pins.get(&v).copied())
}

/// `Eq(Var v, Const k)` in either orientation.
fn as_pin(c: &SymExpr) -> Option<(VarId, u8)> {
    if let Node::Cmp { op: CmpOp::Eq, lhs, rhs } = c.node() {
        if let (Some(v), Some(k)) = (lhs.as_var(), rhs.as_const()) {
            return Some((v, k as u8));
        }
        if let (Some(k), Some(v)) = (lhs.as_const(), rhs.as_var()) {
            return Some((v, k as u8));
        }
    }
    None
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    constraints: Vec<SymExpr>,
    pins: BTreeMap<VarId, u8>,
    /// Pins that arrived through `pin_sibling`.
    siblings: BTreeSet<VarId>,
    epoch: u64,
    contradiction: bool,
}

impl ConstraintSet {
    pub fn new() -> ConstraintSet {
        ConstraintSet::default()
    }

    /// Adds a 1-bit assertion. Returns false if the set became trivially
    /// contradictory.
    pub fn assert(&mut self, c: SymExpr) -> bool {
        debug_assert_eq!(c.width(), 1);
        let c = substitute_pins(&c, &self.pins);
        match c.as_const() {
            Some(0) => self.contradiction = true,
            Some(_) => {}
            None => match as_pin(&c) {
                Some((v, k)) => match self.pins.get(&v) {
                    Some(old) if *old != k => self.contradiction = true,
                    Some(_) => {}
                    None => {
                        self.pins.insert(v, k);
                        self.epoch += 1;
                    }
                },
                None => self.constraints.push(c),
            },
        }
        !self.contradiction
    }

    /// Records the equality for a byte that was concrete when its pair got
    /// poisoned. The variable is fresh, so it cannot conflict.
    pub fn pin_sibling(&mut self, v: VarId, value: u8) {
        self.pins.insert(v, value);
        self.siblings.insert(v);
    }

    pub fn pins(&self) -> &BTreeMap<VarId, u8> {
        &self.pins
    }

    pub fn pin(&self, v: VarId) -> Option<u8> {
        self.pins.get(&v).copied()
    }

    /// Non-pin constraints, in insertion order.
    pub fn constraints(&self) -> &[SymExpr] {
        &self.constraints
    }

    /// Advances whenever a pin that did not come from a sibling arrives.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn is_contradictory(&self) -> bool {
        self.contradiction
    }

    /// Every assertion as an expression: branch-derived pins, then the
    /// remaining constraints. Sibling pins are left out.
    pub fn assertions(&self) -> Vec<SymExpr> {
        let mut out: Vec<SymExpr> = self
            .pins
            .iter()
            .filter(|(v, _)| !self.siblings.contains(v))
            .map(|(v, k)| SymExpr::eq(SymExpr::var(*v), SymExpr::constant(8, *k as u64)))
            .collect();
        out.extend(self.constraints.iter().cloned());
        if self.contradiction {
            out.push(SymExpr::bit(false));
        }
        out
    }

    pub fn is_sibling(&self, v: VarId) -> bool {
        self.siblings.contains(&v)
    }
}

/// Groups of constraints connected through shared variables. Constraints
/// without variables form singleton groups. Group order follows the first
/// constraint of each group.
pub fn partition(constraints: &[SymExpr]) -> Vec<Vec<SymExpr>> {
    let vars: Vec<BTreeSet<VarId>> = constraints.iter().map(SymExpr::vars).collect();
    let mut parent: Vec<usize> = (0..constraints.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner: BTreeMap<VarId, usize> = BTreeMap::new();
    for (i, vs) in vars.iter().enumerate() {
        for v in vs {
            match owner.get(v) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    owner.insert(*v, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<SymExpr>> = BTreeMap::new();
    for (i, c) in constraints.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(c.clone());
    }
    groups.into_values().collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Model {
    pub values: BTreeMap<VarId, u8>,
}

impl Model {
    /// Value of `v`; variables no constraint mentions default to 0.
    pub fn get(&self, v: VarId) -> u8 {
        self.values.get(&v).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    Sat(Model),
    Unsat,
    BudgetExceeded,
}

impl SatResult {
    pub fn is_unsat(&self) -> bool {
        matches!(self, SatResult::Unsat)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolverStats {
    pub queries: u64,
    pub enum_assignments: u64,
}

/// Receives every batched constraint group before it is enumerated.
pub type QuerySink<'a> = &'a mut dyn FnMut(&[SymExpr]);

pub struct Solver<'a> {
    pub enum_limit: usize,
    pub stats: SolverStats,
    pub sink: Option<QuerySink<'a>>,
}

impl Default for Solver<'_> {
    fn default() -> Self {
        Solver::new(DEFAULT_ENUM_LIMIT)
    }
}

impl<'a> Solver<'a> {
    pub fn new(enum_limit: usize) -> Solver<'a> {
        Solver { enum_limit, stats: SolverStats::default(), sink: None }
    }

    pub fn check_sat(&mut self, cs: &ConstraintSet) -> SatResult {
        self.check_sat_with(cs, &[])
    }

    /// Satisfiability of `cs` conjoined with `extra`.
    pub fn check_sat_with(&mut self, cs: &ConstraintSet, extra: &[SymExpr]) -> SatResult {
        if cs.contradiction {
            return SatResult::Unsat;
        }
        let mut new_pins: BTreeMap<VarId, u8> = BTreeMap::new();
        let mut work: Vec<SymExpr> = cs.constraints.iter().chain(extra).cloned().collect();
        let mut first = true;
        loop {
            let mut changed = false;
            let mut next = Vec::with_capacity(work.len());
            for c in &work {
                let s = if first {
                    substitute_pins(c, &cs.pins)
                } else {
                    c.clone()
                };
                let s = substitute_pins(&s, &new_pins);
                match s.as_const() {
                    Some(0) => return SatResult::Unsat,
                    Some(_) => continue,
                    None => {}
                }
                match as_pin(&s) {
                    Some((v, k)) => match cs.pins.get(&v).or(new_pins.get(&v)) {
                        Some(old) if *old != k => return SatResult::Unsat,
                        Some(_) => {}
                        None => {
                            new_pins.insert(v, k);
                            changed = true;
                        }
                    },
                    None => next.push(s),
                }
            }
            work = next;
            first = false;
            if !changed {
                break;
            }
        }

        let mut model = Model { values: cs.pins.clone() };
        model.values.extend(new_pins);
        let mut exceeded = false;
        let mut scratch = Vec::new();
        for group in partition(&work) {
            let compiled = Compiled::new(&group);
            let vars = compiled.vars().to_vec();
            if vars.len() > self.enum_limit {
                exceeded = true;
                continue;
            }
            self.stats.queries += 1;
            if let Some(sink) = self.sink.as_mut() {
                sink(&group);
            }
            match self.enumerate(&compiled, &vars, &mut scratch) {
                Some(values) => model.values.extend(vars.iter().copied().zip(values)),
                None => return SatResult::Unsat,
            }
        }
        if exceeded {
            SatResult::BudgetExceeded
        } else {
            SatResult::Sat(model)
        }
    }

    /// Lexicographically least assignment (first variable most significant)
    /// satisfying every root.
    fn enumerate(&mut self, compiled: &Compiled, vars: &[VarId], scratch: &mut Vec<u64>) -> Option<Vec<u8>> {
        let k = vars.len();
        let mut values = alloc::vec![0u8; k];
        loop {
            self.stats.enum_assignments += 1;
            let lookup = |v: VarId| match vars.binary_search(&v) {
                Ok(i) => values[i],
                Err(_) => 0,
            };
            if compiled.all_true(&lookup, scratch) {
                return Some(values);
            }
            // odometer, last variable fastest
            let mut i = k;
            loop {
                if i == 0 {
                    return None;
                }
                i -= 1;
                if values[i] == u8::MAX {
                    values[i] = 0;
                } else {
                    values[i] += 1;
                    break;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn v(i: u32) -> SymExpr {
        SymExpr::var(VarId(i))
    }
    fn c8(x: u64) -> SymExpr {
        SymExpr::constant(8, x)
    }

    #[test]
    fn partition_examples() {
        let a = SymExpr::ult(c8(3), v(0));
        let b = SymExpr::eq(v(1), c8(2));
        let d = SymExpr::ult(v(0), c8(10));
        let g = partition(&[a.clone(), b.clone(), d.clone()]);
        assert_eq!(g, vec![vec![a, d], vec![b]]);
        assert!(partition(&[]).is_empty());
        let chain = [
            SymExpr::ult(v(0), v(1)),
            SymExpr::ult(v(1), v(2)),
            SymExpr::ult(v(2), c8(9)),
        ];
        assert_eq!(partition(&chain).len(), 1);
    }

    #[test]
    fn wraparound_model() {
        let mut cs = ConstraintSet::new();
        cs.assert(SymExpr::ult(c8(0), v(0)));
        cs.assert(SymExpr::eq(SymExpr::add(v(0), c8(1)), c8(0)));
        match Solver::default().check_sat(&cs) {
            SatResult::Sat(m) => assert_eq!(m.get(VarId(0)), 0xFF),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn contradictory_pins() {
        let mut cs = ConstraintSet::new();
        assert!(cs.assert(SymExpr::eq(v(0), c8(1))));
        assert!(!cs.assert(SymExpr::eq(v(0), c8(2))));
        assert_eq!(Solver::default().check_sat(&cs), SatResult::Unsat);
    }

    #[test]
    fn xor_solved_by_propagation() {
        let mut cs = ConstraintSet::new();
        cs.assert(SymExpr::eq(SymExpr::xor(v(0), v(1)), c8(0xFF)));
        cs.assert(SymExpr::eq(v(0), c8(0x0F)));
        let mut s = Solver::default();
        match s.check_sat(&cs) {
            SatResult::Sat(m) => {
                assert_eq!(m.get(VarId(0)), 0x0F);
                assert_eq!(m.get(VarId(1)), 0xF0);
            }
            r => panic!("{r:?}"),
        }
        assert_eq!(s.stats.enum_assignments, 0);
    }

    #[test]
    fn budget() {
        let mut cs = ConstraintSet::new();
        let sum = SymExpr::add(SymExpr::add(v(0), v(1)), SymExpr::add(v(2), v(3)));
        cs.assert(SymExpr::eq(sum, c8(7)));
        assert_eq!(Solver::new(3).check_sat(&cs), SatResult::BudgetExceeded);
    }

    #[test]
    fn least_model() {
        let mut cs = ConstraintSet::new();
        cs.assert(SymExpr::ult(c8(5), SymExpr::add(v(0), v(1))));
        match Solver::default().check_sat(&cs) {
            SatResult::Sat(m) => assert_eq!((m.get(VarId(0)), m.get(VarId(1))), (0, 6)),
            r => panic!("{r:?}"),
        }
    }

    #[test]
    fn sink_sees_each_group() {
        let mut cs = ConstraintSet::new();
        cs.assert(SymExpr::ult(c8(5), v(0)));
        cs.assert(SymExpr::ult(v(1), c8(5)));
        let mut seen = 0;
        let mut sink = |g: &[SymExpr]| seen += g.len();
        {
            let mut s = Solver::new(3);
            s.sink = Some(&mut sink);
            assert!(matches!(s.check_sat(&cs), SatResult::Sat(_)));
            assert_eq!(s.stats.queries, 2);
        }
        assert_eq!(seen, 2);
    }
}
