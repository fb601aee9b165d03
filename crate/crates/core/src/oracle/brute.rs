use super::{Oracle, OracleVerdict, Query};
use crate::bv::{BitVecValue, Width};
use crate::sim::{
    conjuncts, is_fact, ArrayValue, ConstraintFacts, Pattern, PatternOrigin, Plan, Value,
};
use crate::term::{Sort, TermGraph, TermId};
use rayon::prelude::*;
use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

const CHUNK: u64 = 1 << 10;

/// Exhaustive enumeration over the free bits of a query.
///
/// Variables that the assumptions pin to a constant or equate with another
/// variable (as top-level conjuncts) are not enumerated separately, so the
/// search covers exactly the assignments that can satisfy those conjuncts.
/// Conjuncts over variables that never meet the goal are decided
/// separately. Array leaves must have a complete table.
pub struct BruteForce {
    cap_bits: u32,
    evaluations: AtomicU64,
}

impl BruteForce {
    pub const DEFAULT_CAP_BITS: u32 = 20;

    pub fn new(cap_bits: u32) -> Self {
        Self {
            cap_bits,
            evaluations: AtomicU64::new(0),
        }
    }

    pub fn cap_bits(&self) -> u32 {
        self.cap_bits
    }

    /// Number of assignments evaluated so far.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }
}

impl Default for BruteForce {
    fn default() -> Self {
        Self::new(Self::DEFAULT_CAP_BITS)
    }
}

impl Oracle for BruteForce {
    fn name(&self) -> &str {
        "brute-force"
    }

    fn solve(&mut self, query: &Query<'_>) -> OracleVerdict {
        let graph = query.graph;
        let facts = match ConstraintFacts::analyze(graph, query.assumptions) {
            Ok(f) => f,
            Err(_) => return OracleVerdict::Unsat,
        };
        let (relevant, independent) =
            split_components(graph, &conjuncts(graph, query.assumptions), query.goal);
        let mut model = match self.enumerate(query, &facts, &relevant) {
            Ok(Some(m)) => m,
            Ok(None) => return OracleVerdict::Unsat,
            Err(reason) => return OracleVerdict::Unknown(reason),
        };
        for component in independent {
            if component.iter().all(|&c| is_fact(graph, c)) {
                // Equalities and pins without a conflict always have a model:
                // pinned classes take their constant, the rest zero.
                for leaf in graph.leaves(&component) {
                    let Sort::BitVec(w) = graph.sort(leaf) else {
                        continue;
                    };
                    let value = facts
                        .pinned(leaf)
                        .cloned()
                        .unwrap_or_else(|| BitVecValue::zero(w));
                    model.set(leaf, Value::Bv(value));
                }
                continue;
            }
            match self.enumerate(query, &facts, &component) {
                Ok(Some(part)) => {
                    model.assignment.extend(part.assignment);
                }
                Ok(None) => return OracleVerdict::Unsat,
                Err(reason) => return OracleVerdict::Unknown(reason),
            }
        }
        OracleVerdict::Sat(model)
    }
}

/// Splits the conjuncts into the group that shares variables (transitively)
/// with `goal`, which gets `goal` appended, and the remaining groups. The
/// remaining groups constrain disjoint variables, so each can be decided on
/// its own.
fn split_components(
    graph: &TermGraph,
    parts: &[TermId],
    goal: TermId,
) -> (Vec<TermId>, Vec<Vec<TermId>>) {
    let items: Vec<TermId> = parts.iter().copied().chain([goal]).collect();
    let goal_index = items.len() - 1;
    let mut parent: Vec<usize> = (0..items.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut owner: HashMap<TermId, usize> = HashMap::new();
    for (i, &t) in items.iter().enumerate() {
        let leaves = graph.leaves(&[t]);
        if leaves.is_empty() {
            // Constant conjuncts stay with the goal.
            let (a, b) = (find(&mut parent, i), find(&mut parent, goal_index));
            parent[a] = b;
        }
        for leaf in leaves {
            match owner.entry(leaf) {
                Entry::Occupied(o) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, *o.get()));
                    parent[a] = b;
                }
                Entry::Vacant(v) => {
                    v.insert(i);
                }
            }
        }
    }
    let root = find(&mut parent, goal_index);
    let mut relevant = Vec::new();
    let mut others: BTreeMap<usize, Vec<TermId>> = BTreeMap::new();
    for (i, &t) in items.iter().enumerate() {
        let r = find(&mut parent, i);
        if r == root {
            relevant.push(t);
        } else {
            others.entry(r).or_default().push(t);
        }
    }
    (relevant, others.into_values().collect())
}

impl BruteForce {
    /// Searches for an assignment to the leaves of `conds` that makes every
    /// one of them true.
    fn enumerate(
        &self,
        query: &Query<'_>,
        facts: &ConstraintFacts,
        conds: &[TermId],
    ) -> Result<Option<Pattern>, String> {
        let graph = query.graph;
        let leaves = graph.leaves(conds);
        let mut fixed: BTreeMap<TermId, Value> = BTreeMap::new();
        let mut free: Vec<(TermId, Width)> = Vec::new();
        let mut copies: Vec<(TermId, TermId)> = Vec::new();
        // First leaf of each equality class; the others copy it.
        let mut class_head: HashMap<TermId, TermId> = HashMap::new();
        for &leaf in &leaves {
            match graph.sort(leaf) {
                Sort::BitVec(w) => {
                    if let Some(c) = facts.pinned(leaf) {
                        fixed.insert(leaf, Value::Bv(c.clone()));
                        continue;
                    }
                    match class_head.entry(facts.representative(leaf)) {
                        Entry::Occupied(head) => copies.push((leaf, *head.get())),
                        Entry::Vacant(slot) => {
                            slot.insert(leaf);
                            free.push((leaf, w));
                        }
                    }
                }
                _ => match query.tables.get(&leaf) {
                    Some(t) if t.complete => {
                        fixed.insert(leaf, Value::Array(ArrayValue::from_table(t.clone(), 0)));
                    }
                    _ => return Err(format!("array leaf {leaf} has no complete table")),
                },
            }
        }
        let total_bits: u64 = free.iter().map(|&(_, w)| w as u64).sum();
        if total_bits > self.cap_bits as u64 {
            return Err(format!(
                "{total_bits} free input bits exceed the enumeration cap of {}",
                self.cap_bits
            ));
        }

        let plan = Plan::new(graph, conds);
        let slots: Vec<usize> = conds.iter().map(|&c| plan.slot(c).unwrap()).collect();
        let space = 1u64 << total_bits;
        let chunks = space.div_ceil(CHUNK);
        // Leaf to the index of the free class it reads.
        let mut source: HashMap<TermId, usize> =
            free.iter().enumerate().map(|(i, &(l, _))| (l, i)).collect();
        for &(leaf, head) in &copies {
            let i = source[&head];
            source.insert(leaf, i);
        }
        let decode = |mut code: u64, out: &mut Vec<BitVecValue>| {
            out.clear();
            for &(_, w) in &free {
                out.push(BitVecValue::from_u64(code, w));
                code = if w >= 64 { 0 } else { code >> w };
            }
        };
        let evaluations = &self.evaluations;
        let hit = (0..chunks).into_par_iter().find_map_first(|chunk| {
            let mut buf = Vec::with_capacity(plan.len());
            let mut assignment = Vec::with_capacity(free.len());
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(space);
            for code in start..end {
                decode(code, &mut assignment);
                plan.run_into(&mut buf, |t| match source.get(&t) {
                    Some(&i) => Some(Value::Bv(assignment[i].clone())),
                    None => fixed.get(&t).cloned(),
                })
                .expect("every leaf is assigned");
                if slots
                    .iter()
                    .all(|&s| buf[s].as_bv().is_some_and(BitVecValue::is_true))
                {
                    evaluations.fetch_add(code - start + 1, Ordering::Relaxed);
                    return Some(code);
                }
            }
            evaluations.fetch_add(end - start, Ordering::Relaxed);
            None
        });
        Ok(hit.map(|code| {
            let mut model = Pattern::new(PatternOrigin::Counterexample, code);
            for (leaf, v) in fixed {
                model.set(leaf, v);
            }
            let mut assignment = Vec::new();
            decode(code, &mut assignment);
            for (&leaf, &i) in &source {
                model.set(leaf, Value::Bv(assignment[i].clone()));
            }
            model
        }))
    }
}
