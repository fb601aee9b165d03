//! Simulation-guided SMT sweeping.
//!
//! The check formula is visited in post-order. Each term is compared against
//! earlier terms with the same simulation row; a pair is merged once the
//! oracle proves `constraint ∧ t ≠ t'` unsatisfiable. A satisfiable miter
//! yields a model that is appended as a new simulation pattern, which splits
//! the pair and usually many other false candidates. After the traversal the
//! merges are applied and the reduced formula is decided by the oracle.

use crate::array::{try_select_unify, unify_identical_arrays, ArrayTables, ArrayUnifyOp};
use crate::oracle::{self, Oracle, OracleError, OracleVerdict, Query};
use crate::sim::{
    gen_patterns, ConflictingConstraint, Pattern, PatternOrigin, SimError, SimMatrix, Value,
};
use crate::term::{MergeSortError, Op, SortError, SubstMap, TermGraph, TermId};
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    /// Largest AST-size difference of a candidate pair; 0 disables the
    /// filter.
    pub size_diff_limit: u32,
    pub bucket_sample_limit: usize,
    pub solver_budget_per_node: usize,
    /// Oracle calls for the whole run, including the final check.
    pub solver_budget_total: usize,
    pub patterns: usize,
    pub seed: u64,
    pub array_unify_ops: Vec<ArrayUnifyOp>,
    /// Ask each miter about the pair with earlier merges substituted in, so
    /// confirmed equivalences act as cut points. Sound because every merge
    /// already holds under the constraint.
    pub reduced_miters: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            size_diff_limit: 32,
            bucket_sample_limit: 8,
            solver_budget_per_node: 4,
            solver_budget_total: 10_000,
            patterns: 32,
            seed: 0,
            array_unify_ops: vec![ArrayUnifyOp::Concat],
            reduced_miters: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub arrays: Duration,
    pub simulation: Duration,
    pub traversal: Duration,
    pub residual: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub nodes_before: usize,
    pub nodes_after: usize,
    /// All merges, including those from array tables.
    pub merges_confirmed: usize,
    pub merges_refuted: usize,
    pub solver_calls: usize,
    pub array_merges: usize,
    pub patterns_used: usize,
    /// Oracle calls spent before the final check.
    pub miter_calls: usize,
    pub phases: PhaseTimes,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Sat(Pattern),
    Unsat,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Sat(_) => "sat",
            Verdict::Unsat => "unsat",
        }
    }
}

/// The stats object written by `--stats-out`.
#[derive(Debug, Clone, Serialize)]
pub struct StatsReport {
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub merges_confirmed: usize,
    pub merges_refuted: usize,
    pub solver_calls: usize,
    pub array_merges: usize,
    pub patterns_used: usize,
    pub verdict: String,
    pub wall_time_ms: u64,
}

impl StatsReport {
    /// `verdict` is `sat`, `unsat` or `unknown`. With `include_timing` false
    /// the wall time is reported as 0, which makes reports of identical runs
    /// byte-identical.
    pub fn new(stats: &SweepStats, verdict: &str, include_timing: bool) -> Self {
        Self {
            nodes_before: stats.nodes_before,
            nodes_after: stats.nodes_after,
            merges_confirmed: stats.merges_confirmed,
            merges_refuted: stats.merges_refuted,
            solver_calls: stats.solver_calls,
            array_merges: stats.array_merges,
            patterns_used: stats.patterns_used,
            verdict: verdict.to_string(),
            wall_time_ms: if include_timing {
                stats.wall_time.as_millis() as u64
            } else {
                0
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MergeKind {
    /// Proved by an oracle call.
    Solver,
    /// Proved by an oracle call against a constant.
    Constant,
    /// Two arrays with identical tables.
    ArrayTable,
    /// A read related elementwise to reads of other tables.
    ArraySelect,
}

/// One merge, as justified: `merged` equals `into` under the constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeRecord {
    pub merged: TermId,
    pub into: TermId,
    pub kind: MergeKind,
}

/// A satisfiable miter and the pattern it contributed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refutation {
    pub left: TermId,
    pub right: TermId,
    /// Column of the appended pattern in the simulation matrix.
    pub pattern: usize,
    pub model: Pattern,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub constraint: TermId,
    /// The check formula after merging.
    pub check: TermId,
    pub verdict: Verdict,
    pub stats: SweepStats,
    pub merges: Vec<MergeRecord>,
    pub refutations: Vec<Refutation>,
    pub subst: SubstMap,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SweepError {
    #[error("oracle could not decide the final check: {reason}")]
    OracleUnknown {
        reason: String,
        stats: Box<SweepStats>,
        check: TermId,
    },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Constraint(#[from] ConflictingConstraint),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Merge(#[from] MergeSortError),
    #[error("counterexample for {left} != {right} does not separate them in simulation")]
    NotSeparated { left: TermId, right: TermId },
}

/// True when the AST sizes of `a` and `b` are close enough to try the pair.
pub fn candidate_filter(graph: &TermGraph, a: TermId, b: TermId, config: &SweepConfig) -> bool {
    config.size_diff_limit == 0
        || graph.ast_size(a).abs_diff(graph.ast_size(b)) <= config.size_diff_limit
}

/// Members of `bucket` worth trying against `t`, best first: those with the
/// largest depth plus fanout difference, ties broken by smaller id.
pub fn sample_candidates(
    graph: &TermGraph,
    bucket: &[TermId],
    t: TermId,
    fanout: &HashMap<TermId, u32>,
    config: &SweepConfig,
) -> Vec<TermId> {
    let fan = |x: TermId| fanout.get(&x).copied().unwrap_or(0);
    let mut scored: Vec<(u64, TermId)> = bucket
        .iter()
        .copied()
        .filter(|&c| c != t && candidate_filter(graph, t, c, config))
        .map(|c| {
            let score =
                graph.depth(t).abs_diff(graph.depth(c)) as u64 + fan(t).abs_diff(fan(c)) as u64;
            (score, c)
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(config.bucket_sample_limit)
        .map(|(_, c)| c)
        .collect()
}

/// Visited representatives grouped by simulation signature.
#[derive(Default)]
struct BucketTable {
    buckets: HashMap<u64, Vec<TermId>>,
    members: Vec<TermId>,
}

impl BucketTable {
    fn insert(&mut self, t: TermId, sim: &SimMatrix) {
        self.members.push(t);
        let sig = sim.signature(t).expect("simulated term");
        self.buckets.entry(sig).or_default().push(t);
    }

    fn replace(&mut self, old: TermId, new: TermId, sim: &SimMatrix) {
        if let Some(pos) = self.members.iter().position(|&m| m == old) {
            self.members.remove(pos);
            self.rebin(sim);
        }
        self.insert(new, sim);
    }

    fn rebin(&mut self, sim: &SimMatrix) {
        self.buckets.clear();
        for &t in &self.members {
            let sig = sim.signature(t).expect("simulated term");
            self.buckets.entry(sig).or_default().push(t);
        }
    }

    /// Members whose value row equals that of `t`.
    fn peers(&self, t: TermId, sim: &SimMatrix) -> Vec<TermId> {
        let Some(bucket) = self.buckets.get(&sim.signature(t).expect("simulated term")) else {
            return Vec::new();
        };
        let row = sim.values(t);
        bucket
            .iter()
            .copied()
            .filter(|&m| sim.values(m) == row)
            .collect()
    }
}

struct Sweeper<'a> {
    graph: &'a mut TermGraph,
    tables: &'a ArrayTables,
    config: &'a SweepConfig,
    oracle: &'a mut dyn Oracle,
    constraint: TermId,
    stats: SweepStats,
    subst: SubstMap,
    merges: Vec<MergeRecord>,
    refutations: Vec<Refutation>,
}

enum Miter {
    Equal,
    Refuted,
    Undecided,
}

impl Sweeper<'_> {
    fn budget_left(&self) -> bool {
        // One call stays reserved for the final check.
        self.stats.solver_calls + 1 < self.config.solver_budget_total
    }

    fn miter(
        &mut self,
        sim: &mut SimMatrix,
        t: TermId,
        other: TermId,
    ) -> Result<Miter, SweepError> {
        let (a, b) = if self.config.reduced_miters {
            let r = self.graph.substitute(&[t, other], &self.subst);
            (r[0], r[1])
        } else {
            (t, other)
        };
        let goal = self.graph.mk_distinct(a, b)?;
        self.stats.solver_calls += 1;
        self.stats.miter_calls += 1;
        let verdict = {
            let query = Query::new(self.graph, self.tables, self.constraint, goal);
            oracle::check(self.oracle, &query)?
        };
        match verdict {
            OracleVerdict::Unsat => Ok(Miter::Equal),
            OracleVerdict::Unknown(_) => Ok(Miter::Undecided),
            OracleVerdict::Sat(mut model) => {
                model.origin = PatternOrigin::Counterexample;
                let leaves = sim.leaves();
                model.complete_with_defaults(self.graph, &leaves, self.tables);
                sim.extend_with_model(self.graph, model.clone())?;
                self.stats.merges_refuted += 1;
                let last = |x: TermId| match self.graph.const_value(x) {
                    Some(c) => Some(Value::Bv(c.clone())),
                    None => sim.values(x).and_then(|r| r.last().cloned()),
                };
                let separated = last(t) != last(other);
                if !separated {
                    return Err(SweepError::NotSeparated {
                        left: t,
                        right: other,
                    });
                }
                self.refutations.push(Refutation {
                    left: t,
                    right: other,
                    pattern: sim.pattern_count() - 1,
                    model,
                });
                Ok(Miter::Refuted)
            }
        }
    }

    fn record(
        &mut self,
        merged: TermId,
        into: TermId,
        kind: MergeKind,
    ) -> Result<TermId, SweepError> {
        let rep = self.subst.merge(self.graph, merged, into)?;
        self.merges.push(MergeRecord { merged, into, kind });
        self.stats.merges_confirmed += 1;
        if matches!(kind, MergeKind::ArrayTable | MergeKind::ArraySelect) {
            self.stats.array_merges += 1;
        }
        Ok(rep)
    }

    fn array_phase(&mut self, order: &[TermId]) -> Result<(), SweepError> {
        let in_check: HashSet<TermId> = order.iter().copied().collect();
        for (later, earlier) in unify_identical_arrays(self.tables) {
            if in_check.contains(&later) || in_check.contains(&earlier) {
                self.record(later, earlier, MergeKind::ArrayTable)?;
            }
        }
        let mut reads_by_index: HashMap<TermId, Vec<TermId>> = HashMap::new();
        for &t in order {
            if *self.graph.op(t) == Op::Read && self.tables.contains_key(&self.graph.operands(t)[0])
            {
                reads_by_index
                    .entry(self.graph.operands(t)[1])
                    .or_default()
                    .push(t);
            }
        }
        if reads_by_index.is_empty() {
            return Ok(());
        }
        for &t2 in order {
            if !self
                .config
                .array_unify_ops
                .iter()
                .any(|o| o.matches(self.graph.op(t2)))
            {
                continue;
            }
            let operands = self.graph.operands(t2);
            let Some(&first) = operands.first() else {
                continue;
            };
            if *self.graph.op(first) != Op::Read {
                continue;
            }
            let index = self.graph.operands(first)[1];
            let Some(reads) = reads_by_index.get(&index) else {
                continue;
            };
            let found = reads
                .iter()
                .copied()
                .filter(|r| !operands.contains(r))
                .find_map(|t1| {
                    try_select_unify(
                        self.graph,
                        t1,
                        t2,
                        self.tables,
                        &self.config.array_unify_ops,
                    )
                });
            if let Some((merged, into)) = found {
                if self.subst.find(merged) != self.subst.find(into) {
                    self.record(merged, into, MergeKind::ArraySelect)?;
                }
            }
        }
        Ok(())
    }

    fn traverse(&mut self, order: &[TermId], sim: &mut SimMatrix) -> Result<(), SweepError> {
        let fanout = self
            .graph
            .fanout(&[*order.last().expect("non-empty order")]);
        let mut table = BucketTable::default();
        for &t in order {
            if self.graph.is_const(t)
                || self.graph.sort(t).is_array()
                || !self.subst.is_representative(t)
            {
                continue;
            }
            let mut calls = 0usize;
            let mut merged = false;

            if let Some(value) = sim.constant_value(t).and_then(|v| v.as_bv()).cloned() {
                if self.budget_left() && calls < self.config.solver_budget_per_node {
                    calls += 1;
                    let c = self.graph.mk_const(value);
                    if let Miter::Equal = self.miter(sim, t, c)? {
                        self.record(t, c, MergeKind::Constant)?;
                        merged = true;
                    }
                    if !merged {
                        table.rebin(sim);
                    }
                }
            }

            let mut tried: HashSet<TermId> = HashSet::new();
            'scan: while !merged {
                let peers = table.peers(t, sim);
                let candidates: Vec<TermId> =
                    sample_candidates(self.graph, &peers, t, &fanout, self.config)
                        .into_iter()
                        .filter(|c| !tried.contains(c))
                        .collect();
                if candidates.is_empty() {
                    break;
                }
                for other in candidates {
                    if !self.budget_left() || calls >= self.config.solver_budget_per_node {
                        break 'scan;
                    }
                    calls += 1;
                    tried.insert(other);
                    match self.miter(sim, t, other)? {
                        Miter::Equal => {
                            let rep = self.record(t, other, MergeKind::Solver)?;
                            if rep == t {
                                table.replace(other, t, sim);
                            }
                            merged = true;
                            break 'scan;
                        }
                        Miter::Refuted => {
                            table.rebin(sim);
                            continue 'scan;
                        }
                        Miter::Undecided => {}
                    }
                }
            }
            if !merged {
                table.insert(t, sim);
            }
        }
        Ok(())
    }
}

/// Sweeps `check` under `constraint` and decides `constraint ∧ check`.
///
/// Only the DAG of `check` is rewritten; `constraint` is assumed in every
/// query. `tables` gives the contents of tabulated array leaves.
pub fn sweep(
    graph: &mut TermGraph,
    tables: &ArrayTables,
    constraint: TermId,
    check: TermId,
    oracle: &mut dyn Oracle,
    config: &SweepConfig,
) -> Result<SweepOutcome, SweepError> {
    let start = Instant::now();
    let order = graph.post_order(&[check]);
    let mut sweeper = Sweeper {
        graph,
        tables,
        config,
        oracle,
        constraint,
        stats: SweepStats {
            nodes_before: order.len(),
            ..SweepStats::default()
        },
        subst: SubstMap::new(),
        merges: Vec::new(),
        refutations: Vec::new(),
    };

    let phase = Instant::now();
    sweeper.array_phase(&order)?;
    // Array merges need no oracle, so they are applied before simulation and
    // the traversal only sees the rewritten check.
    let staged = sweeper.graph.substitute(&[check], &sweeper.subst)[0];
    let order = if staged == check {
        order
    } else {
        sweeper.graph.post_order(&[staged])
    };
    sweeper.stats.phases.arrays = phase.elapsed();

    let phase = Instant::now();
    let leaves = sweeper.graph.leaves(&[constraint, staged]);
    let patterns = gen_patterns(
        sweeper.graph,
        &leaves,
        constraint,
        config.patterns.max(1),
        config.seed,
        tables,
    )?;
    let mut sim = SimMatrix::simulate_all(sweeper.graph, &[staged], patterns)?;
    sweeper.stats.phases.simulation = phase.elapsed();

    let phase = Instant::now();
    sweeper.traverse(&order, &mut sim)?;
    sweeper.stats.phases.traversal = phase.elapsed();
    sweeper.stats.patterns_used = sim.pattern_count();

    let phase = Instant::now();
    let reduced = sweeper.graph.substitute(&[check], &sweeper.subst)[0];
    sweeper.stats.nodes_after = sweeper.graph.node_count(&[reduced]);
    let verdict = final_check(
        sweeper.graph,
        tables,
        constraint,
        check,
        reduced,
        sweeper.oracle,
        &mut sweeper.stats,
    );
    sweeper.stats.phases.residual = phase.elapsed();
    sweeper.stats.wall_time = start.elapsed();

    let Sweeper {
        stats,
        subst,
        merges,
        refutations,
        ..
    } = sweeper;
    let verdict = match verdict? {
        Ok(v) => v,
        Err(reason) => {
            return Err(SweepError::OracleUnknown {
                reason,
                stats: Box::new(stats),
                check: reduced,
            })
        }
    };
    Ok(SweepOutcome {
        constraint,
        check: reduced,
        verdict,
        stats,
        merges,
        refutations,
        subst,
    })
}

/// Decides `constraint ∧ reduced`. A model is checked against the original
/// `check` as well before it is returned.
fn final_check(
    graph: &TermGraph,
    tables: &ArrayTables,
    constraint: TermId,
    check: TermId,
    reduced: TermId,
    oracle: &mut dyn Oracle,
    stats: &mut SweepStats,
) -> Result<Result<Verdict, String>, SweepError> {
    if graph.const_value(reduced).is_some_and(|v| !v.is_true()) {
        return Ok(Ok(Verdict::Unsat));
    }
    stats.solver_calls += 1;
    let query = Query::new(graph, tables, constraint, reduced);
    match oracle::check(oracle, &query)? {
        OracleVerdict::Unsat => Ok(Ok(Verdict::Unsat)),
        OracleVerdict::Unknown(reason) => Ok(Err(reason)),
        OracleVerdict::Sat(mut model) => {
            let original = Query::new(graph, tables, constraint, check);
            model.complete_with_defaults(graph, &original.leaves(), tables);
            oracle::validate_model(oracle.name(), &original, &model)?;
            Ok(Ok(Verdict::Sat(model)))
        }
    }
}

/// Decides `constraint ∧ check` with a single oracle call and no sweeping.
pub fn solve_monolithic(
    graph: &TermGraph,
    tables: &ArrayTables,
    constraint: TermId,
    check: TermId,
    oracle: &mut dyn Oracle,
) -> Result<SweepOutcome, SweepError> {
    let start = Instant::now();
    let nodes = graph.node_count(&[check]);
    let mut stats = SweepStats {
        nodes_before: nodes,
        nodes_after: nodes,
        ..SweepStats::default()
    };
    let verdict = final_check(graph, tables, constraint, check, check, oracle, &mut stats)?;
    stats.phases.residual = start.elapsed();
    stats.wall_time = start.elapsed();
    match verdict {
        Ok(verdict) => Ok(SweepOutcome {
            constraint,
            check,
            verdict,
            stats,
            merges: Vec::new(),
            refutations: Vec::new(),
            subst: SubstMap::new(),
        }),
        Err(reason) => Err(SweepError::OracleUnknown {
            reason,
            stats: Box::new(stats),
            check,
        }),
    }
}
