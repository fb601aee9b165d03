//! Bounded unrolling of a transition system into a combinational problem.
//!
//! Frame `f` copies of inputs are fresh variables named `name@f`. At frame 0 a
//! state takes its `init` term; states without `init` (and tabulated arrays)
//! become a fresh leaf `name@0`. At frame `f + 1` a state is its `next` term
//! over frame `f`.

use crate::array::{extract_const_arrays, ArrayTables};
use crate::btor2::TransitionSystem;
use crate::term::{Op, SortError, SymbolError, TermGraph, TermId};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UnrollError {
    #[error("state `{state}` has no next-state function but is needed at frame {frame}")]
    Bound { state: String, frame: u32 },
    #[error("initial values of `{0}` depend on themselves")]
    InitCycle(String),
    #[error(transparent)]
    Sort(#[from] SortError),
    #[error(transparent)]
    Symbol(#[from] SymbolError),
}

/// Combinational problem obtained from a bounded unrolling.
#[derive(Debug, Clone)]
pub struct UnrolledProblem {
    pub bound: u32,
    /// `(input name, frame)` to its frame copy.
    pub frame_inputs: BTreeMap<(String, u32), TermId>,
    /// State name to the leaf standing for its unknown initial value.
    pub initial_leaves: BTreeMap<String, TermId>,
    /// Constant tables keyed by the frame-0 leaf of the array.
    pub tables: ArrayTables,
    /// Conjunction of all constraints over frames `0..=bound`.
    pub constraint: TermId,
    pub check: TermId,
    /// Named outputs at the last frame.
    pub outputs: Vec<(String, TermId)>,
}

impl UnrolledProblem {
    pub fn roots(&self) -> [TermId; 2] {
        [self.constraint, self.check]
    }

    pub fn output(&self, name: &str) -> Option<TermId> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| *t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Ctx {
    Frame(u32),
    /// Inside the init term of a state, where the state itself means its
    /// unknown initial content.
    Init(TermId),
}

enum Task {
    Enter(TermId, Ctx),
    Build(TermId, Ctx),
    Link(TermId, Ctx, TermId, Ctx),
}

/// Instantiates terms of one transition system at given frames. Several
/// unrollers may share a graph, e.g. for the two sides of an equivalence
/// check.
pub struct Unroller<'s> {
    sys: &'s TransitionSystem,
    state_tables: ArrayTables,
    input_names: HashMap<TermId, String>,
    memo: HashMap<(TermId, Ctx), TermId>,
    frame_inputs: BTreeMap<(String, u32), TermId>,
    initial_leaves: BTreeMap<String, TermId>,
    unrolled_tables: ArrayTables,
}

impl<'s> Unroller<'s> {
    pub fn new(graph: &TermGraph, sys: &'s TransitionSystem) -> Self {
        Self {
            sys,
            state_tables: extract_const_arrays(graph, sys),
            input_names: sys
                .inputs
                .iter()
                .map(|i| (i.term, i.name.clone()))
                .collect(),
            memo: HashMap::new(),
            frame_inputs: BTreeMap::new(),
            initial_leaves: BTreeMap::new(),
            unrolled_tables: ArrayTables::new(),
        }
    }

    /// Copy of `t` at `frame`.
    pub fn term_at(
        &mut self,
        graph: &mut TermGraph,
        t: TermId,
        frame: u32,
    ) -> Result<TermId, UnrollError> {
        self.translate(graph, t, Ctx::Frame(frame))
    }

    /// Conjunction of every constraint at every frame `0..=bound`.
    pub fn constraints_upto(
        &mut self,
        graph: &mut TermGraph,
        bound: u32,
    ) -> Result<TermId, UnrollError> {
        let mut parts = Vec::new();
        for frame in 0..=bound {
            for &c in &self.sys.constraints {
                parts.push(self.term_at(graph, c, frame)?);
            }
        }
        Ok(graph.mk_and_all(parts)?)
    }

    /// Disjunction of the bad properties at `bound`, or at every frame up to
    /// it.
    pub fn bads(
        &mut self,
        graph: &mut TermGraph,
        bound: u32,
        all_frames: bool,
    ) -> Result<TermId, UnrollError> {
        let first = if all_frames { 0 } else { bound };
        let mut parts = Vec::new();
        for frame in first..=bound {
            for &b in &self.sys.bads {
                parts.push(self.term_at(graph, b, frame)?);
            }
        }
        Ok(graph.mk_or_all(parts)?)
    }

    pub fn outputs_at(
        &mut self,
        graph: &mut TermGraph,
        frame: u32,
    ) -> Result<Vec<(String, TermId)>, UnrollError> {
        let sys = self.sys;
        sys.outputs
            .iter()
            .map(|(n, t)| Ok((n.clone(), self.term_at(graph, *t, frame)?)))
            .collect()
    }

    pub fn frame_inputs(&self) -> &BTreeMap<(String, u32), TermId> {
        &self.frame_inputs
    }

    pub fn tables(&self) -> &ArrayTables {
        &self.unrolled_tables
    }

    pub fn initial_leaves(&self) -> &BTreeMap<String, TermId> {
        &self.initial_leaves
    }

    /// Packages the problem for `check` under `constraint`.
    pub fn finish(
        self,
        bound: u32,
        constraint: TermId,
        check: TermId,
        outputs: Vec<(String, TermId)>,
    ) -> UnrolledProblem {
        UnrolledProblem {
            bound,
            frame_inputs: self.frame_inputs,
            initial_leaves: self.initial_leaves,
            tables: self.unrolled_tables,
            constraint,
            check,
            outputs,
        }
    }

    fn state_name(&self, graph: &TermGraph, s: TermId) -> String {
        graph.symbol_name(s).unwrap_or("state").to_string()
    }

    fn initial_leaf(&mut self, graph: &mut TermGraph, s: TermId) -> Result<TermId, UnrollError> {
        let name = self.state_name(graph, s);
        let leaf = graph.mk_var(&format!("{name}@0"), graph.sort(s))?;
        if let Some(table) = self.state_tables.get(&s) {
            self.unrolled_tables
                .insert(leaf, Arc::new(table.rebind(leaf)));
        }
        self.initial_leaves.insert(name, leaf);
        Ok(leaf)
    }

    fn translate(
        &mut self,
        graph: &mut TermGraph,
        root: TermId,
        ctx: Ctx,
    ) -> Result<TermId, UnrollError> {
        let mut open: HashSet<(TermId, Ctx)> = HashSet::new();
        let mut stack = vec![Task::Enter(root, ctx)];
        while let Some(task) = stack.pop() {
            match task {
                Task::Enter(t, ctx) => {
                    if self.memo.contains_key(&(t, ctx)) {
                        continue;
                    }
                    if !open.insert((t, ctx)) {
                        return Err(UnrollError::InitCycle(self.state_name(graph, t)));
                    }
                    match graph.op(t) {
                        Op::State(_) => match self.resolve_state(graph, t, ctx)? {
                            Ok(leaf) => {
                                open.remove(&(t, ctx));
                                self.memo.insert((t, ctx), leaf);
                            }
                            Err((dep, dep_ctx)) => {
                                stack.push(Task::Link(t, ctx, dep, dep_ctx));
                                stack.push(Task::Enter(dep, dep_ctx));
                            }
                        },
                        _ => {
                            stack.push(Task::Build(t, ctx));
                            for &o in graph.operands(t).iter().rev() {
                                stack.push(Task::Enter(o, ctx));
                            }
                        }
                    }
                }
                Task::Build(t, ctx) => {
                    let out = match graph.op(t).clone() {
                        Op::Const(_) => t,
                        Op::Var(name) => {
                            let frame = match ctx {
                                Ctx::Frame(f) => f,
                                Ctx::Init(_) => 0,
                            };
                            let copy = graph.mk_var(&format!("{name}@{frame}"), graph.sort(t))?;
                            let key = self
                                .input_names
                                .get(&t)
                                .cloned()
                                .unwrap_or_else(|| name.to_string());
                            self.frame_inputs.insert((key, frame), copy);
                            copy
                        }
                        op => {
                            let operands: Vec<TermId> = graph
                                .operands(t)
                                .iter()
                                .map(|&o| self.memo[&(o, ctx)])
                                .collect();
                            graph.mk(op, &operands)?
                        }
                    };
                    open.remove(&(t, ctx));
                    self.memo.insert((t, ctx), out);
                }
                Task::Link(t, ctx, dep, dep_ctx) => {
                    let v = self.memo[&(dep, dep_ctx)];
                    open.remove(&(t, ctx));
                    self.memo.insert((t, ctx), v);
                }
            }
        }
        Ok(self.memo[&(root, ctx)])
    }

    /// Either the term standing for state `s` in `ctx`, or the `(term, ctx)`
    /// whose translation defines it.
    #[allow(clippy::type_complexity)]
    fn resolve_state(
        &mut self,
        graph: &mut TermGraph,
        s: TermId,
        ctx: Ctx,
    ) -> Result<Result<TermId, (TermId, Ctx)>, UnrollError> {
        let sys = self.sys;
        let Some(state) = sys.state(s) else {
            // A state of another system; keep it symbolic.
            return Ok(Ok(s));
        };
        match ctx {
            Ctx::Init(owner) if owner == s => Ok(Ok(self.initial_leaf(graph, s)?)),
            Ctx::Init(_) => Ok(Err((s, Ctx::Frame(0)))),
            Ctx::Frame(0) => {
                if self.state_tables.contains_key(&s) {
                    return Ok(Ok(self.initial_leaf(graph, s)?));
                }
                match state.init {
                    Some(init) if graph.sort(init) == state.sort => Ok(Err((init, Ctx::Init(s)))),
                    Some(init) => {
                        // Constant-array init without a table cannot happen for
                        // constant elements, so the element here is symbolic.
                        let name = self.state_name(graph, s);
                        Err(UnrollError::Sort(SortError {
                            op: "init",
                            msg: format!(
                                "`{name}` is initialized with non-constant element {init}"
                            ),
                        }))
                    }
                    None => Ok(Ok(self.initial_leaf(graph, s)?)),
                }
            }
            Ctx::Frame(f) => match state.next {
                Some(next) => Ok(Err((next, Ctx::Frame(f - 1)))),
                None => Err(UnrollError::Bound {
                    state: self.state_name(graph, s),
                    frame: f,
                }),
            },
        }
    }
}

/// Unrolls `sys` to `bound` for bounded reachability of its bad properties.
pub fn unroll(
    graph: &mut TermGraph,
    sys: &TransitionSystem,
    bound: u32,
    all_frames: bool,
) -> Result<UnrolledProblem, UnrollError> {
    let mut u = Unroller::new(graph, sys);
    let constraint = u.constraints_upto(graph, bound)?;
    let check = u.bads(graph, bound, all_frames)?;
    let outputs = u.outputs_at(graph, bound)?;
    Ok(u.finish(bound, constraint, check, outputs))
}
