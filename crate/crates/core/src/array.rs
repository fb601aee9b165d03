//! Constant array tables.
//!
//! BTOR2 models describe read-only memories (lookup tables, S-boxes) as an
//! array state whose `init` is a chain of `write`s with constant indices and
//! values. This module turns such chains into explicit index/value tables and
//! uses them to merge arrays and `read` terms without consulting a solver.

use crate::btor2::TransitionSystem;
use crate::bv::{BitVecValue, Width};
use crate::term::{Op, Sort, TermGraph, TermId};
use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstArrayTable {
    /// The array this table describes: a state before unrolling, the frame-0
    /// array leaf afterwards.
    pub array: TermId,
    pub index_width: Width,
    pub element_width: Width,
    pub entries: BTreeMap<BitVecValue, BitVecValue>,
    /// Value of every index without an entry, when the base of the write chain
    /// is a constant array.
    pub default: Option<BitVecValue>,
    /// Every index in `[0, 2^index_width)` has a defined value.
    pub complete: bool,
}

pub type ArrayTables = BTreeMap<TermId, Arc<ConstArrayTable>>;

impl ConstArrayTable {
    pub fn new(
        array: TermId,
        index_width: Width,
        element_width: Width,
        entries: BTreeMap<BitVecValue, BitVecValue>,
        default: Option<BitVecValue>,
    ) -> Self {
        let covers_all = index_width < 64 && entries.len() as u64 == 1u64 << index_width;
        let complete = default.is_some() || covers_all;
        Self {
            array,
            index_width,
            element_width,
            entries,
            default,
            complete,
        }
    }

    pub fn get(&self, index: &BitVecValue) -> Option<&BitVecValue> {
        self.entries.get(index).or(self.default.as_ref())
    }

    pub fn sort(&self) -> Sort {
        Sort::Array {
            index: self.index_width,
            element: self.element_width,
        }
    }

    /// Same table re-keyed to another array term.
    pub fn rebind(&self, array: TermId) -> Self {
        Self {
            array,
            ..self.clone()
        }
    }
}

/// Operators admitted on the right-hand side of `a1[i] = op(a2[i], a3[i])`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArrayUnifyOp {
    Concat,
    Xor,
    Add,
    Not,
}

impl ArrayUnifyOp {
    pub fn op(self) -> Op {
        match self {
            ArrayUnifyOp::Concat => Op::Concat,
            ArrayUnifyOp::Xor => Op::Xor,
            ArrayUnifyOp::Add => Op::Add,
            ArrayUnifyOp::Not => Op::Not,
        }
    }

    pub fn matches(self, op: &Op) -> bool {
        self.op() == *op
    }
}

impl FromStr for ArrayUnifyOp {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(Self::Concat),
            "xor" => Ok(Self::Xor),
            "add" => Ok(Self::Add),
            "not" => Ok(Self::Not),
            other => Err(format!("unsupported array unification operator `{other}`")),
        }
    }
}

/// Tabulates every array state whose `init` is a constant array or a chain
/// of constant writes. Later writes shadow earlier ones at the same index.
///
/// The base of a write chain may be the state itself (undefined initial
/// content, the usual encoding of ROMs) or a state initialized to a constant
/// array. Any other base is accepted only when the writes cover every index.
pub fn extract_const_arrays(graph: &TermGraph, sys: &TransitionSystem) -> ArrayTables {
    let mut tables = ArrayTables::new();
    for state in &sys.states {
        let Sort::Array { index, element } = state.sort else {
            continue;
        };
        let Some(init) = state.init else { continue };
        if let Some(table) = tabulate(graph, sys, state.term, init, index, element) {
            tables.insert(state.term, Arc::new(table));
        }
    }
    tables
}

fn constant_array_init(
    graph: &TermGraph,
    sys: &TransitionSystem,
    t: TermId,
) -> Option<BitVecValue> {
    let init = sys.state(t)?.init?;
    match graph.sort(init) {
        Sort::BitVec(_) => graph.const_value(init).cloned(),
        Sort::Array { .. } => None,
    }
}

fn tabulate(
    graph: &TermGraph,
    sys: &TransitionSystem,
    state: TermId,
    init: TermId,
    index_width: Width,
    element_width: Width,
) -> Option<ConstArrayTable> {
    if graph.sort(init) == Sort::BitVec(element_width) {
        let value = graph.const_value(init)?.clone();
        return Some(ConstArrayTable::new(
            state,
            index_width,
            element_width,
            BTreeMap::new(),
            Some(value),
        ));
    }
    let mut writes = Vec::new();
    let mut t = init;
    while *graph.op(t) == Op::Write {
        let ops = graph.operands(t);
        let index = graph.const_value(ops[1])?.clone();
        let value = graph.const_value(ops[2])?.clone();
        writes.push((index, value));
        t = ops[0];
    }
    let mut entries = BTreeMap::new();
    for (index, value) in writes.into_iter().rev() {
        entries.insert(index, value);
    }
    let default = if t == state {
        None
    } else {
        constant_array_init(graph, sys, t)
    };
    let table = ConstArrayTable::new(state, index_width, element_width, entries, default);
    let base_ok = t == state || table.default.is_some() || table.complete;
    base_ok.then_some(table)
}

/// Checks `relation` at every index of the given tables. Indices without an
/// explicit entry in any table are covered by a single check on the
/// defaults. All tables must share the index width and be complete.
fn holds_everywhere(
    tables: &[&ConstArrayTable],
    mut relation: impl FnMut(&[&BitVecValue]) -> bool,
) -> bool {
    debug_assert!(tables.iter().all(|t| t.complete));
    let index_width = tables[0].index_width;
    if tables
        .iter()
        .any(|t| t.index_width != index_width || !t.complete)
    {
        return false;
    }
    let keys: BTreeSet<&BitVecValue> = tables.iter().flat_map(|t| t.entries.keys()).collect();
    for k in &keys {
        let values: Vec<&BitVecValue> = tables.iter().map(|t| t.get(k).unwrap()).collect();
        if !relation(&values) {
            return false;
        }
    }
    let covers_all = index_width < 64 && keys.len() as u64 == 1u64 << index_width;
    if !covers_all {
        let defaults: Option<Vec<&BitVecValue>> =
            tables.iter().map(|t| t.default.as_ref()).collect();
        match defaults {
            Some(d) => return relation(&d),
            None => return false,
        }
    }
    true
}

/// Pairs `(later, earlier)` of arrays whose tables have the same sort and
/// agree at every index. Only complete tables take part: an undefined cell is
/// unconstrained, so two partially defined arrays may still differ.
pub fn unify_identical_arrays(tables: &ArrayTables) -> Vec<(TermId, TermId)> {
    let mut representatives: Vec<&ConstArrayTable> = Vec::new();
    let mut merges = Vec::new();
    for table in tables.values() {
        if !table.complete {
            continue;
        }
        let same = representatives.iter().find(|rep| {
            rep.sort() == table.sort() && holds_everywhere(&[rep, table], |v| v[0] == v[1])
        });
        match same {
            Some(rep) => merges.push((table.array, rep.array)),
            None => representatives.push(table),
        }
    }
    merges
}

fn table_read<'a>(
    graph: &TermGraph,
    t: TermId,
    tables: &'a ArrayTables,
) -> Option<(TermId, &'a ConstArrayTable)> {
    if *graph.op(t) != Op::Read {
        return None;
    }
    let ops = graph.operands(t);
    let table = tables.get(&ops[0])?;
    table.complete.then_some((ops[1], table.as_ref()))
}

/// Recognizes `t1 = a1[i]` and `t2 = op(a2[i], a3[i])` (or `op(a2[i])` for
/// unary operators) over complete tables with the same index term `i`, and
/// returns `(t2, t1)` when `T1[k] = op(T2[k], T3[k])` holds at every index.
pub fn try_select_unify(
    graph: &TermGraph,
    t1: TermId,
    t2: TermId,
    tables: &ArrayTables,
    ops: &[ArrayUnifyOp],
) -> Option<(TermId, TermId)> {
    if t1 == t2 || graph.sort(t1) != graph.sort(t2) {
        return None;
    }
    let (index, left) = table_read(graph, t1, tables)?;
    let op = graph.op(t2);
    if !ops.iter().any(|o| o.matches(op)) {
        return None;
    }
    let mut right = Vec::new();
    for &operand in graph.operands(t2) {
        let (i, table) = table_read(graph, operand, tables)?;
        if i != index {
            return None;
        }
        right.push(table);
    }
    let mut all = vec![left];
    all.extend(right.iter().copied());
    let holds = holds_everywhere(&all, |v| {
        let args = &v[1..];
        op.apply_bv(args).is_some_and(|r| &r == v[0])
    });
    holds.then_some((t2, t1))
}
