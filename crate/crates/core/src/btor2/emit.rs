use crate::array::ArrayTables;
use crate::term::{Op, Sort, TermGraph, TermId};
use std::collections::HashMap;
use std::fmt::Write as _;

use super::TransitionSystem;

/// Incremental BTOR2 printer. Terms are emitted on demand, operands first,
/// and every term gets exactly one line.
pub struct Btor2Writer<'g> {
    graph: &'g TermGraph,
    out: String,
    next_id: i64,
    sorts: HashMap<Sort, i64>,
    nodes: HashMap<TermId, i64>,
}

impl<'g> Btor2Writer<'g> {
    pub fn new(graph: &'g TermGraph) -> Self {
        Self {
            graph,
            out: String::new(),
            next_id: 1,
            sorts: HashMap::new(),
            nodes: HashMap::new(),
        }
    }

    fn emit_line(&mut self, body: std::fmt::Arguments<'_>) -> i64 {
        let id = self.next_id;
        self.next_id += 1;
        let _ = writeln!(self.out, "{id} {body}");
        id
    }

    pub fn sort(&mut self, sort: Sort) -> i64 {
        if let Some(&id) = self.sorts.get(&sort) {
            return id;
        }
        let id = match sort {
            Sort::BitVec(w) => self.emit_line(format_args!("sort bitvec {w}")),
            Sort::Array { index, element } => {
                let i = self.sort(Sort::BitVec(index));
                let e = self.sort(Sort::BitVec(element));
                self.emit_line(format_args!("sort array {i} {e}"))
            }
        };
        self.sorts.insert(sort, id);
        id
    }

    /// Declares a leaf explicitly so declaration order can be controlled.
    pub fn declare(&mut self, t: TermId) -> i64 {
        self.node(t)
    }

    /// Emits `t` and everything below it; returns its line id.
    pub fn node(&mut self, root: TermId) -> i64 {
        if let Some(&id) = self.nodes.get(&root) {
            return id;
        }
        for t in self.graph.post_order(&[root]) {
            if self.nodes.contains_key(&t) {
                continue;
            }
            let sid = self.sort(self.graph.sort(t));
            let args: Vec<i64> = self
                .graph
                .operands(t)
                .iter()
                .map(|o| self.nodes[o])
                .collect();
            let id = match self.graph.op(t) {
                Op::Const(v) => self.emit_line(format_args!("const {sid} {}", v.to_bit_string())),
                Op::Var(name) => self.emit_line(format_args!("input {sid} {name}")),
                Op::State(name) => self.emit_line(format_args!("state {sid} {name}")),
                Op::Slice { hi, lo } => {
                    self.emit_line(format_args!("slice {sid} {} {hi} {lo}", args[0]))
                }
                Op::Uext(n) => self.emit_line(format_args!("uext {sid} {} {n}", args[0])),
                Op::Sext(n) => self.emit_line(format_args!("sext {sid} {} {n}", args[0])),
                op => {
                    let list = args
                        .iter()
                        .map(|a| a.to_string())
                        .collect::<Vec<_>>()
                        .join(" ");
                    self.emit_line(format_args!("{} {sid} {list}", op.name()))
                }
            };
            self.nodes.insert(t, id);
        }
        self.nodes[&root]
    }

    pub fn init(&mut self, state: TermId, value: TermId) {
        let sid = self.sort(self.graph.sort(state));
        let (s, v) = (self.node(state), self.node(value));
        self.emit_line(format_args!("init {sid} {s} {v}"));
    }

    pub fn next(&mut self, state: TermId, value: TermId) {
        let sid = self.sort(self.graph.sort(state));
        let (s, v) = (self.node(state), self.node(value));
        self.emit_line(format_args!("next {sid} {s} {v}"));
    }

    pub fn constraint(&mut self, t: TermId) {
        let n = self.node(t);
        self.emit_line(format_args!("constraint {n}"));
    }

    pub fn bad(&mut self, t: TermId) {
        let n = self.node(t);
        self.emit_line(format_args!("bad {n}"));
    }

    pub fn output(&mut self, t: TermId, name: &str) {
        let n = self.node(t);
        self.emit_line(format_args!("output {n} {name}"));
    }

    /// Emits a raw line built from already-emitted ids.
    pub fn raw(&mut self, body: std::fmt::Arguments<'_>) -> i64 {
        self.emit_line(body)
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Prints a whole transition system. Inputs and states are declared first, in
/// their original order.
pub fn emit_system(graph: &TermGraph, sys: &TransitionSystem) -> String {
    let mut w = Btor2Writer::new(graph);
    for input in &sys.inputs {
        w.declare(input.term);
    }
    for state in &sys.states {
        w.declare(state.term);
    }
    for state in &sys.states {
        if let Some(init) = state.init {
            w.init(state.term, init);
        }
        if let Some(next) = state.next {
            w.next(state.term, next);
        }
    }
    for &c in &sys.constraints {
        w.constraint(c);
    }
    for &b in &sys.bads {
        w.bad(b);
    }
    for (name, t) in &sys.outputs {
        w.output(*t, name);
    }
    w.finish()
}

/// Prints a combinational check as BTOR2: one `constraint` (omitted when it
/// is the constant 1) and one `bad`. Array leaves with a constant table are
/// rendered as a state initialized by a chain of writes.
pub fn emit_problem(
    graph: &TermGraph,
    constraint: TermId,
    check: TermId,
    tables: &ArrayTables,
) -> String {
    let mut w = Btor2Writer::new(graph);
    for leaf in graph.leaves(&[constraint, check]) {
        let Some(table) = tables.get(&leaf) else {
            w.declare(leaf);
            continue;
        };
        let name = graph.symbol_name(leaf).unwrap_or("array").to_string();
        let sort = graph.sort(leaf);
        let sid = w.sort(sort);
        let esid = w.sort(Sort::BitVec(table.element_width));
        let isid = w.sort(Sort::BitVec(table.index_width));
        let state = w.raw(format_args!("state {sid} {name}"));
        let mut base = state;
        if let Some(default) = &table.default {
            let base_state = w.raw(format_args!("state {sid} {name}#base"));
            let c = w.raw(format_args!("const {esid} {}", default.to_bit_string()));
            w.raw(format_args!("init {sid} {base_state} {c}"));
            base = base_state;
        }
        let mut chain = base;
        for (index, value) in &table.entries {
            let i = w.raw(format_args!("const {isid} {}", index.to_bit_string()));
            let v = w.raw(format_args!("const {esid} {}", value.to_bit_string()));
            chain = w.raw(format_args!("write {sid} {chain} {i} {v}"));
        }
        w.raw(format_args!("init {sid} {state} {chain}"));
        w.nodes.insert(leaf, state);
    }
    if graph.const_value(constraint).is_none_or(|v| !v.is_true()) {
        w.constraint(constraint);
    }
    w.bad(check);
    w.finish()
}
