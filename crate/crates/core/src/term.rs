//! Hash-consed word-level term DAG.
//!
//! Every term is built through [`TermGraph::mk`], which type-checks the
//! operands, folds operators whose operands are all constants, and returns the
//! existing id when a structurally identical node is already present.

use crate::bv::{BitVecValue, Width};
use smallvec::SmallVec;
use std::collections::{hash_map::Entry, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;
use std::sync::OnceLock;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermId(u32);

impl TermId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Arrays map bit-vector indices to bit-vector elements; arrays of arrays are
/// not representable.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub enum Sort {
    BitVec(Width),
    Array { index: Width, element: Width },
}

impl Sort {
    pub const BOOL: Sort = Sort::BitVec(1);

    pub fn bv_width(self) -> Option<Width> {
        match self {
            Sort::BitVec(w) => Some(w),
            Sort::Array { .. } => None,
        }
    }

    pub fn is_array(self) -> bool {
        matches!(self, Sort::Array { .. })
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sort::BitVec(w) => write!(f, "bv{w}"),
            Sort::Array { index, element } => write!(f, "array(bv{index} -> bv{element})"),
        }
    }
}

pub type Symbol = Arc<str>;

/// Operator tag together with its immediates.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub enum Op {
    Const(BitVecValue),
    /// Free leaf: a circuit input, a per-frame input or an unconstrained
    /// initial state.
    Var(Symbol),
    /// Sequential state symbol; only present before unrolling.
    State(Symbol),
    Not,
    Neg,
    RedAnd,
    RedOr,
    RedXor,
    And,
    Or,
    Xor,
    Add,
    Sub,
    Mul,
    Udiv,
    Urem,
    Sdiv,
    Srem,
    Smod,
    Sll,
    Srl,
    Sra,
    Eq,
    Ult,
    Ule,
    Slt,
    Sle,
    Concat,
    Slice {
        hi: Width,
        lo: Width,
    },
    Uext(Width),
    Sext(Width),
    Ite,
    Read,
    Write,
}

impl Op {
    pub fn is_leaf(&self) -> bool {
        matches!(self, Op::Const(_) | Op::Var(_) | Op::State(_))
    }

    pub fn arity(&self) -> usize {
        use Op::*;
        match self {
            Const(_) | Var(_) | State(_) => 0,
            Not | Neg | RedAnd | RedOr | RedXor | Slice { .. } | Uext(_) | Sext(_) => 1,
            Ite | Write => 3,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        use Op::*;
        match self {
            Const(_) => "const",
            Var(_) => "var",
            State(_) => "state",
            Not => "not",
            Neg => "neg",
            RedAnd => "redand",
            RedOr => "redor",
            RedXor => "redxor",
            And => "and",
            Or => "or",
            Xor => "xor",
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Udiv => "udiv",
            Urem => "urem",
            Sdiv => "sdiv",
            Srem => "srem",
            Smod => "smod",
            Sll => "sll",
            Srl => "srl",
            Sra => "sra",
            Eq => "eq",
            Ult => "ult",
            Ule => "ulte",
            Slt => "slt",
            Sle => "slte",
            Concat => "concat",
            Slice { .. } => "slice",
            Uext(_) => "uext",
            Sext(_) => "sext",
            Ite => "ite",
            Read => "read",
            Write => "write",
        }
    }

    /// Typing rule: result sort for the given operand sorts.
    pub fn result_sort(&self, args: &[Sort]) -> Result<Sort, SortError> {
        use Op::*;
        let err = |msg: String| {
            Err(SortError {
                op: self.name(),
                msg,
            })
        };
        if args.len() != self.arity() {
            return err(format!(
                "expected {} operands, got {}",
                self.arity(),
                args.len()
            ));
        }
        let bv = |i: usize| -> Result<Width, SortError> {
            args[i].bv_width().ok_or_else(|| SortError {
                op: self.name(),
                msg: format!("operand {i} must be a bit-vector, got {}", args[i]),
            })
        };
        match self {
            Const(v) => Ok(Sort::BitVec(v.width())),
            Var(_) | State(_) => err("leaf sorts are assigned at declaration".into()),
            Not | Neg => Ok(Sort::BitVec(bv(0)?)),
            RedAnd | RedOr | RedXor => {
                bv(0)?;
                Ok(Sort::BOOL)
            }
            And | Or | Xor | Add | Sub | Mul | Udiv | Urem | Sdiv | Srem | Smod | Sll | Srl
            | Sra => {
                let (a, b) = (bv(0)?, bv(1)?);
                if a != b {
                    return err(format!("operand widths differ: {a} vs {b}"));
                }
                Ok(Sort::BitVec(a))
            }
            Eq | Ult | Ule | Slt | Sle => {
                let (a, b) = (bv(0)?, bv(1)?);
                if a != b {
                    return err(format!("operand widths differ: {a} vs {b}"));
                }
                Ok(Sort::BOOL)
            }
            Concat => Ok(Sort::BitVec(bv(0)? + bv(1)?)),
            Slice { hi, lo } => {
                let w = bv(0)?;
                if lo > hi || *hi >= w {
                    return err(format!("slice [{hi}:{lo}] out of range for width {w}"));
                }
                Ok(Sort::BitVec(hi - lo + 1))
            }
            Uext(n) | Sext(n) => Ok(Sort::BitVec(bv(0)? + n)),
            Ite => {
                if args[0] != Sort::BOOL {
                    return err(format!("condition must be bv1, got {}", args[0]));
                }
                if args[1] != args[2] {
                    return err(format!("branch sorts differ: {} vs {}", args[1], args[2]));
                }
                Ok(args[1])
            }
            Read => match args[0] {
                Sort::Array { index, element } if args[1] == Sort::BitVec(index) => {
                    Ok(Sort::BitVec(element))
                }
                _ => err(format!("cannot read {} at {}", args[0], args[1])),
            },
            Write => match args[0] {
                Sort::Array { index, element }
                    if args[1] == Sort::BitVec(index) && args[2] == Sort::BitVec(element) =>
                {
                    Ok(args[0])
                }
                _ => err(format!(
                    "cannot write {} at {} in {}",
                    args[2], args[1], args[0]
                )),
            },
        }
    }

    /// Bit-vector semantics of every non-leaf, non-array operator.
    ///
    /// Returns `None` for leaves and for `read`/`write`, whose semantics need
    /// array values.
    pub fn apply_bv(&self, args: &[&BitVecValue]) -> Option<BitVecValue> {
        use Op::*;
        let b = BitVecValue::from_bool;
        Some(match self {
            Const(_) | Var(_) | State(_) | Read | Write => return None,
            Not => args[0].not(),
            Neg => args[0].neg(),
            RedAnd => args[0].redand(),
            RedOr => args[0].redor(),
            RedXor => args[0].redxor(),
            And => args[0].and(args[1]),
            Or => args[0].or(args[1]),
            Xor => args[0].xor(args[1]),
            Add => args[0].add(args[1]),
            Sub => args[0].sub(args[1]),
            Mul => args[0].mul(args[1]),
            Udiv => args[0].udiv(args[1]),
            Urem => args[0].urem(args[1]),
            Sdiv => args[0].sdiv(args[1]),
            Srem => args[0].srem(args[1]),
            Smod => args[0].smod(args[1]),
            Sll => args[0].shl(args[1]),
            Srl => args[0].lshr(args[1]),
            Sra => args[0].ashr(args[1]),
            Eq => b(args[0] == args[1]),
            Ult => b(args[0].ult(args[1])),
            Ule => b(args[0].ule(args[1])),
            Slt => b(args[0].slt(args[1])),
            Sle => b(args[0].sle(args[1])),
            Concat => args[0].concat(args[1]),
            Slice { hi, lo } => args[0].slice(*hi, *lo),
            Uext(n) => args[0].zext(*n),
            Sext(n) => args[0].sext(*n),
            Ite => {
                if args[0].is_true() {
                    args[1].clone()
                } else {
                    args[2].clone()
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ill-sorted `{op}`: {msg}")]
pub struct SortError {
    pub op: &'static str,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SymbolError {
    #[error("symbol `{0}` already declared with a different sort or kind")]
    Redeclared(String),
    #[error(transparent)]
    Sort(#[from] SortError),
}

pub type Operands = SmallVec<[TermId; 3]>;

#[derive(Debug, Clone)]
pub struct Term {
    pub op: Op,
    pub operands: Operands,
    pub sort: Sort,
    /// Longest path to a leaf; leaves have depth 0.
    pub depth: u32,
    ast_size: OnceLock<u32>,
}

#[derive(Default)]
pub struct TermGraph {
    terms: Vec<Term>,
    unique: HashMap<(Op, Operands), TermId>,
    symbols: HashMap<Symbol, TermId>,
}

impl TermGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    #[inline]
    pub fn term(&self, t: TermId) -> &Term {
        &self.terms[t.index()]
    }

    #[inline]
    pub fn sort(&self, t: TermId) -> Sort {
        self.terms[t.index()].sort
    }

    #[inline]
    pub fn op(&self, t: TermId) -> &Op {
        &self.terms[t.index()].op
    }

    #[inline]
    pub fn operands(&self, t: TermId) -> &[TermId] {
        &self.terms[t.index()].operands
    }

    pub fn width(&self, t: TermId) -> Option<Width> {
        self.sort(t).bv_width()
    }

    pub fn depth(&self, t: TermId) -> u32 {
        self.term(t).depth
    }

    pub fn const_value(&self, t: TermId) -> Option<&BitVecValue> {
        match self.op(t) {
            Op::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_const(&self, t: TermId) -> bool {
        matches!(self.op(t), Op::Const(_))
    }

    /// Variables and state symbols.
    pub fn is_symbolic_leaf(&self, t: TermId) -> bool {
        matches!(self.op(t), Op::Var(_) | Op::State(_))
    }

    pub fn symbol_name(&self, t: TermId) -> Option<&str> {
        match self.op(t) {
            Op::Var(s) | Op::State(s) => Some(s),
            _ => None,
        }
    }

    pub fn lookup_symbol(&self, name: &str) -> Option<TermId> {
        self.symbols.get(name).copied()
    }

    /// Number of distinct nodes in the sub-DAG rooted at `t`, counting shared
    /// nodes once. Computed on first request and cached.
    pub fn ast_size(&self, t: TermId) -> u32 {
        *self
            .term(t)
            .ast_size
            .get_or_init(|| self.post_order(&[t]).len() as u32)
    }

    pub fn mk_const(&mut self, value: BitVecValue) -> TermId {
        self.intern(Op::Const(value), Operands::new(), None)
            .expect("constants are always well-sorted")
    }

    pub fn mk_bool(&mut self, value: bool) -> TermId {
        self.mk_const(BitVecValue::from_bool(value))
    }

    pub fn mk_var(&mut self, name: &str, sort: Sort) -> Result<TermId, SymbolError> {
        self.mk_symbol(Op::Var(name.into()), sort)
    }

    pub fn mk_state(&mut self, name: &str, sort: Sort) -> Result<TermId, SymbolError> {
        self.mk_symbol(Op::State(name.into()), sort)
    }

    fn mk_symbol(&mut self, op: Op, sort: Sort) -> Result<TermId, SymbolError> {
        if let Sort::BitVec(0) | Sort::Array { index: 0, .. } | Sort::Array { element: 0, .. } =
            sort
        {
            return Err(SortError {
                op: op.name(),
                msg: "zero-width sort".into(),
            }
            .into());
        }
        let name = match &op {
            Op::Var(s) | Op::State(s) => s.clone(),
            _ => unreachable!(),
        };
        if let Some(&existing) = self.symbols.get(&name) {
            if self.sort(existing) == sort && *self.op(existing) == op {
                return Ok(existing);
            }
            return Err(SymbolError::Redeclared(name.to_string()));
        }
        let id = self.intern(op, Operands::new(), Some(sort))?;
        self.symbols.insert(name, id);
        Ok(id)
    }

    /// Builds `op(operands)`, folding constants and reusing identical nodes.
    pub fn mk(&mut self, op: Op, operands: &[TermId]) -> Result<TermId, SortError> {
        if matches!(op, Op::Var(_) | Op::State(_)) {
            return Err(SortError {
                op: op.name(),
                msg: "use mk_var/mk_state for leaves".into(),
            });
        }
        let sorts: SmallVec<[Sort; 3]> = operands.iter().map(|&t| self.sort(t)).collect();
        let sort = op.result_sort(&sorts)?;
        if !op.is_leaf() && operands.iter().all(|&t| self.is_const(t)) {
            let folded = {
                let values: SmallVec<[&BitVecValue; 3]> = operands
                    .iter()
                    .map(|&t| self.const_value(t).unwrap())
                    .collect();
                op.apply_bv(&values)
            };
            if let Some(v) = folded {
                return Ok(self.mk_const(v));
            }
        }
        if let Some(t) = self.identity(&op, operands, sort) {
            return Ok(t);
        }
        self.intern(op, operands.iter().copied().collect(), Some(sort))
    }

    /// Identities on repeated operands and constant `ite` conditions.
    fn identity(&mut self, op: &Op, operands: &[TermId], sort: Sort) -> Option<TermId> {
        let width = sort.bv_width()?;
        match (op, operands) {
            (Op::Eq | Op::Ule | Op::Sle, [a, b]) if a == b => Some(self.mk_bool(true)),
            (Op::Ult | Op::Slt, [a, b]) if a == b => Some(self.mk_bool(false)),
            (Op::Xor | Op::Sub, [a, b]) if a == b => Some(self.mk_const(BitVecValue::zero(width))),
            (Op::And | Op::Or, [a, b]) if a == b => Some(*a),
            (Op::Ite, [_, a, b]) if a == b => Some(*a),
            (Op::Ite, [c, a, b]) => self
                .const_value(*c)
                .map(|v| if v.is_true() { *a } else { *b }),
            _ => None,
        }
    }

    fn intern(
        &mut self,
        op: Op,
        operands: Operands,
        sort: Option<Sort>,
    ) -> Result<TermId, SortError> {
        let key = (op, operands);
        if let Some(&id) = self.unique.get(&key) {
            return Ok(id);
        }
        let (op, operands) = key;
        let sort = match sort {
            Some(s) => s,
            None => op.result_sort(&[])?,
        };
        let depth = operands
            .iter()
            .map(|&o| self.depth(o) + 1)
            .max()
            .unwrap_or(0);
        let id = TermId(u32::try_from(self.terms.len()).expect("term graph overflow"));
        self.terms.push(Term {
            op: op.clone(),
            operands: operands.clone(),
            sort,
            depth,
            ast_size: OnceLock::new(),
        });
        self.unique.insert((op, operands), id);
        Ok(id)
    }

    // Convenience builders for width-1 logic. Callers pass bv1 terms.

    pub fn mk_not(&mut self, a: TermId) -> Result<TermId, SortError> {
        self.mk(Op::Not, &[a])
    }

    pub fn mk_and(&mut self, a: TermId, b: TermId) -> Result<TermId, SortError> {
        self.mk(Op::And, &[a, b])
    }

    pub fn mk_or(&mut self, a: TermId, b: TermId) -> Result<TermId, SortError> {
        self.mk(Op::Or, &[a, b])
    }

    pub fn mk_eq(&mut self, a: TermId, b: TermId) -> Result<TermId, SortError> {
        self.mk(Op::Eq, &[a, b])
    }

    /// `a != b` as a bv1 term.
    pub fn mk_distinct(&mut self, a: TermId, b: TermId) -> Result<TermId, SortError> {
        let eq = self.mk_eq(a, b)?;
        self.mk_not(eq)
    }

    /// Conjunction of bv1 terms; the empty conjunction is `1`.
    pub fn mk_and_all(
        &mut self,
        terms: impl IntoIterator<Item = TermId>,
    ) -> Result<TermId, SortError> {
        let mut acc: Option<TermId> = None;
        for t in terms {
            acc = Some(match acc {
                None => t,
                Some(a) => self.mk_and(a, t)?,
            });
        }
        match acc {
            Some(t) => Ok(t),
            None => Ok(self.mk_bool(true)),
        }
    }

    /// Disjunction of bv1 terms; the empty disjunction is `0`.
    pub fn mk_or_all(
        &mut self,
        terms: impl IntoIterator<Item = TermId>,
    ) -> Result<TermId, SortError> {
        let mut acc: Option<TermId> = None;
        for t in terms {
            acc = Some(match acc {
                None => t,
                Some(a) => self.mk_or(a, t)?,
            });
        }
        match acc {
            Some(t) => Ok(t),
            None => Ok(self.mk_bool(false)),
        }
    }

    /// Every term reachable from `roots`, each after all of its operands.
    /// Operands are visited left to right, so the order is deterministic.
    pub fn post_order(&self, roots: &[TermId]) -> Vec<TermId> {
        let mut seen = HashSet::new();
        let mut order = Vec::new();
        let mut stack: Vec<(TermId, usize)> = Vec::new();
        for &root in roots {
            if !seen.insert(root) {
                continue;
            }
            stack.push((root, 0));
            while let Some(&mut (t, ref mut next)) = stack.last_mut() {
                let operands = self.operands(t);
                if *next < operands.len() {
                    let child = operands[*next];
                    *next += 1;
                    if seen.insert(child) {
                        stack.push((child, 0));
                    }
                } else {
                    order.push(t);
                    stack.pop();
                }
            }
        }
        order
    }

    pub fn node_count(&self, roots: &[TermId]) -> usize {
        self.post_order(roots).len()
    }

    /// Distinct symbolic leaves reachable from `roots`, in post order.
    pub fn leaves(&self, roots: &[TermId]) -> Vec<TermId> {
        self.post_order(roots)
            .into_iter()
            .filter(|&t| self.is_symbolic_leaf(t))
            .collect()
    }

    /// Number of distinct parents of each term within the DAG of `roots`.
    pub fn fanout(&self, roots: &[TermId]) -> HashMap<TermId, u32> {
        let mut counts: HashMap<TermId, u32> = HashMap::new();
        for t in self.post_order(roots) {
            counts.entry(t).or_insert(0);
            let mut distinct: SmallVec<[TermId; 3]> = SmallVec::new();
            for &o in self.operands(t) {
                if !distinct.contains(&o) {
                    distinct.push(o);
                    *counts.entry(o).or_insert(0) += 1;
                }
            }
        }
        counts
    }

    /// Order used to pick class representatives: smaller `(ast_size, depth,
    /// id)` wins.
    pub fn representative_key(&self, t: TermId) -> (u32, u32, TermId) {
        (self.ast_size(t), self.depth(t), t)
    }

    /// Rebuilds `roots` with every term replaced by its representative in
    /// `subst`. Rebuilt nodes are hash-consed and constant-folded again, and a
    /// rebuilt node that is itself mapped is followed to its representative.
    pub fn substitute(&mut self, roots: &[TermId], subst: &SubstMap) -> Vec<TermId> {
        if subst.is_empty() {
            return roots.to_vec();
        }
        enum Task {
            Enter(TermId),
            Exit(TermId),
            Alias(TermId, TermId),
        }
        let mut memo: HashMap<TermId, TermId> = HashMap::new();
        let mut stack: Vec<Task> = roots.iter().rev().map(|&r| Task::Enter(r)).collect();
        while let Some(task) = stack.pop() {
            match task {
                Task::Enter(t) => {
                    if memo.contains_key(&t) {
                        continue;
                    }
                    let rep = subst.find(t);
                    if rep != t {
                        stack.push(Task::Alias(t, rep));
                        stack.push(Task::Enter(rep));
                    } else {
                        stack.push(Task::Exit(t));
                        for &o in self.operands(t).iter().rev() {
                            stack.push(Task::Enter(o));
                        }
                    }
                }
                Task::Exit(t) => {
                    if memo.contains_key(&t) {
                        continue;
                    }
                    let operands: Operands = self.operands(t).iter().map(|o| memo[o]).collect();
                    let rebuilt = if operands.as_slice() == self.operands(t) {
                        t
                    } else {
                        let op = self.op(t).clone();
                        self.mk(op, &operands)
                            .expect("substitution preserves sorts")
                    };
                    let rep = subst.find(rebuilt);
                    if rep != rebuilt {
                        stack.push(Task::Alias(t, rep));
                        stack.push(Task::Enter(rep));
                    } else {
                        memo.insert(t, rebuilt);
                    }
                }
                Task::Alias(t, target) => {
                    let v = memo[&target];
                    memo.insert(t, v);
                }
            }
        }
        roots.iter().map(|r| memo[r]).collect()
    }
}

/// Substitution map with union-find canonicalization.
///
/// Every edge points from a term to one that is strictly smaller under
/// [`TermGraph::representative_key`], so chains terminate and `find` is
/// idempotent.
#[derive(Debug, Clone, Default)]
pub struct SubstMap {
    parent: HashMap<TermId, TermId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot merge {a} ({sort_a}) with {b} ({sort_b})")]
pub struct MergeSortError {
    pub a: TermId,
    pub b: TermId,
    pub sort_a: Sort,
    pub sort_b: Sort,
}

impl SubstMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn find(&self, mut t: TermId) -> TermId {
        while let Some(&p) = self.parent.get(&t) {
            t = p;
        }
        t
    }

    pub fn is_representative(&self, t: TermId) -> bool {
        !self.parent.contains_key(&t)
    }

    /// Places `a` and `b` in one class and returns its representative.
    pub fn merge(
        &mut self,
        graph: &TermGraph,
        a: TermId,
        b: TermId,
    ) -> Result<TermId, MergeSortError> {
        if graph.sort(a) != graph.sort(b) {
            return Err(MergeSortError {
                a,
                b,
                sort_a: graph.sort(a),
                sort_b: graph.sort(b),
            });
        }
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(ra);
        }
        let (keep, drop) = if graph.representative_key(ra) <= graph.representative_key(rb) {
            (ra, rb)
        } else {
            (rb, ra)
        };
        match self.parent.entry(drop) {
            Entry::Vacant(v) => {
                v.insert(keep);
            }
            Entry::Occupied(_) => unreachable!("representatives have no parent"),
        }
        Ok(keep)
    }

    /// `(term, parent)` edges sorted by term id.
    pub fn entries(&self) -> Vec<(TermId, TermId)> {
        let mut v: Vec<_> = self.parent.iter().map(|(&a, &b)| (a, b)).collect();
        v.sort();
        v
    }
}
