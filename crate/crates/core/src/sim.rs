//! Multi-pattern word-level simulation.
//!
//! A [`Plan`] linearizes the DAG below a set of roots so it can be evaluated
//! many times cheaply. [`SimMatrix`] holds one value per term per pattern and a
//! signature per term; terms with identical value rows always have identical
//! signatures.

use crate::array::{ArrayTables, ConstArrayTable};
use crate::bv::{BitVecValue, Width};
use crate::term::{Op, Sort, TermGraph, TermId};
use num_bigint::BigUint;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use smallvec::SmallVec;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("pattern does not assign leaf {0}")]
    UnassignedLeaf(TermId),
    #[error("pattern assigns a value of the wrong sort to leaf {0}")]
    LeafSort(TermId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{name}` is pinned to both {first} and {second}")]
pub struct ConflictingConstraint {
    pub name: String,
    pub first: BitVecValue,
    pub second: BitVecValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArrayBase {
    /// Contents come from a constant table; undefined cells use the fill.
    Table(Arc<ConstArrayTable>),
    /// Unconstrained contents, identified by this number.
    Fresh(u64),
    /// Every cell holds this value.
    Constant(BitVecValue),
}

/// Array value: a base plus the cells written on top of it.
///
/// Reads of cells that neither the overlay nor the base define return a
/// pseudo-random function of `(salt, base id, index)`, so repeated reads of
/// the same cell agree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayValue {
    pub index_width: Width,
    pub element_width: Width,
    pub base: ArrayBase,
    pub salt: u64,
    pub overlay: Arc<BTreeMap<BitVecValue, BitVecValue>>,
}

impl ArrayValue {
    pub fn from_table(table: Arc<ConstArrayTable>, salt: u64) -> Self {
        Self {
            index_width: table.index_width,
            element_width: table.element_width,
            base: ArrayBase::Table(table),
            salt,
            overlay: Arc::default(),
        }
    }

    pub fn fresh(sort: Sort, id: u64, salt: u64) -> Self {
        let Sort::Array { index, element } = sort else {
            panic!("not an array sort: {sort}")
        };
        Self {
            index_width: index,
            element_width: element,
            base: ArrayBase::Fresh(id),
            salt,
            overlay: Arc::default(),
        }
    }

    pub fn constant(sort: Sort, value: BitVecValue) -> Self {
        let Sort::Array { index, element } = sort else {
            panic!("not an array sort: {sort}")
        };
        Self {
            index_width: index,
            element_width: element,
            base: ArrayBase::Constant(value),
            salt: 0,
            overlay: Arc::default(),
        }
    }

    pub fn read(&self, index: &BitVecValue) -> BitVecValue {
        if let Some(v) = self.overlay.get(index) {
            return v.clone();
        }
        match &self.base {
            ArrayBase::Table(table) => match table.get(index) {
                Some(v) => v.clone(),
                None => fill(
                    self.salt,
                    table.array.index() as u64,
                    index,
                    self.element_width,
                ),
            },
            ArrayBase::Fresh(id) => fill(self.salt, *id, index, self.element_width),
            ArrayBase::Constant(v) => v.clone(),
        }
    }

    pub fn write(&self, index: &BitVecValue, value: &BitVecValue) -> Self {
        let mut overlay = (*self.overlay).clone();
        overlay.insert(index.clone(), value.clone());
        Self {
            overlay: Arc::new(overlay),
            ..self.clone()
        }
    }

    /// True when every read is answered by the overlay or a complete table.
    pub fn is_fully_defined(&self) -> bool {
        match &self.base {
            ArrayBase::Table(t) => t.complete,
            ArrayBase::Constant(_) => true,
            ArrayBase::Fresh(_) => {
                self.index_width < 64 && self.overlay.len() as u64 == 1u64 << self.index_width
            }
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fill(salt: u64, id: u64, index: &BitVecValue, width: Width) -> BitVecValue {
    let mut h = Fnv::new();
    h.write_u64(salt);
    h.write_u64(id);
    h.write(&index.to_le_bytes());
    let mut state = h.finish();
    if width <= 64 {
        return BitVecValue::from_u64(splitmix(state), width);
    }
    let mut digits = Vec::new();
    for _ in 0..width.div_ceil(64) {
        state = splitmix(state);
        digits.push(state);
    }
    BitVecValue::from_biguint(&BigUint::from_slice(&to_u32_digits(&digits)), width)
}

fn to_u32_digits(words: &[u64]) -> Vec<u32> {
    words
        .iter()
        .flat_map(|w| [*w as u32, (*w >> 32) as u32])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Bv(BitVecValue),
    Array(ArrayValue),
}

impl Value {
    pub fn as_bv(&self) -> Option<&BitVecValue> {
        match self {
            Value::Bv(v) => Some(v),
            Value::Array(_) => None,
        }
    }

    pub fn as_array(&self) -> Option<&ArrayValue> {
        match self {
            Value::Array(a) => Some(a),
            Value::Bv(_) => None,
        }
    }

    pub fn sort(&self) -> Sort {
        match self {
            Value::Bv(v) => Sort::BitVec(v.width()),
            Value::Array(a) => Sort::Array {
                index: a.index_width,
                element: a.element_width,
            },
        }
    }

    fn hash_into(&self, h: &mut Fnv) {
        match self {
            Value::Bv(v) => {
                h.write_u64(v.width() as u64);
                h.write(&v.to_le_bytes());
            }
            Value::Array(a) => {
                h.write_u64(u64::MAX);
                match &a.base {
                    ArrayBase::Table(t) => {
                        h.write_u64(1);
                        h.write_u64(t.array.index() as u64);
                        h.write_u64(a.salt);
                    }
                    ArrayBase::Fresh(id) => {
                        h.write_u64(2);
                        h.write_u64(*id);
                        h.write_u64(a.salt);
                    }
                    ArrayBase::Constant(v) => {
                        h.write_u64(3);
                        h.write(&v.to_le_bytes());
                    }
                }
                for (k, v) in a.overlay.iter() {
                    h.write(&k.to_le_bytes());
                    h.write(&v.to_le_bytes());
                }
            }
        }
    }
}

impl From<BitVecValue> for Value {
    fn from(v: BitVecValue) -> Self {
        Value::Bv(v)
    }
}

/// 64-bit FNV-1a, stable across platforms and releases.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Semantics of `op` on concrete values.
pub fn apply(op: &Op, args: &[&Value]) -> Value {
    match op {
        Op::Read => {
            let a = args[0].as_array().expect("read from a non-array");
            Value::Bv(a.read(args[1].as_bv().expect("array index")))
        }
        Op::Write => {
            let a = args[0].as_array().expect("write to a non-array");
            let (i, v) = (
                args[1].as_bv().expect("array index"),
                args[2].as_bv().expect("element"),
            );
            Value::Array(a.write(i, v))
        }
        Op::Ite if args[1].as_array().is_some() => {
            let c = args[0].as_bv().expect("condition");
            if c.is_true() {
                args[1].clone()
            } else {
                args[2].clone()
            }
        }
        op => {
            let bvs: SmallVec<[&BitVecValue; 3]> = args
                .iter()
                .map(|a| a.as_bv().expect("bit-vector operand"))
                .collect();
            Value::Bv(op.apply_bv(&bvs).expect("non-leaf operator"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternOrigin {
    Random,
    Constraint,
    Counterexample,
}

/// One simulation input: a value for every leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub assignment: BTreeMap<TermId, Value>,
    pub seed: u64,
    pub origin: PatternOrigin,
}

impl Pattern {
    pub fn new(origin: PatternOrigin, seed: u64) -> Self {
        Self {
            assignment: BTreeMap::new(),
            seed,
            origin,
        }
    }

    pub fn get(&self, leaf: TermId) -> Option<&Value> {
        self.assignment.get(&leaf)
    }

    pub fn set(&mut self, leaf: TermId, value: Value) {
        self.assignment.insert(leaf, value);
    }

    /// Assigns a default to every leaf in `leaves` that has no value yet:
    /// zero for bit-vectors, the table (or a fresh array) for arrays.
    pub fn complete_with_defaults(
        &mut self,
        graph: &TermGraph,
        leaves: &[TermId],
        tables: &ArrayTables,
    ) {
        for &leaf in leaves {
            if self.assignment.contains_key(&leaf) {
                continue;
            }
            let value = default_leaf_value(graph, leaf, tables, self.seed);
            self.assignment.insert(leaf, value);
        }
    }
}

fn default_leaf_value(graph: &TermGraph, leaf: TermId, tables: &ArrayTables, salt: u64) -> Value {
    match graph.sort(leaf) {
        Sort::BitVec(w) => Value::Bv(BitVecValue::zero(w)),
        sort => array_leaf_value(leaf, sort, tables, salt),
    }
}

fn array_leaf_value(leaf: TermId, sort: Sort, tables: &ArrayTables, salt: u64) -> Value {
    match tables.get(&leaf) {
        Some(t) => Value::Array(ArrayValue::from_table(t.clone(), salt)),
        None => Value::Array(ArrayValue::fresh(sort, leaf.index() as u64, salt)),
    }
}

enum Step {
    Leaf(TermId),
    Const(BitVecValue),
    Apply { op: Op, args: SmallVec<[u32; 3]> },
}

/// Linearized evaluation order for the DAG below a set of roots.
pub struct Plan {
    order: Vec<TermId>,
    slots: HashMap<TermId, usize>,
    steps: Vec<Step>,
}

impl Plan {
    pub fn new(graph: &TermGraph, roots: &[TermId]) -> Self {
        let order = graph.post_order(roots);
        let slots: HashMap<TermId, usize> =
            order.iter().enumerate().map(|(i, &t)| (t, i)).collect();
        let steps = order
            .iter()
            .map(|&t| match graph.op(t) {
                Op::Const(v) => Step::Const(v.clone()),
                Op::Var(_) | Op::State(_) => Step::Leaf(t),
                op => Step::Apply {
                    op: op.clone(),
                    args: graph.operands(t).iter().map(|o| slots[o] as u32).collect(),
                },
            })
            .collect();
        Self {
            order,
            slots,
            steps,
        }
    }

    pub fn order(&self) -> &[TermId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn slot(&self, t: TermId) -> Option<usize> {
        self.slots.get(&t).copied()
    }

    pub fn leaves(&self) -> impl Iterator<Item = TermId> + '_ {
        self.steps.iter().filter_map(|s| match s {
            Step::Leaf(t) => Some(*t),
            _ => None,
        })
    }

    /// Evaluates every term of the plan; `leaf` supplies leaf values.
    pub fn run_with(
        &self,
        leaf: impl FnMut(TermId) -> Option<Value>,
    ) -> Result<Vec<Value>, SimError> {
        let mut values = Vec::with_capacity(self.steps.len());
        self.run_into(&mut values, leaf)?;
        Ok(values)
    }

    /// Like [`Plan::run_with`], reusing `values` as the output buffer. The
    /// value of the term at `order()[i]` ends up in `values[i]`.
    pub fn run_into(
        &self,
        values: &mut Vec<Value>,
        mut leaf: impl FnMut(TermId) -> Option<Value>,
    ) -> Result<(), SimError> {
        values.clear();
        for step in &self.steps {
            let v = match step {
                Step::Leaf(t) => leaf(*t).ok_or(SimError::UnassignedLeaf(*t))?,
                Step::Const(c) => Value::Bv(c.clone()),
                Step::Apply { op, args } => {
                    let operands: SmallVec<[&Value; 3]> =
                        args.iter().map(|&i| &values[i as usize]).collect();
                    apply(op, &operands)
                }
            };
            values.push(v);
        }
        Ok(())
    }

    pub fn run(&self, graph: &TermGraph, pattern: &Pattern) -> Result<Vec<Value>, SimError> {
        self.run_with(|t| {
            let v = pattern.get(t)?.clone();
            Some(v)
        })
        .and_then(|values| {
            for (i, step) in self.steps.iter().enumerate() {
                if let Step::Leaf(t) = step {
                    if values[i].sort() != graph.sort(*t) {
                        return Err(SimError::LeafSort(*t));
                    }
                }
            }
            Ok(values)
        })
    }
}

/// Value of `t` under `pattern`.
pub fn eval(graph: &TermGraph, t: TermId, pattern: &Pattern) -> Result<Value, SimError> {
    let plan = Plan::new(graph, &[t]);
    let mut values = plan.run(graph, pattern)?;
    Ok(values.pop().expect("plan contains its root"))
}

/// Top-level `and` conjuncts of a bv1 term.
pub fn conjuncts(graph: &TermGraph, t: TermId) -> Vec<TermId> {
    let mut out = Vec::new();
    let mut stack = vec![t];
    let mut seen = std::collections::HashSet::new();
    while let Some(c) = stack.pop() {
        if !seen.insert(c) {
            continue;
        }
        if *graph.op(c) == Op::And && graph.sort(c) == Sort::BOOL {
            let ops = graph.operands(c);
            stack.push(ops[1]);
            stack.push(ops[0]);
        } else {
            out.push(c);
        }
    }
    out
}

/// True when `c` is a conjunct of a shape [`ConstraintFacts`] records.
pub fn is_fact(graph: &TermGraph, c: TermId) -> bool {
    let is_var = |t: TermId| matches!(graph.op(t), Op::Var(_)) && !graph.sort(t).is_array();
    match graph.op(c) {
        Op::Eq => {
            let (a, b) = (graph.operands(c)[0], graph.operands(c)[1]);
            (is_var(a) && (is_var(b) || graph.const_value(b).is_some()))
                || (is_var(b) && graph.const_value(a).is_some())
        }
        Op::Var(_) => graph.sort(c) == Sort::BOOL,
        Op::Not => {
            let a = graph.operands(c)[0];
            is_var(a) && graph.sort(a) == Sort::BOOL
        }
        _ => false,
    }
}

/// Syntactic facts mined from the top-level conjuncts of a constraint:
/// `v1 = v2` puts two variables in one class, `v = c` pins a class to a
/// constant. A bare bv1 variable `v` counts as `v = 1` and `not v` as
/// `v = 0`.
#[derive(Debug, Clone, Default)]
pub struct ConstraintFacts {
    parent: BTreeMap<TermId, TermId>,
    pins: BTreeMap<TermId, BitVecValue>,
}

impl ConstraintFacts {
    pub fn analyze(graph: &TermGraph, constraint: TermId) -> Result<Self, ConflictingConstraint> {
        let mut facts = Self::default();
        let is_var = |t: TermId| matches!(graph.op(t), Op::Var(_)) && !graph.sort(t).is_array();
        let mut pins: Vec<(TermId, BitVecValue)> = Vec::new();
        for c in conjuncts(graph, constraint) {
            match graph.op(c) {
                Op::Eq => {
                    let (a, b) = (graph.operands(c)[0], graph.operands(c)[1]);
                    match (is_var(a), is_var(b)) {
                        (true, true) => facts.union(a, b),
                        (true, false) => {
                            if let Some(v) = graph.const_value(b) {
                                pins.push((a, v.clone()));
                            }
                        }
                        (false, true) => {
                            if let Some(v) = graph.const_value(a) {
                                pins.push((b, v.clone()));
                            }
                        }
                        _ => {}
                    }
                }
                Op::Var(_) if graph.sort(c) == Sort::BOOL => {
                    pins.push((c, BitVecValue::from_bool(true)))
                }
                Op::Not => {
                    let a = graph.operands(c)[0];
                    if is_var(a) && graph.sort(a) == Sort::BOOL {
                        pins.push((a, BitVecValue::from_bool(false)));
                    }
                }
                _ => {}
            }
        }
        for (var, value) in pins {
            let rep = facts.representative(var);
            match facts.pins.get(&rep) {
                Some(existing) if *existing != value => {
                    return Err(ConflictingConstraint {
                        name: graph.symbol_name(var).unwrap_or("?").to_string(),
                        first: existing.clone(),
                        second: value,
                    })
                }
                _ => {
                    facts.pins.insert(rep, value);
                }
            }
        }
        Ok(facts)
    }

    fn union(&mut self, a: TermId, b: TermId) {
        let (ra, rb) = (self.representative(a), self.representative(b));
        if ra != rb {
            let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent.insert(drop, keep);
        }
    }

    /// Smallest term id of the class containing `v`.
    pub fn representative(&self, mut v: TermId) -> TermId {
        while let Some(&p) = self.parent.get(&v) {
            v = p;
        }
        v
    }

    pub fn pinned(&self, v: TermId) -> Option<&BitVecValue> {
        self.pins.get(&self.representative(v))
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty() && self.pins.is_empty()
    }
}

pub fn random_value<R: Rng + ?Sized>(rng: &mut R, width: Width) -> BitVecValue {
    if width <= 64 {
        return BitVecValue::from_u64(rng.next_u64(), width);
    }
    let words: Vec<u64> = (0..width.div_ceil(64)).map(|_| rng.next_u64()).collect();
    BitVecValue::from_biguint(&BigUint::from_slice(&to_u32_digits(&words)), width)
}

/// Generates `n` patterns over `leaves`, honoring the equality and constant
/// facts of `constraint`. Within a class the representative draws a random
/// value and the others copy it; pinned classes take the constant. Array
/// leaves take their table when one exists.
///
/// A pattern is tagged [`PatternOrigin::Constraint`] when it satisfies the
/// whole constraint, and [`PatternOrigin::Random`] otherwise.
pub fn gen_patterns(
    graph: &TermGraph,
    leaves: &[TermId],
    constraint: TermId,
    n: usize,
    seed: u64,
    tables: &ArrayTables,
) -> Result<Vec<Pattern>, ConflictingConstraint> {
    assert!(n >= 1, "at least one pattern is required");
    let facts = ConstraintFacts::analyze(graph, constraint)?;
    let trivial = graph.const_value(constraint).is_some_and(|v| v.is_true());
    let plan = Plan::new(graph, &[constraint]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patterns = Vec::with_capacity(n);
    for _ in 0..n {
        let pattern_seed = rng.next_u64();
        let mut pattern = Pattern::new(PatternOrigin::Random, pattern_seed);
        let mut class_values: BTreeMap<TermId, BitVecValue> = BTreeMap::new();
        for &leaf in leaves {
            let value = match graph.sort(leaf) {
                Sort::BitVec(w) => {
                    let v = match facts.pinned(leaf) {
                        Some(c) => c.clone(),
                        None => class_values
                            .entry(facts.representative(leaf))
                            .or_insert_with(|| random_value(&mut rng, w))
                            .clone(),
                    };
                    Value::Bv(v)
                }
                sort => array_leaf_value(leaf, sort, tables, pattern_seed),
            };
            pattern.set(leaf, value);
        }
        let holds = trivial
            || plan
                .run_with(|t| {
                    Some(
                        pattern
                            .get(t)
                            .cloned()
                            .unwrap_or_else(|| default_leaf_value(graph, t, tables, pattern_seed)),
                    )
                })
                .ok()
                .and_then(|v| v.last().and_then(|x| x.as_bv()).map(|b| b.is_true()))
                .unwrap_or(false);
        if holds {
            pattern.origin = PatternOrigin::Constraint;
        }
        patterns.push(pattern);
    }
    Ok(patterns)
}

/// Simulation values of every term below a set of roots, one column per
/// pattern.
pub struct SimMatrix {
    plan: Plan,
    rows: Vec<Vec<Value>>,
    signatures: Vec<u64>,
    patterns: Vec<Pattern>,
}

fn signature(sort: Sort, row: &[Value]) -> u64 {
    let mut h = Fnv::new();
    match sort {
        Sort::BitVec(w) => h.write_u64(w as u64),
        Sort::Array { index, element } => {
            h.write_u64(((index as u64) << 32) | element as u64);
            h.write_u64(u64::MAX);
        }
    }
    for v in row {
        v.hash_into(&mut h);
    }
    h.finish()
}

impl SimMatrix {
    pub fn simulate_all(
        graph: &TermGraph,
        roots: &[TermId],
        patterns: Vec<Pattern>,
    ) -> Result<Self, SimError> {
        assert!(
            !patterns.is_empty(),
            "simulation needs at least one pattern"
        );
        let plan = Plan::new(graph, roots);
        let columns: Vec<Vec<Value>> = patterns
            .par_iter()
            .map(|p| plan.run(graph, p))
            .collect::<Result<_, _>>()?;
        let mut rows: Vec<Vec<Value>> = (0..plan.len())
            .map(|_| Vec::with_capacity(patterns.len()))
            .collect();
        for column in columns {
            for (row, v) in rows.iter_mut().zip(column) {
                row.push(v);
            }
        }
        let signatures = plan
            .order()
            .iter()
            .zip(&rows)
            .map(|(&t, row)| signature(graph.sort(t), row))
            .collect();
        Ok(Self {
            plan,
            rows,
            signatures,
            patterns,
        })
    }

    pub fn pattern_count(&self) -> usize {
        self.patterns.len()
    }

    pub fn patterns(&self) -> &[Pattern] {
        &self.patterns
    }

    pub fn terms(&self) -> &[TermId] {
        self.plan.order()
    }

    pub fn leaves(&self) -> Vec<TermId> {
        self.plan.leaves().collect()
    }

    pub fn values(&self, t: TermId) -> Option<&[Value]> {
        self.plan.slot(t).map(|s| self.rows[s].as_slice())
    }

    pub fn signature(&self, t: TermId) -> Option<u64> {
        self.plan.slot(t).map(|s| self.signatures[s])
    }

    /// Value row of `t` if it is the same in every pattern.
    pub fn constant_value(&self, t: TermId) -> Option<&Value> {
        let row = self.values(t)?;
        let first = row.first()?;
        row.iter().all(|v| v == first).then_some(first)
    }

    /// Appends one column computed from `pattern` and refreshes every
    /// signature.
    pub fn extend_with_model(
        &mut self,
        graph: &TermGraph,
        pattern: Pattern,
    ) -> Result<(), SimError> {
        let column = self.plan.run(graph, &pattern)?;
        for (row, v) in self.rows.iter_mut().zip(column) {
            row.push(v);
        }
        for (i, &t) in self.plan.order().iter().enumerate() {
            self.signatures[i] = signature(graph.sort(t), &self.rows[i]);
        }
        self.patterns.push(pattern);
        Ok(())
    }
}
