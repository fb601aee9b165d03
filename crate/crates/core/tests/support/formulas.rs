//! Random formula pairs for end-to-end soundness checks.
//!
//! A pair is a formula and either an equivalence-preserving rewrite of it or
//! a mutated copy. Formulas are kept as plain trees so that their reference
//! value is computed without the term graph.

use super::circuits::Btor;
use super::naive::{apply_bits, Bits};
use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordsweep::bv::BitVecValue;
use wordsweep::term::{Op, Sort, TermGraph, TermId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Var(usize),
    Const(u64, u32),
    App(Op, Vec<Expr>),
}

use Expr::{App, Const, Var};

#[derive(Debug, Clone)]
pub struct Vars {
    pub names: Vec<String>,
    pub widths: Vec<u32>,
}

impl Vars {
    pub fn total_width(&self) -> u32 {
        self.widths.iter().sum()
    }
}

impl Expr {
    pub fn width(&self, vars: &Vars) -> u32 {
        match self {
            Var(i) => vars.widths[*i],
            Const(_, w) => *w,
            App(op, args) => match op {
                Op::Eq
                | Op::Ult
                | Op::Ule
                | Op::Slt
                | Op::Sle
                | Op::RedAnd
                | Op::RedOr
                | Op::RedXor => 1,
                Op::Concat => args[0].width(vars) + args[1].width(vars),
                Op::Slice { hi, lo } => hi - lo + 1,
                Op::Uext(n) | Op::Sext(n) => args[0].width(vars) + n,
                Op::Ite => args[1].width(vars),
                _ => args[0].width(vars),
            },
        }
    }

    pub fn size(&self) -> usize {
        match self {
            App(_, args) => 1 + args.iter().map(Expr::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn eval(&self, vars: &Vars, values: &[u64]) -> Bits {
        match self {
            Var(i) => Bits::new(values[*i], vars.widths[*i]),
            Const(v, w) => Bits::new(*v, *w),
            App(op, args) => {
                let vals: Vec<Bits> = args.iter().map(|a| a.eval(vars, values)).collect();
                let refs: Vec<&Bits> = vals.iter().collect();
                apply_bits(op, &refs).expect("bit-vector operator")
            }
        }
    }

    pub fn build(&self, graph: &mut TermGraph, leaves: &[TermId]) -> TermId {
        match self {
            Var(i) => leaves[*i],
            Const(v, w) => graph.mk_const(BitVecValue::from_u64(*v, *w)),
            App(op, args) => {
                let ops: Vec<TermId> = args.iter().map(|a| a.build(graph, leaves)).collect();
                graph.mk(op.clone(), &ops).expect("well-sorted expression")
            }
        }
    }
}

impl Expr {
    /// Writes the tree as BTOR2 nodes; `leaves[i]` is the node of `Var(i)`.
    pub fn to_btor(&self, b: &mut Btor, vars: &Vars, leaves: &[u32]) -> u32 {
        let w = self.width(vars);
        match self {
            Var(i) => leaves[*i],
            Const(v, w) => b.constd(*w, *v),
            App(op, args) => {
                let ids: Vec<u32> = args.iter().map(|a| a.to_btor(b, vars, leaves)).collect();
                match op {
                    Op::Slice { hi, lo } => b.slice(ids[0], *hi, *lo),
                    Op::Uext(n) => b.uext(w, ids[0], *n),
                    Op::Sext(n) => b.sext(w, ids[0], *n),
                    _ => b.op(w, op.name(), &ids),
                }
            }
        }
    }
}

fn app(op: Op, args: Vec<Expr>) -> Expr {
    App(op, args)
}

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

pub struct Generator<'a> {
    pub rng: ChaCha8Rng,
    pub vars: &'a Vars,
    pub max_width: u32,
}

const BINARY: &[Op] = &[
    Op::And,
    Op::Or,
    Op::Xor,
    Op::Add,
    Op::Sub,
    Op::Mul,
    Op::Udiv,
    Op::Urem,
    Op::Sdiv,
    Op::Srem,
    Op::Smod,
    Op::Sll,
    Op::Srl,
    Op::Sra,
];

const COMPARE: &[Op] = &[Op::Eq, Op::Ult, Op::Ule, Op::Slt, Op::Sle];

impl<'a> Generator<'a> {
    pub fn new(seed: u64, vars: &'a Vars) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            vars,
            max_width: 12,
        }
    }

    fn constant(&mut self, w: u32) -> Expr {
        let v = match self.rng.gen_range(0..4) {
            0 => 0,
            1 => 1,
            2 => mask(w),
            _ => self.rng.gen::<u64>() & mask(w),
        };
        Const(v, w)
    }

    pub fn leaf(&mut self, w: u32) -> Expr {
        if self.rng.gen_bool(0.15) {
            return self.constant(w);
        }
        let i = self.rng.gen_range(0..self.vars.widths.len());
        let vw = self.vars.widths[i];
        if vw == w {
            Var(i)
        } else if vw > w {
            let lo = self.rng.gen_range(0..=vw - w);
            app(Op::Slice { hi: lo + w - 1, lo }, vec![Var(i)])
        } else if self.rng.gen_bool(0.5) {
            app(Op::Uext(w - vw), vec![Var(i)])
        } else {
            app(Op::Sext(w - vw), vec![Var(i)])
        }
    }

    pub fn expr(&mut self, w: u32, depth: u32) -> Expr {
        if depth == 0 || self.rng.gen_bool(0.2) {
            return self.leaf(w);
        }
        let d = depth - 1;
        if w == 1 && self.rng.gen_bool(0.5) {
            return match self.rng.gen_range(0..3) {
                0 => {
                    let op = COMPARE.choose(&mut self.rng).unwrap().clone();
                    let ow = self.rng.gen_range(1..=self.max_width.min(6));
                    app(op, vec![self.expr(ow, d), self.expr(ow, d)])
                }
                1 => {
                    let op = [Op::RedAnd, Op::RedOr, Op::RedXor]
                        .choose(&mut self.rng)
                        .unwrap()
                        .clone();
                    let ow = self.rng.gen_range(1..=self.max_width.min(6));
                    app(op, vec![self.expr(ow, d)])
                }
                _ => app(Op::Not, vec![self.expr(1, d)]),
            };
        }
        match self.rng.gen_range(0..10) {
            0 => {
                let op = [Op::Not, Op::Neg].choose(&mut self.rng).unwrap().clone();
                app(op, vec![self.expr(w, d)])
            }
            1..=4 => {
                let op = BINARY.choose(&mut self.rng).unwrap().clone();
                app(op, vec![self.expr(w, d), self.expr(w, d)])
            }
            5 if w >= 2 => {
                let hi = self.rng.gen_range(1..w);
                app(Op::Concat, vec![self.expr(hi, d), self.expr(w - hi, d)])
            }
            6 if w < self.max_width => {
                let extra = self.rng.gen_range(1..=(self.max_width - w).min(3));
                let lo = self.rng.gen_range(0..=extra);
                app(
                    Op::Slice { hi: lo + w - 1, lo },
                    vec![self.expr(w + extra, d)],
                )
            }
            7 if w >= 2 => {
                let n = self.rng.gen_range(1..w.min(4));
                let op = if self.rng.gen_bool(0.5) {
                    Op::Uext(n)
                } else {
                    Op::Sext(n)
                };
                app(op, vec![self.expr(w - n, d)])
            }
            _ => app(
                Op::Ite,
                vec![self.expr(1, d), self.expr(w, d), self.expr(w, d)],
            ),
        }
    }

    /// An equivalent formula, obtained by applying semantics-preserving
    /// rewrites at random positions.
    pub fn rewrite(&mut self, e: &Expr) -> Expr {
        let App(op, args) = e else {
            return e.clone();
        };
        let args: Vec<Expr> = args
            .iter()
            .map(|a| {
                if self.rng.gen_bool(0.7) {
                    self.rewrite(a)
                } else {
                    a.clone()
                }
            })
            .collect();
        if !self.rng.gen_bool(0.6) {
            return app(op.clone(), args);
        }
        let w = e.width(self.vars);
        match (op, args.as_slice()) {
            (Op::Add | Op::Mul | Op::And | Op::Or | Op::Xor | Op::Eq, [a, b]) => {
                app(op.clone(), vec![b.clone(), a.clone()])
            }
            (Op::Sub, [a, b]) => app(Op::Add, vec![a.clone(), app(Op::Neg, vec![b.clone()])]),
            (Op::Neg, [a]) => app(Op::Add, vec![app(Op::Not, vec![a.clone()]), Const(1, w)]),
            (Op::Not, [App(Op::And, inner)]) => app(
                Op::Or,
                vec![
                    app(Op::Not, vec![inner[0].clone()]),
                    app(Op::Not, vec![inner[1].clone()]),
                ],
            ),
            (Op::Not, [App(Op::Not, inner)]) => inner[0].clone(),
            (Op::Ult, [a, b]) => app(Op::Not, vec![app(Op::Ule, vec![b.clone(), a.clone()])]),
            (Op::Ule, [a, b]) => app(Op::Not, vec![app(Op::Ult, vec![b.clone(), a.clone()])]),
            (Op::Slt, [a, b]) => {
                let ow = a.width(self.vars);
                let msb = Const(1u64 << (ow - 1), ow);
                app(
                    Op::Ult,
                    vec![
                        app(Op::Xor, vec![a.clone(), msb.clone()]),
                        app(Op::Xor, vec![b.clone(), msb]),
                    ],
                )
            }
            (Op::Ite, [c, a, b]) => app(
                Op::Ite,
                vec![app(Op::Not, vec![c.clone()]), b.clone(), a.clone()],
            ),
            (Op::Concat, [a, b]) => {
                // concat(a, b) = (uext(a) << |b|) | uext(b)
                let (wa, wb) = (a.width(self.vars), b.width(self.vars));
                let hi = app(
                    Op::Sll,
                    vec![app(Op::Uext(wb), vec![a.clone()]), Const(u64::from(wb), w)],
                );
                app(Op::Or, vec![hi, app(Op::Uext(wa), vec![b.clone()])])
            }
            (Op::Sll, [a, Const(s, _)]) if *s < u64::from(w) && w <= 32 => {
                app(Op::Mul, vec![a.clone(), Const(1u64 << s, w)])
            }
            _ if w > 1 && self.rng.gen_bool(0.3) => {
                app(Op::Add, vec![app(op.clone(), args), Const(0, w)])
            }
            _ => app(op.clone(), args),
        }
    }

    /// A copy of `e` with one node or leaf changed. The result may or may
    /// not be equivalent to `e`.
    pub fn mutate(&mut self, e: &Expr) -> Expr {
        let target = self.rng.gen_range(0..e.size());
        let mut counter = 0;
        self.mutate_at(e, target, &mut counter)
    }

    fn mutate_at(&mut self, e: &Expr, target: usize, counter: &mut usize) -> Expr {
        let here = *counter;
        *counter += 1;
        if here == target {
            let w = e.width(self.vars);
            return match e {
                App(op, args) => {
                    let swapped = match op {
                        Op::Add => Some(Op::Sub),
                        Op::Sub => Some(Op::Xor),
                        Op::Xor => Some(Op::Or),
                        Op::Or => Some(Op::And),
                        Op::And => Some(Op::Add),
                        Op::Ult => Some(Op::Ule),
                        Op::Ule => Some(Op::Slt),
                        Op::Slt => Some(Op::Sle),
                        Op::Sle => Some(Op::Ult),
                        Op::Udiv => Some(Op::Sdiv),
                        Op::Urem => Some(Op::Srem),
                        Op::Srem => Some(Op::Smod),
                        Op::Srl => Some(Op::Sra),
                        Op::Sll => Some(Op::Srl),
                        _ => None,
                    };
                    match swapped {
                        Some(op) => app(op, args.clone()),
                        None if self.rng.gen_bool(0.5) => self.leaf(w),
                        None => app(Op::Not, vec![e.clone()]),
                    }
                }
                Const(v, w) => Const((v ^ (1u64 << self.rng.gen_range(0..*w))) & mask(*w), *w),
                Var(_) => self.leaf(w),
            };
        }
        match e {
            App(op, args) => app(
                op.clone(),
                args.iter()
                    .map(|a| self.mutate_at(a, target, counter))
                    .collect(),
            ),
            _ => e.clone(),
        }
    }
}

/// How the two formulas of a pair see the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inputs {
    /// Both formulas read the same leaves.
    Shared,
    /// The second formula reads copies, tied to the originals by equality
    /// constraints (the shape of an equivalence-checking miter).
    Matched,
}

#[derive(Debug, Clone)]
pub struct PairCase {
    pub seed: u64,
    pub vars: Vars,
    pub left: Expr,
    pub right: Expr,
    /// Extra width-1 assumption over the original inputs.
    pub assumption: Option<Expr>,
    /// Input index pinned to a constant by the constraint.
    pub pin: Option<(usize, u64)>,
    pub inputs: Inputs,
    pub rewritten: bool,
}

pub struct Built {
    pub constraint: TermId,
    pub check: TermId,
    pub leaves: Vec<TermId>,
    pub copies: Vec<TermId>,
}

impl PairCase {
    /// A random pair with total input width at most `max_input_bits`.
    pub fn random(seed: u64, max_input_bits: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = Vec::new();
        let n = rng.gen_range(1..=3);
        let mut left_bits = rng.gen_range(2..=max_input_bits);
        for i in 0..n {
            if left_bits == 0 {
                break;
            }
            let w = if i + 1 == n {
                left_bits
            } else {
                rng.gen_range(1..=left_bits)
            };
            let w = w.min(8);
            widths.push(w);
            left_bits -= w;
        }
        let names = (0..widths.len()).map(|i| format!("v{i}")).collect();
        let vars = Vars { names, widths };
        let width = rng.gen_range(1..=8);
        let depth = rng.gen_range(2..=4);
        let rewritten = rng.gen_bool(0.5);
        let inputs = if rng.gen_bool(0.3) {
            Inputs::Matched
        } else {
            Inputs::Shared
        };
        let with_assumption = rng.gen_bool(0.25);
        let pin = rng.gen_bool(0.2).then(|| {
            let i = rng.gen_range(0..vars.widths.len());
            (i, rng.gen::<u64>() & mask(vars.widths[i]))
        });
        let gen_seed = rng.gen();
        let mut g = Generator::new(gen_seed, &vars);
        let left = g.expr(width, depth);
        let right = if rewritten {
            g.rewrite(&left)
        } else {
            let m = g.mutate(&left);
            g.rewrite(&m)
        };
        let assumption = with_assumption.then(|| g.expr(1, 2));
        Self {
            seed,
            vars,
            left,
            right,
            assumption,
            pin,
            inputs,
            rewritten,
        }
    }

    pub fn build(&self, graph: &mut TermGraph) -> Built {
        let var = |g: &mut TermGraph, name: &str, w: u32| {
            g.mk_var(name, Sort::BitVec(w)).expect("fresh name")
        };
        let leaves: Vec<TermId> = self
            .vars
            .names
            .iter()
            .zip(&self.vars.widths)
            .map(|(n, &w)| var(graph, n, w))
            .collect();
        let mut conjuncts = Vec::new();
        let copies = match self.inputs {
            Inputs::Shared => leaves.clone(),
            Inputs::Matched => {
                let copies: Vec<TermId> = self
                    .vars
                    .names
                    .iter()
                    .zip(&self.vars.widths)
                    .map(|(n, &w)| var(graph, &format!("{n}'"), w))
                    .collect();
                for (&a, &b) in leaves.iter().zip(&copies) {
                    conjuncts.push(graph.mk_eq(a, b).unwrap());
                }
                copies
            }
        };
        if let Some((i, v)) = self.pin {
            let c = graph.mk_const(BitVecValue::from_u64(v, self.vars.widths[i]));
            conjuncts.push(graph.mk_eq(leaves[i], c).unwrap());
        }
        if let Some(a) = &self.assumption {
            conjuncts.push(a.build(graph, &leaves));
        }
        let constraint = graph.mk_and_all(conjuncts).unwrap();
        let l = self.left.build(graph, &leaves);
        let r = self.right.build(graph, &copies);
        let check = graph.mk_distinct(l, r).unwrap();
        Built {
            constraint,
            check,
            leaves,
            copies,
        }
    }

    /// Reference verdict by enumerating every input assignment: a
    /// distinguishing assignment if one exists.
    pub fn enumerate(&self) -> Option<Vec<u64>> {
        (0u64..(1u64 << self.vars.total_width()))
            .map(|p| self.unpack(p))
            .find(|v| self.holds(v))
    }

    /// True when some assignment satisfies the constraint.
    pub fn satisfiable(&self) -> bool {
        (0u64..(1u64 << self.vars.total_width())).any(|packed| self.admits(&self.unpack(packed)))
    }

    fn unpack(&self, packed: u64) -> Vec<u64> {
        let mut rest = packed;
        self.vars
            .widths
            .iter()
            .map(|&w| {
                let v = rest & mask(w);
                rest >>= w;
                v
            })
            .collect()
    }

    fn admits(&self, values: &[u64]) -> bool {
        if let Some((i, v)) = self.pin {
            if values[i] != v {
                return false;
            }
        }
        if let Some(a) = &self.assumption {
            if !a.eval(&self.vars, values).is_true() {
                return false;
            }
        }
        true
    }

    /// True when the assignment satisfies the constraint and separates the
    /// two formulas.
    pub fn holds(&self, values: &[u64]) -> bool {
        self.admits(values)
            && self.left.eval(&self.vars, values) != self.right.eval(&self.vars, values)
    }
}

pub fn to_u64(v: &BitVecValue) -> u64 {
    let b = Bits::from_crate(v);
    let max = BigUint::from(u64::MAX);
    assert!(b.value <= max);
    b.to_u64()
}
