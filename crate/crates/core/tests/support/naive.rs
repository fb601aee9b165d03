//! Naive reference semantics.
//!
//! Every operator is computed on unbounded integers and reduced modulo
//! `2^width` at the end. Signed operators convert to two's complement
//! integers explicitly. Nothing here calls into `wordsweep::bv`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::{BTreeMap, HashMap};
use wordsweep::array::ArrayTables;
use wordsweep::bv::BitVecValue;
use wordsweep::sim::{Pattern, Value};
use wordsweep::term::{Op, Sort, TermGraph, TermId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Bits {
    pub value: BigUint,
    pub width: u32,
}

fn modulus(width: u32) -> BigUint {
    BigUint::one() << width
}

impl Bits {
    pub fn new(value: impl Into<BigUint>, width: u32) -> Self {
        let value = value.into() % modulus(width);
        Self { value, width }
    }

    pub fn from_signed(value: &BigInt, width: u32) -> Self {
        let m = BigInt::from(modulus(width));
        let r = ((value % &m) + &m) % &m;
        Self {
            value: r.to_biguint().expect("non-negative"),
            width,
        }
    }

    pub fn bool(b: bool) -> Self {
        Self::new(u32::from(b), 1)
    }

    pub fn signed(&self) -> BigInt {
        let v = BigInt::from(self.value.clone());
        if self.value >= modulus(self.width) >> 1u32 {
            v - BigInt::from(modulus(self.width))
        } else {
            v
        }
    }

    pub fn is_true(&self) -> bool {
        !self.value.is_zero()
    }

    pub fn to_u64(&self) -> u64 {
        self.value.to_u64().expect("fits in u64")
    }

    pub fn from_crate(v: &BitVecValue) -> Self {
        let bits = v.to_bit_string();
        let value = BigUint::parse_bytes(bits.as_bytes(), 2).unwrap_or_default();
        Self {
            value,
            width: v.width(),
        }
    }

    pub fn to_crate(&self) -> BitVecValue {
        let mut s = self.value.to_str_radix(2);
        while (s.len() as u32) < self.width {
            s.insert(0, '0');
        }
        BitVecValue::from_bit_str(&s).expect("bit string")
    }
}

/// Array as a default value plus explicitly written cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveArray {
    pub index_width: u32,
    pub element_width: u32,
    pub default: BigUint,
    pub cells: BTreeMap<BigUint, BigUint>,
}

impl NaiveArray {
    pub fn read(&self, index: &Bits) -> Bits {
        let v = self.cells.get(&index.value).unwrap_or(&self.default);
        Bits::new(v.clone(), self.element_width)
    }

    pub fn write(&self, index: &Bits, value: &Bits) -> Self {
        let mut next = self.clone();
        next.cells.insert(index.value.clone(), value.value.clone());
        next
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NaiveValue {
    Bv(Bits),
    Array(NaiveArray),
}

impl NaiveValue {
    pub fn bits(&self) -> &Bits {
        match self {
            NaiveValue::Bv(b) => b,
            NaiveValue::Array(_) => panic!("expected a bit-vector"),
        }
    }
}

fn shift_amount(b: &Bits, width: u32) -> Option<u32> {
    b.value.to_u32().filter(|&s| s < width)
}

/// Bit-vector semantics of `op`; `None` for leaves and array operators.
pub fn apply_bits(op: &Op, args: &[&Bits]) -> Option<Bits> {
    let w = args.first().map(|a| a.width).unwrap_or(0);
    let m = || modulus(w);
    let a = || args[0];
    let b = || args[1];
    Some(match op {
        Op::Const(_) | Op::Var(_) | Op::State(_) | Op::Read | Op::Write => return None,
        Op::Not => Bits::new(m() - 1u32 - &a().value, w),
        Op::Neg => Bits::new(m() - &a().value, w),
        Op::RedAnd => Bits::bool(a().value == m() - 1u32),
        Op::RedOr => Bits::bool(!a().value.is_zero()),
        Op::RedXor => Bits::bool(a().value.count_ones() % 2 == 1),
        Op::And => Bits::new(&a().value & &b().value, w),
        Op::Or => Bits::new(&a().value | &b().value, w),
        Op::Xor => Bits::new(&a().value ^ &b().value, w),
        Op::Add => Bits::new(&a().value + &b().value, w),
        Op::Sub => Bits::new(&a().value + m() - &b().value, w),
        Op::Mul => Bits::new(&a().value * &b().value, w),
        Op::Udiv => {
            if b().value.is_zero() {
                Bits::new(m() - 1u32, w)
            } else {
                Bits::new(&a().value / &b().value, w)
            }
        }
        Op::Urem => {
            if b().value.is_zero() {
                a().clone()
            } else {
                Bits::new(&a().value % &b().value, w)
            }
        }
        Op::Sdiv => {
            let (x, y) = (a().signed(), b().signed());
            if y.is_zero() {
                // bvsdiv by zero: -1 for non-negative dividends, 1 otherwise.
                if x.is_negative() {
                    Bits::new(1u32, w)
                } else {
                    Bits::new(m() - 1u32, w)
                }
            } else {
                Bits::from_signed(&truncating_div(&x, &y), w)
            }
        }
        Op::Srem => {
            let (x, y) = (a().signed(), b().signed());
            if y.is_zero() {
                a().clone()
            } else {
                Bits::from_signed(&(&x - &y * truncating_div(&x, &y)), w)
            }
        }
        Op::Smod => {
            let (x, y) = (a().signed(), b().signed());
            if y.is_zero() {
                a().clone()
            } else {
                Bits::from_signed(&(&x - &y * floor_div(&x, &y)), w)
            }
        }
        Op::Sll => match shift_amount(b(), w) {
            Some(s) => Bits::new(&a().value << s, w),
            None => Bits::new(0u32, w),
        },
        Op::Srl => match shift_amount(b(), w) {
            Some(s) => Bits::new(&a().value >> s, w),
            None => Bits::new(0u32, w),
        },
        Op::Sra => {
            let x = a().signed();
            let s = shift_amount(b(), w).unwrap_or(w);
            let pow = BigInt::from(BigUint::one() << s);
            Bits::from_signed(&floor_div(&x, &pow), w)
        }
        Op::Eq => Bits::bool(a().value == b().value),
        Op::Ult => Bits::bool(a().value < b().value),
        Op::Ule => Bits::bool(a().value <= b().value),
        Op::Slt => Bits::bool(a().signed() < b().signed()),
        Op::Sle => Bits::bool(a().signed() <= b().signed()),
        Op::Concat => Bits::new(
            (&a().value << b().width) + &b().value,
            a().width + b().width,
        ),
        Op::Slice { hi, lo } => Bits::new(&a().value >> *lo, hi - lo + 1),
        Op::Uext(n) => Bits::new(a().value.clone(), w + n),
        Op::Sext(n) => Bits::from_signed(&a().signed(), w + n),
        Op::Ite => {
            if a().is_true() {
                args[1].clone()
            } else {
                args[2].clone()
            }
        }
    })
}

fn truncating_div(x: &BigInt, y: &BigInt) -> BigInt {
    let q = BigInt::from_biguint(Sign::Plus, x.magnitude() / y.magnitude());
    if x.is_negative() != y.is_negative() {
        -q
    } else {
        q
    }
}

fn floor_div(x: &BigInt, y: &BigInt) -> BigInt {
    let q = truncating_div(x, y);
    if (x - &q * y).is_zero() || x.is_negative() == y.is_negative() {
        q
    } else {
        q - 1
    }
}

pub fn apply(op: &Op, args: &[&NaiveValue]) -> NaiveValue {
    match op {
        Op::Read => {
            let NaiveValue::Array(arr) = args[0] else {
                panic!("read of a bit-vector")
            };
            NaiveValue::Bv(arr.read(args[1].bits()))
        }
        Op::Write => {
            let NaiveValue::Array(arr) = args[0] else {
                panic!("write to a bit-vector")
            };
            NaiveValue::Array(arr.write(args[1].bits(), args[2].bits()))
        }
        Op::Ite if matches!(args[1], NaiveValue::Array(_)) => {
            if args[0].bits().is_true() {
                args[1].clone()
            } else {
                args[2].clone()
            }
        }
        _ => {
            let bits: Vec<&Bits> = args.iter().map(|a| a.bits()).collect();
            NaiveValue::Bv(apply_bits(op, &bits).expect("bit-vector operator"))
        }
    }
}

/// Naive array equal to `table` (undefined cells read as zero, matching the
/// defaults used when completing models).
pub fn table_array(tables: &ArrayTables, leaf: TermId) -> Option<NaiveArray> {
    let table = tables.get(&leaf)?;
    let default = table
        .default
        .as_ref()
        .map(|d| Bits::from_crate(d).value)
        .unwrap_or_default();
    let cells = table
        .entries
        .iter()
        .map(|(k, v)| (Bits::from_crate(k).value, Bits::from_crate(v).value))
        .collect();
    Some(NaiveArray {
        index_width: table.index_width,
        element_width: table.element_width,
        default,
        cells,
    })
}

/// Leaf values for a graph evaluation, taken from a simulation pattern.
/// Array leaves must be tabulated.
pub fn env_from_pattern(
    graph: &TermGraph,
    pattern: &Pattern,
    tables: &ArrayTables,
) -> HashMap<TermId, NaiveValue> {
    let mut env = HashMap::new();
    for (&leaf, value) in &pattern.assignment {
        let v = match value {
            Value::Bv(b) => NaiveValue::Bv(Bits::from_crate(b)),
            Value::Array(_) => match table_array(tables, leaf) {
                Some(a) => NaiveValue::Array(a),
                None => continue,
            },
        };
        env.insert(leaf, v);
    }
    for &leaf in tables.keys() {
        if let (Some(a), Sort::Array { .. }) = (table_array(tables, leaf), graph.sort(leaf)) {
            env.entry(leaf).or_insert(NaiveValue::Array(a));
        }
    }
    env
}

/// Evaluates `root` by walking the graph, with the naive operator semantics.
pub fn eval_graph(
    graph: &TermGraph,
    root: TermId,
    env: &HashMap<TermId, NaiveValue>,
) -> NaiveValue {
    let mut memo: HashMap<TermId, NaiveValue> = HashMap::new();
    let mut stack = vec![(root, false)];
    while let Some((t, ready)) = stack.pop() {
        if memo.contains_key(&t) {
            continue;
        }
        let op = graph.op(t);
        if let Op::Const(c) = op {
            memo.insert(t, NaiveValue::Bv(Bits::from_crate(c)));
            continue;
        }
        if op.is_leaf() {
            let v = env.get(&t).cloned().unwrap_or_else(|| match graph.sort(t) {
                Sort::BitVec(w) => NaiveValue::Bv(Bits::new(0u32, w)),
                Sort::Array { index, element } => NaiveValue::Array(NaiveArray {
                    index_width: index,
                    element_width: element,
                    default: BigUint::zero(),
                    cells: BTreeMap::new(),
                }),
            });
            memo.insert(t, v);
            continue;
        }
        if ready {
            let args: Vec<&NaiveValue> = graph.operands(t).iter().map(|o| &memo[o]).collect();
            let v = apply(op, &args);
            memo.insert(t, v);
        } else {
            stack.push((t, true));
            for &o in graph.operands(t) {
                stack.push((o, false));
            }
        }
    }
    memo.remove(&root).expect("evaluated root")
}

/// True when `constraint ∧ goal` evaluates to 1 under `pattern`.
pub fn pattern_satisfies(
    graph: &TermGraph,
    tables: &ArrayTables,
    constraint: TermId,
    goal: TermId,
    pattern: &Pattern,
) -> bool {
    let env = env_from_pattern(graph, pattern, tables);
    eval_graph(graph, constraint, &env).bits().is_true()
        && eval_graph(graph, goal, &env).bits().is_true()
}
