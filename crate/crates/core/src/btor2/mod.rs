//! BTOR2 frontend.
//!
//! Supported opcodes: `sort` (`bitvec`, `array`), `input`, `state`, `init`,
//! `next`, `constraint`, `bad`, `output`, `const`, `constd`, `consth`,
//! `zero`, `one`, `ones`, `not`, `neg`, `inc`, `dec`, `and`, `or`, `xor`,
//! `nand`, `nor`, `xnor`, `implies`, `iff`, `eq`, `neq`, `ult`, `ulte`,
//! `ugt`, `ugte`, `slt`, `slte`, `sgt`, `sgte`, `add`, `sub`, `mul`, `udiv`,
//! `urem`, `sdiv`, `srem`, `smod`, `sll`, `srl`, `sra`, `concat`, `slice`,
//! `uext`, `sext`, `ite`, `redand`, `redor`, `redxor`, `read`, `write`.
//!
//! Anything else (`fair`, `justice`, `rol`, overflow predicates, ...) is
//! rejected. Derived operators are lowered to the core [`Op`] set while
//! parsing, and negative node references become explicit `not` terms.

mod emit;

pub use emit::{emit_problem, emit_system, Btor2Writer};

use crate::bv::{BitVecValue, LiteralError, Width};
use crate::term::{Op, Sort, SortError, SymbolError, TermGraph, TermId};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("line {0}: unknown opcode `{1}`")]
    UnknownOpcode(usize, String),
    #[error("line {0}: wrong number of arguments for `{1}`")]
    ArityMismatch(usize, String),
    #[error("line {0}: sort mismatch: {1}")]
    SortMismatch(usize, String),
    #[error("line {0}: reference to undefined id {1}")]
    UndefinedReference(usize, i64),
    #[error("line {0}: {1}")]
    Syntax(usize, String),
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::UnknownOpcode(l, _)
            | ParseError::ArityMismatch(l, _)
            | ParseError::SortMismatch(l, _)
            | ParseError::UndefinedReference(l, _)
            | ParseError::Syntax(l, _) => *l,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub name: String,
    pub term: TermId,
    pub sort: Sort,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateVar {
    pub name: String,
    pub term: TermId,
    pub sort: Sort,
    pub init: Option<TermId>,
    pub next: Option<TermId>,
}

/// A parsed BTOR2 model. Term ids refer to the [`TermGraph`] it was parsed
/// into; the system itself is immutable after parsing.
#[derive(Debug, Clone, Default)]
pub struct TransitionSystem {
    /// Symbol prefix applied to every input and state name.
    pub prefix: String,
    pub sorts: BTreeMap<i64, Sort>,
    pub inputs: Vec<Input>,
    pub states: Vec<StateVar>,
    pub constraints: Vec<TermId>,
    pub bads: Vec<TermId>,
    pub outputs: Vec<(String, TermId)>,
    pub node_table: BTreeMap<i64, TermId>,
}

impl TransitionSystem {
    pub fn state(&self, term: TermId) -> Option<&StateVar> {
        self.states.iter().find(|s| s.term == term)
    }

    /// Looks up an input by its unprefixed name.
    pub fn input(&self, name: &str) -> Option<&Input> {
        let full = format!("{}{}", self.prefix, name);
        self.inputs.iter().find(|i| i.name == full)
    }

    pub fn output(&self, name: &str) -> Option<TermId> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, t)| t)
    }

    pub fn is_combinational(&self) -> bool {
        self.states.is_empty()
    }
}

/// Parses `text` into `graph` without a name prefix.
pub fn parse_btor2(graph: &mut TermGraph, text: &str) -> Result<TransitionSystem, ParseError> {
    Parser::new(graph, "").parse(text)
}

/// Parses `text` into `graph`, prefixing every input and state symbol with
/// `prefix` (for example `a::`).
pub fn parse_btor2_with_prefix(
    graph: &mut TermGraph,
    text: &str,
    prefix: &str,
) -> Result<TransitionSystem, ParseError> {
    Parser::new(graph, prefix).parse(text)
}

struct Parser<'g> {
    graph: &'g mut TermGraph,
    sys: TransitionSystem,
    state_index: HashMap<TermId, usize>,
    line: usize,
}

enum Core {
    Unary(Op),
    Binary(Op),
    /// Operator applied to swapped operands: `ugt a b = ult b a`.
    Swapped(Op),
    /// `not(op(a, b))`.
    Negated(Op),
    Implies,
    IncDec(Op),
}

fn classify(op: &str) -> Option<Core> {
    use Core::*;
    Some(match op {
        "not" => Unary(Op::Not),
        "neg" => Unary(Op::Neg),
        "redand" => Unary(Op::RedAnd),
        "redor" => Unary(Op::RedOr),
        "redxor" => Unary(Op::RedXor),
        "inc" => IncDec(Op::Add),
        "dec" => IncDec(Op::Sub),
        "and" => Binary(Op::And),
        "or" => Binary(Op::Or),
        "xor" => Binary(Op::Xor),
        "nand" => Negated(Op::And),
        "nor" => Negated(Op::Or),
        "xnor" => Negated(Op::Xor),
        "implies" => Implies,
        "iff" | "eq" => Binary(Op::Eq),
        "neq" => Negated(Op::Eq),
        "ult" => Binary(Op::Ult),
        "ulte" => Binary(Op::Ule),
        "ugt" => Swapped(Op::Ult),
        "ugte" => Swapped(Op::Ule),
        "slt" => Binary(Op::Slt),
        "slte" => Binary(Op::Sle),
        "sgt" => Swapped(Op::Slt),
        "sgte" => Swapped(Op::Sle),
        "add" => Binary(Op::Add),
        "sub" => Binary(Op::Sub),
        "mul" => Binary(Op::Mul),
        "udiv" => Binary(Op::Udiv),
        "urem" => Binary(Op::Urem),
        "sdiv" => Binary(Op::Sdiv),
        "srem" => Binary(Op::Srem),
        "smod" => Binary(Op::Smod),
        "sll" => Binary(Op::Sll),
        "srl" => Binary(Op::Srl),
        "sra" => Binary(Op::Sra),
        "concat" => Binary(Op::Concat),
        "read" => Binary(Op::Read),
        _ => return None,
    })
}

impl<'g> Parser<'g> {
    fn new(graph: &'g mut TermGraph, prefix: &str) -> Self {
        Self {
            graph,
            sys: TransitionSystem {
                prefix: prefix.to_string(),
                ..Default::default()
            },
            state_index: HashMap::new(),
            line: 0,
        }
    }

    fn parse(mut self, text: &str) -> Result<TransitionSystem, ParseError> {
        for (i, raw) in text.lines().enumerate() {
            self.line = i + 1;
            let content = raw.split(';').next().unwrap_or("");
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if tokens.is_empty() {
                continue;
            }
            self.parse_line(&tokens)?;
        }
        Ok(self.sys)
    }

    fn syntax(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax(self.line, msg.into())
    }

    fn sort_error(&self, e: SortError) -> ParseError {
        ParseError::SortMismatch(self.line, e.to_string())
    }

    fn number(&self, tok: &str) -> Result<i64, ParseError> {
        tok.parse::<i64>()
            .map_err(|_| self.syntax(format!("expected a number, got `{tok}`")))
    }

    fn width_arg(&self, tok: &str) -> Result<Width, ParseError> {
        tok.parse::<Width>()
            .map_err(|_| self.syntax(format!("expected a width, got `{tok}`")))
    }

    fn sort_ref(&self, tok: &str) -> Result<Sort, ParseError> {
        let id = self.number(tok)?;
        self.sys
            .sorts
            .get(&id)
            .copied()
            .ok_or(ParseError::UndefinedReference(self.line, id))
    }

    fn node_ref(&mut self, tok: &str) -> Result<TermId, ParseError> {
        let id = self.number(tok)?;
        let t = *self
            .sys
            .node_table
            .get(&id.abs())
            .ok_or(ParseError::UndefinedReference(self.line, id))?;
        if id < 0 {
            self.graph.mk_not(t).map_err(|e| self.sort_error(e))
        } else {
            Ok(t)
        }
    }

    fn mk(&mut self, op: Op, args: &[TermId]) -> Result<TermId, ParseError> {
        self.graph.mk(op, args).map_err(|e| self.sort_error(e))
    }

    fn literal(&self, r: Result<BitVecValue, LiteralError>) -> Result<BitVecValue, ParseError> {
        r.map_err(|e| self.syntax(e.to_string()))
    }

    /// Checks that `args` has `n` entries, plus an optional trailing symbol.
    fn arity(&self, op: &str, args: &[&str], n: usize) -> Result<(), ParseError> {
        if args.len() == n || args.len() == n + 1 {
            Ok(())
        } else {
            Err(ParseError::ArityMismatch(self.line, op.to_string()))
        }
    }

    fn define(&mut self, id: i64, t: TermId) -> Result<(), ParseError> {
        if id <= 0 {
            return Err(self.syntax(format!("node id must be positive, got {id}")));
        }
        if self.sys.node_table.contains_key(&id) || self.sys.sorts.contains_key(&id) {
            return Err(self.syntax(format!("id {id} defined twice")));
        }
        self.sys.node_table.insert(id, t);
        Ok(())
    }

    fn expect_sort(&self, declared: Sort, t: TermId) -> Result<(), ParseError> {
        let actual = self.graph.sort(t);
        if actual != declared {
            return Err(ParseError::SortMismatch(
                self.line,
                format!("declared {declared}, computed {actual}"),
            ));
        }
        Ok(())
    }

    fn expect_bool(&self, t: TermId) -> Result<(), ParseError> {
        if self.graph.sort(t) != Sort::BOOL {
            return Err(ParseError::SortMismatch(
                self.line,
                format!("expected bv1, got {}", self.graph.sort(t)),
            ));
        }
        Ok(())
    }

    fn symbol_name(&self, explicit: Option<&&str>, kind: &str, id: i64) -> String {
        match explicit {
            Some(s) => format!("{}{}", self.sys.prefix, s),
            None => format!("{}{}{}", self.sys.prefix, kind, id),
        }
    }

    fn declare(&mut self, op: &str, name: &str, sort: Sort) -> Result<TermId, ParseError> {
        let r = if op == "input" {
            self.graph.mk_var(name, sort)
        } else {
            self.graph.mk_state(name, sort)
        };
        r.map_err(|e| match e {
            SymbolError::Redeclared(n) => self.syntax(format!("symbol `{n}` declared twice")),
            SymbolError::Sort(e) => self.sort_error(e),
        })
    }

    fn parse_line(&mut self, tokens: &[&str]) -> Result<(), ParseError> {
        let id = self.number(tokens[0])?;
        let op = *tokens
            .get(1)
            .ok_or_else(|| self.syntax("missing opcode after node id"))?;
        let args = &tokens[2..];
        match op {
            "sort" => {
                let sort = match args.first() {
                    Some(&"bitvec") => {
                        if args.len() != 2 {
                            return Err(ParseError::ArityMismatch(self.line, op.into()));
                        }
                        let w = self.width_arg(args[1])?;
                        if w == 0 {
                            return Err(self.syntax("bit-vector width must be at least 1"));
                        }
                        Sort::BitVec(w)
                    }
                    Some(&"array") => {
                        if args.len() != 3 {
                            return Err(ParseError::ArityMismatch(self.line, op.into()));
                        }
                        let (index, element) = (self.sort_ref(args[1])?, self.sort_ref(args[2])?);
                        match (index, element) {
                            (Sort::BitVec(index), Sort::BitVec(element)) => {
                                Sort::Array { index, element }
                            }
                            _ => {
                                return Err(ParseError::SortMismatch(
                                    self.line,
                                    "nested arrays are not supported".into(),
                                ))
                            }
                        }
                    }
                    _ => return Err(self.syntax("expected `bitvec` or `array`")),
                };
                if id <= 0
                    || self.sys.sorts.contains_key(&id)
                    || self.sys.node_table.contains_key(&id)
                {
                    return Err(self.syntax(format!("id {id} defined twice")));
                }
                self.sys.sorts.insert(id, sort);
            }
            "input" | "state" => {
                if args.is_empty() || args.len() > 2 {
                    return Err(ParseError::ArityMismatch(self.line, op.into()));
                }
                let sort = self.sort_ref(args[0])?;
                let name = self.symbol_name(args.get(1), op, id);
                let t = self.declare(op, &name, sort)?;
                self.define(id, t)?;
                if op == "input" {
                    self.sys.inputs.push(Input {
                        name,
                        term: t,
                        sort,
                    });
                } else {
                    self.state_index.insert(t, self.sys.states.len());
                    self.sys.states.push(StateVar {
                        name,
                        term: t,
                        sort,
                        init: None,
                        next: None,
                    });
                }
            }
            "init" | "next" => {
                self.arity(op, args, 3)?;
                let sort = self.sort_ref(args[0])?;
                let state = self.node_ref(args[1])?;
                let value = self.node_ref(args[2])?;
                let idx = *self
                    .state_index
                    .get(&state)
                    .ok_or_else(|| self.syntax(format!("`{op}` target is not a state")))?;
                self.expect_sort(sort, state)?;
                let value_sort = self.graph.sort(value);
                let ok = value_sort == sort
                    || (op == "init"
                        && matches!(sort, Sort::Array { element, .. } if value_sort == Sort::BitVec(element)));
                if !ok {
                    return Err(ParseError::SortMismatch(
                        self.line,
                        format!("{op} value of sort {value_sort} for state of sort {sort}"),
                    ));
                }
                let slot = if op == "init" {
                    &mut self.sys.states[idx].init
                } else {
                    &mut self.sys.states[idx].next
                };
                if slot.is_some() {
                    return Err(ParseError::Syntax(self.line, format!("duplicate `{op}`")));
                }
                *slot = Some(value);
            }
            "constraint" | "bad" => {
                self.arity(op, args, 1)?;
                let t = self.node_ref(args[0])?;
                self.expect_bool(t)?;
                if op == "constraint" {
                    self.sys.constraints.push(t);
                } else {
                    self.sys.bads.push(t);
                }
            }
            "output" => {
                self.arity(op, args, 1)?;
                let t = self.node_ref(args[0])?;
                let name = match args.get(1) {
                    Some(s) => s.to_string(),
                    None => format!("output{id}"),
                };
                self.sys.outputs.push((name, t));
            }
            "const" | "constd" | "consth" | "zero" | "one" | "ones" => {
                let n = if matches!(op, "zero" | "one" | "ones") {
                    1
                } else {
                    2
                };
                self.arity(op, args, n)?;
                let sort = self.sort_ref(args[0])?;
                let Sort::BitVec(w) = sort else {
                    return Err(ParseError::SortMismatch(
                        self.line,
                        "constant of array sort".into(),
                    ));
                };
                let value = match op {
                    "zero" => BitVecValue::zero(w),
                    "one" => BitVecValue::one(w),
                    "ones" => BitVecValue::ones(w),
                    "const" => {
                        let v = self.literal(BitVecValue::from_bit_str(args[1]))?;
                        if v.width() != w {
                            return Err(ParseError::SortMismatch(
                                self.line,
                                format!("binary literal has {} bits, sort has {w}", v.width()),
                            ));
                        }
                        v
                    }
                    "constd" => self.literal(BitVecValue::from_decimal_str(args[1], w))?,
                    _ => self.literal(BitVecValue::from_hex_str(args[1], w))?,
                };
                let t = self.graph.mk_const(value);
                self.define(id, t)?;
            }
            "slice" => {
                self.arity(op, args, 4)?;
                let sort = self.sort_ref(args[0])?;
                let a = self.node_ref(args[1])?;
                let hi = self.width_arg(args[2])?;
                let lo = self.width_arg(args[3])?;
                let t = self.mk(Op::Slice { hi, lo }, &[a])?;
                self.expect_sort(sort, t)?;
                self.define(id, t)?;
            }
            "uext" | "sext" => {
                self.arity(op, args, 3)?;
                let sort = self.sort_ref(args[0])?;
                let a = self.node_ref(args[1])?;
                let n = self.width_arg(args[2])?;
                let t = if n == 0 {
                    a
                } else if op == "uext" {
                    self.mk(Op::Uext(n), &[a])?
                } else {
                    self.mk(Op::Sext(n), &[a])?
                };
                self.expect_sort(sort, t)?;
                self.define(id, t)?;
            }
            "ite" | "write" => {
                self.arity(op, args, 4)?;
                let sort = self.sort_ref(args[0])?;
                let xs = [
                    self.node_ref(args[1])?,
                    self.node_ref(args[2])?,
                    self.node_ref(args[3])?,
                ];
                let core = if op == "ite" { Op::Ite } else { Op::Write };
                let t = self.mk(core, &xs)?;
                self.expect_sort(sort, t)?;
                self.define(id, t)?;
            }
            _ => {
                let Some(core) = classify(op) else {
                    return Err(ParseError::UnknownOpcode(self.line, op.to_string()));
                };
                let unary = matches!(core, Core::Unary(_) | Core::IncDec(_));
                self.arity(op, args, if unary { 2 } else { 3 })?;
                let sort = self.sort_ref(args[0])?;
                let a = self.node_ref(args[1])?;
                let t = match core {
                    Core::Unary(o) => self.mk(o, &[a])?,
                    Core::IncDec(o) => {
                        let w = self.graph.width(a).ok_or_else(|| {
                            ParseError::SortMismatch(self.line, "array operand".into())
                        })?;
                        let one = self.graph.mk_const(BitVecValue::one(w));
                        self.mk(o, &[a, one])?
                    }
                    _ => {
                        let b = self.node_ref(args[2])?;
                        match core {
                            Core::Binary(o) => self.mk(o, &[a, b])?,
                            Core::Swapped(o) => self.mk(o, &[b, a])?,
                            Core::Negated(o) => {
                                let inner = self.mk(o, &[a, b])?;
                                self.mk(Op::Not, &[inner])?
                            }
                            Core::Implies => {
                                let na = self.mk(Op::Not, &[a])?;
                                self.mk(Op::Or, &[na, b])?
                            }
                            Core::Unary(_) | Core::IncDec(_) => unreachable!(),
                        }
                    }
                };
                self.expect_sort(sort, t)?;
                self.define(id, t)?;
            }
        }
        Ok(())
    }
}
