//! SMT-LIB2 printing (QF_ABV) and s-expression parsing.
//!
//! Width-1 bit-vectors stay bit-vectors; predicates are wrapped as
//! `(ite p #b1 #b0)`. Shared structure is printed once through nested `let`s,
//! one binding group per DAG depth.

use crate::array::{ArrayTables, ConstArrayTable};
use crate::bv::{BitVecValue, LiteralError, Width};
use crate::sim::{ArrayValue, Value};
use crate::term::{Op, Sort, TermGraph, TermId};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

pub fn sort_text(sort: Sort) -> String {
    match sort {
        Sort::BitVec(w) => format!("(_ BitVec {w})"),
        Sort::Array { index, element } => {
            format!("(Array (_ BitVec {index}) (_ BitVec {element}))")
        }
    }
}

fn literal(v: &BitVecValue) -> String {
    format!("#b{}", v.to_bit_string())
}

/// Prints terms of one graph, assigning stable names to leaves.
pub struct Smt2Printer<'g> {
    graph: &'g TermGraph,
    names: HashMap<TermId, String>,
    used: HashSet<String>,
}

impl<'g> Smt2Printer<'g> {
    pub fn new(graph: &'g TermGraph) -> Self {
        Self {
            graph,
            names: HashMap::new(),
            used: HashSet::new(),
        }
    }

    /// Quoted symbol for a leaf. Names are derived from the leaf's symbol and
    /// made unique per printer.
    pub fn leaf_name(&mut self, t: TermId) -> String {
        if let Some(n) = self.names.get(&t) {
            return n.clone();
        }
        let raw = self.graph.symbol_name(t).unwrap_or("leaf");
        let mut base: String = raw
            .chars()
            .map(|c| if c == '|' || c == '\\' { '_' } else { c })
            .collect();
        if base.starts_with('?') || base.is_empty() {
            base.insert(0, '_');
        }
        let mut name = format!("|{base}|");
        if self.used.contains(&name) {
            name = format!("|{base}#{}|", t.index());
        }
        self.used.insert(name.clone());
        self.names.insert(t, name.clone());
        name
    }

    pub fn declare(&mut self, t: TermId) -> String {
        let name = self.leaf_name(t);
        format!("(declare-const {name} {})", sort_text(self.graph.sort(t)))
    }

    /// Assertions pinning a tabulated array leaf to its table.
    pub fn table_assertions(&mut self, leaf: TermId, table: &ConstArrayTable) -> String {
        let name = self.leaf_name(leaf);
        let mut out = String::new();
        match &table.default {
            Some(d) => {
                let mut expr = format!("((as const {}) {})", sort_text(table.sort()), literal(d));
                for (k, v) in &table.entries {
                    expr = format!("(store {expr} {} {})", literal(k), literal(v));
                }
                let _ = writeln!(out, "(assert (= {name} {expr}))");
            }
            None => {
                for (k, v) in &table.entries {
                    let _ = writeln!(
                        out,
                        "(assert (= (select {name} {}) {}))",
                        literal(k),
                        literal(v)
                    );
                }
            }
        }
        out
    }

    fn atom(&mut self, t: TermId) -> String {
        match self.graph.op(t) {
            Op::Const(v) => literal(v),
            Op::Var(_) | Op::State(_) => self.leaf_name(t),
            _ => format!("?n{}", t.index()),
        }
    }

    fn node_expr(&mut self, t: TermId) -> String {
        let g = self.graph;
        let args: Vec<String> = g.operands(t).iter().map(|&o| self.atom(o)).collect();
        let bool_bv = |p: String| format!("(ite {p} #b1 #b0)");
        let width = |i: usize| g.width(g.operands(t)[i]).unwrap_or(0);
        match g.op(t) {
            Op::Const(_) | Op::Var(_) | Op::State(_) => self.atom(t),
            Op::Not => format!("(bvnot {})", args[0]),
            Op::Neg => format!("(bvneg {})", args[0]),
            Op::RedAnd => bool_bv(format!(
                "(= {} #b{})",
                args[0],
                "1".repeat(width(0) as usize)
            )),
            Op::RedOr => format!(
                "(ite (= {} #b{}) #b0 #b1)",
                args[0],
                "0".repeat(width(0) as usize)
            ),
            Op::RedXor => {
                let bits: Vec<String> = (0..width(0))
                    .map(|i| format!("((_ extract {i} {i}) {})", args[0]))
                    .collect();
                bits.into_iter()
                    .reduce(|a, b| format!("(bvxor {a} {b})"))
                    .unwrap_or_else(|| "#b0".into())
            }
            Op::And => format!("(bvand {} {})", args[0], args[1]),
            Op::Or => format!("(bvor {} {})", args[0], args[1]),
            Op::Xor => format!("(bvxor {} {})", args[0], args[1]),
            Op::Add => format!("(bvadd {} {})", args[0], args[1]),
            Op::Sub => format!("(bvsub {} {})", args[0], args[1]),
            Op::Mul => format!("(bvmul {} {})", args[0], args[1]),
            Op::Udiv => format!("(bvudiv {} {})", args[0], args[1]),
            Op::Urem => format!("(bvurem {} {})", args[0], args[1]),
            Op::Sdiv => format!("(bvsdiv {} {})", args[0], args[1]),
            Op::Srem => format!("(bvsrem {} {})", args[0], args[1]),
            Op::Smod => format!("(bvsmod {} {})", args[0], args[1]),
            Op::Sll => format!("(bvshl {} {})", args[0], args[1]),
            Op::Srl => format!("(bvlshr {} {})", args[0], args[1]),
            Op::Sra => format!("(bvashr {} {})", args[0], args[1]),
            Op::Eq => bool_bv(format!("(= {} {})", args[0], args[1])),
            Op::Ult => bool_bv(format!("(bvult {} {})", args[0], args[1])),
            Op::Ule => bool_bv(format!("(bvule {} {})", args[0], args[1])),
            Op::Slt => bool_bv(format!("(bvslt {} {})", args[0], args[1])),
            Op::Sle => bool_bv(format!("(bvsle {} {})", args[0], args[1])),
            Op::Concat => format!("(concat {} {})", args[0], args[1]),
            Op::Slice { hi, lo } => format!("((_ extract {hi} {lo}) {})", args[0]),
            Op::Uext(n) => format!("((_ zero_extend {n}) {})", args[0]),
            Op::Sext(n) => format!("((_ sign_extend {n}) {})", args[0]),
            Op::Ite => format!("(ite (= {} #b1) {} {})", args[0], args[1], args[2]),
            Op::Read => format!("(select {} {})", args[0], args[1]),
            Op::Write => format!("(store {} {} {})", args[0], args[1], args[2]),
        }
    }

    /// Expression for `root` with every inner node bound once.
    pub fn term(&mut self, root: TermId) -> String {
        let g = self.graph;
        let mut levels: BTreeMap<u32, Vec<TermId>> = BTreeMap::new();
        for t in g.post_order(&[root]) {
            if !g.op(t).is_leaf() {
                levels.entry(g.depth(t)).or_default().push(t);
            }
        }
        let mut out = String::new();
        let mut open = 0;
        for nodes in levels.values() {
            out.push_str("(let (");
            for (i, &t) in nodes.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "(?n{} {})", t.index(), self.node_expr(t));
            }
            out.push_str(") ");
            open += 1;
        }
        out.push_str(&self.atom(root));
        out.push_str(&")".repeat(open));
        out
    }

    /// `(assert ...)` stating that the bv1 term `root` is 1.
    pub fn assert_true(&mut self, root: TermId) -> String {
        format!("(assert (= #b1 {}))", self.term(root))
    }
}

/// Standalone script checking `constraint ∧ check`.
pub fn emit_script(
    graph: &TermGraph,
    constraint: TermId,
    check: TermId,
    tables: &ArrayTables,
) -> String {
    let mut p = Smt2Printer::new(graph);
    let mut out = String::from("(set-logic QF_ABV)\n(set-option :produce-models true)\n");
    let leaves = graph.leaves(&[constraint, check]);
    for &leaf in &leaves {
        out.push_str(&p.declare(leaf));
        out.push('\n');
    }
    for &leaf in &leaves {
        if let Some(table) = tables.get(&leaf) {
            out.push_str(&p.table_assertions(leaf, table));
        }
    }
    if graph.const_value(constraint).is_none_or(|v| !v.is_true()) {
        out.push_str(&p.assert_true(constraint));
        out.push('\n');
    }
    out.push_str(&p.assert_true(check));
    out.push_str("\n(check-sat)\n");
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a) => Some(a),
            SExpr::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(l) => Some(l),
            SExpr::Atom(_) => None,
        }
    }
}

impl std::fmt::Display for SExpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SExpr::Atom(a) => f.write_str(a),
            SExpr::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SExprError {
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("unterminated quoted symbol or string")]
    Unterminated,
}

/// Net parenthesis depth of `text`, ignoring quoted symbols, strings and
/// comments. `None` if a quote is still open.
pub fn paren_depth(text: &str) -> Option<i64> {
    let mut depth = 0i64;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '|' => loop {
                match chars.next() {
                    Some('|') => break,
                    Some(_) => {}
                    None => return None,
                }
            },
            '"' => loop {
                match chars.next() {
                    Some('"') if chars.peek() == Some(&'"') => {
                        chars.next();
                    }
                    Some('"') => break,
                    Some(_) => {}
                    None => return None,
                }
            },
            ';' => {
                for c in chars.by_ref() {
                    if c == '\n' {
                        break;
                    }
                }
            }
            _ => {}
        }
    }
    Some(depth)
}

pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, SExprError> {
    let chars: Vec<char> = text.chars().collect();
    let mut stack: Vec<Vec<SExpr>> = vec![Vec::new()];
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let done = stack.pop().ok_or(SExprError::Unbalanced)?;
                stack
                    .last_mut()
                    .ok_or(SExprError::Unbalanced)?
                    .push(SExpr::List(done));
                i += 1;
            }
            ';' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            '|' | '"' => {
                let start = i;
                i += 1;
                loop {
                    if i >= chars.len() {
                        return Err(SExprError::Unterminated);
                    }
                    if chars[i] == c {
                        if c == '"' && chars.get(i + 1) == Some(&'"') {
                            i += 2;
                            continue;
                        }
                        break;
                    }
                    i += 1;
                }
                i += 1;
                let atom: String = chars[start..i].iter().collect();
                stack.last_mut().unwrap().push(SExpr::Atom(atom));
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && !"()|\";".contains(chars[i]) {
                    i += 1;
                }
                let atom: String = chars[start..i].iter().collect();
                stack.last_mut().unwrap().push(SExpr::Atom(atom));
            }
        }
        if stack.is_empty() {
            return Err(SExprError::Unbalanced);
        }
    }
    if stack.len() != 1 {
        return Err(SExprError::Unbalanced);
    }
    Ok(stack.pop().unwrap())
}

/// Bit-vector literal in any of the forms solvers print: `#b…`, `#x…` or
/// `(_ bvN w)`.
pub fn parse_bv_value(expr: &SExpr, width: Width) -> Option<BitVecValue> {
    match expr {
        SExpr::Atom(a) => {
            let v = if let Some(bits) = a.strip_prefix("#b") {
                BitVecValue::from_bit_str(bits)
            } else if let Some(hex) = a.strip_prefix("#x") {
                BitVecValue::from_hex_str(hex, hex.len() as Width * 4)
            } else {
                Err(LiteralError::InvalidDigit(a.clone()))
            };
            v.ok().filter(|v| v.width() == width)
        }
        SExpr::List(items) => match items.as_slice() {
            [SExpr::Atom(u), SExpr::Atom(n), SExpr::Atom(w)] if u == "_" && n.starts_with("bv") => {
                let w: Width = w.parse().ok()?;
                if w != width {
                    return None;
                }
                BitVecValue::from_decimal_str(&n[2..], w).ok()
            }
            _ => None,
        },
    }
}

/// Value of sort `sort` as printed by `get-value`. Arrays are accepted as
/// `((as const S) v)` under any number of `store`s.
pub fn parse_value(expr: &SExpr, sort: Sort) -> Option<Value> {
    match sort {
        Sort::BitVec(w) => parse_bv_value(expr, w).map(Value::Bv),
        Sort::Array { index, element } => parse_array(expr, sort, index, element).map(Value::Array),
    }
}

fn parse_array(expr: &SExpr, sort: Sort, index: Width, element: Width) -> Option<ArrayValue> {
    let items = expr.as_list()?;
    match items {
        [SExpr::Atom(s), a, i, v] if s == "store" => {
            let base = parse_array(a, sort, index, element)?;
            Some(base.write(&parse_bv_value(i, index)?, &parse_bv_value(v, element)?))
        }
        [SExpr::List(head), v] => match head.as_slice() {
            [SExpr::Atom(a), SExpr::Atom(c), _] if a == "as" && c == "const" => {
                Some(ArrayValue::constant(sort, parse_bv_value(v, element)?))
            }
            _ => None,
        },
        _ => None,
    }
}
