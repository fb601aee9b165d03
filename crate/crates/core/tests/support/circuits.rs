//! BTOR2 text for small arithmetic circuits.

use std::collections::HashMap;
use std::fmt::Write;

/// Line-numbering BTOR2 writer.
#[derive(Default)]
pub struct Btor {
    text: String,
    next: u32,
    sorts: HashMap<String, u32>,
}

impl Btor {
    pub fn new() -> Self {
        Self::default()
    }

    fn line(&mut self, body: std::fmt::Arguments<'_>) -> u32 {
        self.next += 1;
        writeln!(self.text, "{} {}", self.next, body).unwrap();
        self.next
    }

    pub fn bv(&mut self, w: u32) -> u32 {
        let key = format!("bitvec {w}");
        if let Some(&id) = self.sorts.get(&key) {
            return id;
        }
        let id = self.line(format_args!("sort {key}"));
        self.sorts.insert(key, id);
        id
    }

    pub fn array(&mut self, index: u32, element: u32) -> u32 {
        let (i, e) = (self.bv(index), self.bv(element));
        let key = format!("array {i} {e}");
        if let Some(&id) = self.sorts.get(&key) {
            return id;
        }
        let id = self.line(format_args!("sort {key}"));
        self.sorts.insert(key, id);
        id
    }

    pub fn input(&mut self, w: u32, name: &str) -> u32 {
        let s = self.bv(w);
        self.line(format_args!("input {s} {name}"))
    }

    pub fn state(&mut self, sort: u32, name: &str) -> u32 {
        self.line(format_args!("state {sort} {name}"))
    }

    pub fn constd(&mut self, w: u32, value: u64) -> u32 {
        let s = self.bv(w);
        self.line(format_args!("constd {s} {value}"))
    }

    pub fn op(&mut self, w: u32, name: &str, args: &[u32]) -> u32 {
        let s = self.bv(w);
        let args: Vec<String> = args.iter().map(u32::to_string).collect();
        self.line(format_args!("{name} {s} {}", args.join(" ")))
    }

    pub fn slice(&mut self, a: u32, hi: u32, lo: u32) -> u32 {
        let s = self.bv(hi - lo + 1);
        self.line(format_args!("slice {s} {a} {hi} {lo}"))
    }

    pub fn uext(&mut self, w: u32, a: u32, extra: u32) -> u32 {
        let s = self.bv(w);
        self.line(format_args!("uext {s} {a} {extra}"))
    }

    pub fn sext(&mut self, w: u32, a: u32, extra: u32) -> u32 {
        let s = self.bv(w);
        self.line(format_args!("sext {s} {a} {extra}"))
    }

    pub fn write(&mut self, sort: u32, array: u32, index: u32, value: u32) -> u32 {
        self.line(format_args!("write {sort} {array} {index} {value}"))
    }

    pub fn read(&mut self, w: u32, array: u32, index: u32) -> u32 {
        let s = self.bv(w);
        self.line(format_args!("read {s} {array} {index}"))
    }

    pub fn init(&mut self, sort: u32, state: u32, value: u32) {
        self.line(format_args!("init {sort} {state} {value}"));
    }

    pub fn next(&mut self, sort: u32, state: u32, value: u32) {
        self.line(format_args!("next {sort} {state} {value}"));
    }

    pub fn output(&mut self, t: u32, name: &str) {
        self.line(format_args!("output {t} {name}"));
    }

    pub fn bad(&mut self, t: u32) {
        self.line(format_args!("bad {t}"));
    }

    pub fn constraint(&mut self, t: u32) {
        self.line(format_args!("constraint {t}"));
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Word-level shift-add multiplier: `out = Σ ite(y[i], uext(x) << i, 0)`,
/// with a `2n`-bit product.
pub fn shift_add_multiplier(n: u32) -> String {
    let mut b = Btor::new();
    let x = b.input(n, "x");
    let y = b.input(n, "y");
    let wide = b.uext(2 * n, x, n);
    let zero = b.constd(2 * n, 0);
    let mut acc = zero;
    for i in 0..n {
        let bit = b.slice(y, i, i);
        let amount = b.constd(2 * n, u64::from(i));
        let shifted = b.op(2 * n, "sll", &[wide, amount]);
        let term = b.op(2 * n, "ite", &[bit, shifted, zero]);
        acc = b.op(2 * n, "add", &[acc, term]);
    }
    b.output(acc, "out");
    b.finish()
}

/// Bit-level array multiplier: AND partial products summed row by row with
/// ripple-carry full adders, then the product bits concatenated.
pub fn array_multiplier(n: u32) -> String {
    let mut b = Btor::new();
    let x = b.input(n, "x");
    let y = b.input(n, "y");
    let xs: Vec<u32> = (0..n).map(|j| b.slice(x, j, j)).collect();
    let ys: Vec<u32> = (0..n).map(|i| b.slice(y, i, i)).collect();
    let zero = b.constd(1, 0);
    let width = 2 * n as usize;
    let mut sum: Vec<u32> = vec![zero; width];
    for j in 0..n as usize {
        sum[j] = b.op(1, "and", &[xs[j], ys[0]]);
    }
    for i in 1..n as usize {
        let mut carry = zero;
        for (j, &xj) in xs.iter().enumerate() {
            let pp = b.op(1, "and", &[xj, ys[i]]);
            let pos = i + j;
            let half = b.op(1, "xor", &[sum[pos], pp]);
            let s = b.op(1, "xor", &[half, carry]);
            let g = b.op(1, "and", &[sum[pos], pp]);
            let p = b.op(1, "and", &[half, carry]);
            carry = b.op(1, "or", &[g, p]);
            sum[pos] = s;
        }
        sum[i + n as usize] = carry;
    }
    let mut acc = sum[width - 1];
    for k in (0..width - 1).rev() {
        acc = b.op((width - k) as u32, "concat", &[acc, sum[k]]);
    }
    b.output(acc, "out");
    b.finish()
}

/// Small ALU in the shape of a datapath with a control word: `op` selects
/// add, sub, and, xor of `x` and `y`. `alternative` computes the same
/// functions with different operators.
pub fn alu(width: u32, alternative: bool) -> String {
    let mut b = Btor::new();
    let op = b.input(4, "op");
    let x = b.input(width, "x");
    let y = b.input(width, "y");
    let (add, sub, and, xor) = if alternative {
        let ny = b.op(width, "neg", &[y]);
        let nx = b.op(width, "not", &[x]);
        let nyy = b.op(width, "not", &[y]);
        let or = b.op(width, "or", &[nx, nyy]);
        let xor_or = b.op(width, "or", &[x, y]);
        let xor_and = b.op(width, "and", &[x, y]);
        let nand = b.op(width, "not", &[xor_and]);
        (
            b.op(width, "add", &[y, x]),
            b.op(width, "add", &[x, ny]),
            b.op(width, "not", &[or]),
            b.op(width, "and", &[xor_or, nand]),
        )
    } else {
        (
            b.op(width, "add", &[x, y]),
            b.op(width, "sub", &[x, y]),
            b.op(width, "and", &[x, y]),
            b.op(width, "xor", &[x, y]),
        )
    };
    let codes: Vec<u32> = (0..4).map(|c| b.constd(4, c)).collect();
    let mut out = xor;
    for (code, value) in [(2usize, and), (1, sub), (0, add)] {
        let is = b.op(1, "eq", &[op, codes[code]]);
        out = b.op(width, "ite", &[is, value, out]);
    }
    b.output(out, "out");
    b.finish()
}

/// Accumulator register fed by the ALU: `acc' = alu(op, acc, x)`, `out = acc`.
pub fn accumulator(width: u32, alternative: bool) -> String {
    let mut b = Btor::new();
    let sort = b.bv(width);
    let op = b.input(4, "op");
    let x = b.input(width, "x");
    let acc = b.state(sort, "acc");
    let zero = b.constd(width, 0);
    b.init(sort, acc, zero);
    let sum = if alternative {
        b.op(width, "add", &[x, acc])
    } else {
        b.op(width, "add", &[acc, x])
    };
    let diff = if alternative {
        let n = b.op(width, "neg", &[x]);
        b.op(width, "add", &[acc, n])
    } else {
        b.op(width, "sub", &[acc, x])
    };
    let zero_op = b.constd(4, 0);
    let is_add = b.op(1, "eq", &[op, zero_op]);
    let next = b.op(width, "ite", &[is_add, sum, diff]);
    b.next(sort, acc, next);
    b.output(acc, "out");
    b.finish()
}

/// Design with constant tables (index width `index_width`, 8-bit elements)
/// and one input `i`. Each entry of `tables` becomes an array state
/// initialized with writes of every listed value. The outputs `r<k>` read
/// table `k` at `i`, and `bad` is `read(t0, i) != read(t1, i)` when there are
/// at least two tables.
pub fn table_design(
    index_width: u32,
    element_width: u32,
    tables: &[Vec<u64>],
) -> (String, Vec<u32>) {
    let mut b = Btor::new();
    let sort = b.array(index_width, element_width);
    let i = b.input(index_width, "i");
    let mut reads = Vec::new();
    for (k, values) in tables.iter().enumerate() {
        let state = b.state(sort, &format!("t{k}"));
        let mut chain = state;
        for (idx, &v) in values.iter().enumerate() {
            let ic = b.constd(index_width, idx as u64);
            let vc = b.constd(element_width, v);
            chain = b.write(sort, chain, ic, vc);
        }
        b.init(sort, state, chain);
        b.next(sort, state, state);
        let r = b.read(element_width, state, i);
        b.output(r, &format!("r{k}"));
        reads.push(r);
    }
    if reads.len() >= 2 {
        let ne = b.op(1, "neq", &[reads[0], reads[1]]);
        b.bad(ne);
    }
    (b.finish(), reads)
}
