//! Fixed-width bit-vector values with SMT-LIB semantics.
//!
//! Values of width 64 or less are stored inline in a machine word. Wider
//! values fall back to [`BigUint`]. Every operation reduces its result modulo
//! `2^width`, so the stored integer is always below `2^width`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, ToPrimitive, Zero};
use std::fmt;

pub type Width = u32;

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVecValue {
    width: Width,
    repr: Repr,
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Repr {
    Word(u64),
    Big(BigUint),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LiteralError {
    #[error("invalid digit in literal `{0}`")]
    InvalidDigit(String),
    #[error("literal `{literal}` does not fit in {width} bits")]
    Overflow { literal: String, width: Width },
    #[error("bit-vector width must be at least 1")]
    ZeroWidth,
}

#[inline]
fn word_mask(width: Width) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

fn big_mask(width: Width) -> BigUint {
    (BigUint::one() << width) - BigUint::one()
}

impl BitVecValue {
    /// Reduces `value` modulo `2^width`.
    pub fn from_u64(value: u64, width: Width) -> Self {
        assert!(width > 0, "bit-vector width must be at least 1");
        if width <= 64 {
            Self {
                width,
                repr: Repr::Word(value & word_mask(width)),
            }
        } else {
            Self {
                width,
                repr: Repr::Big(BigUint::from(value)),
            }
        }
    }

    /// Reduces `value` modulo `2^width`.
    pub fn from_biguint(value: &BigUint, width: Width) -> Self {
        assert!(width > 0, "bit-vector width must be at least 1");
        if width <= 64 {
            let low = value.iter_u64_digits().next().unwrap_or(0);
            Self::from_u64(low, width)
        } else {
            Self {
                width,
                repr: Repr::Big(value & big_mask(width)),
            }
        }
    }

    /// Two's complement encoding of a signed integer.
    pub fn from_bigint(value: &BigInt, width: Width) -> Self {
        let modulus = BigInt::one() << width;
        let mut v = value % &modulus;
        if v.sign() == Sign::Minus {
            v += &modulus;
        }
        Self::from_biguint(v.magnitude(), width)
    }

    pub fn from_bool(value: bool) -> Self {
        Self::from_u64(value as u64, 1)
    }

    pub fn zero(width: Width) -> Self {
        Self::from_u64(0, width)
    }

    pub fn one(width: Width) -> Self {
        Self::from_u64(1, width)
    }

    pub fn ones(width: Width) -> Self {
        if width <= 64 {
            Self::from_u64(u64::MAX, width)
        } else {
            Self {
                width,
                repr: Repr::Big(big_mask(width)),
            }
        }
    }

    /// Parses a string of `0`/`1` characters, most significant bit first. The
    /// width is the string length.
    pub fn from_bit_str(bits: &str) -> Result<Self, LiteralError> {
        if bits.is_empty() {
            return Err(LiteralError::ZeroWidth);
        }
        if !bits.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(LiteralError::InvalidDigit(bits.to_string()));
        }
        let value = BigUint::parse_bytes(bits.as_bytes(), 2)
            .ok_or_else(|| LiteralError::InvalidDigit(bits.to_string()))?;
        Ok(Self::from_biguint(&value, bits.len() as Width))
    }

    /// Parses a decimal literal. Negative values are encoded in two's
    /// complement and must fit the signed range.
    pub fn from_decimal_str(literal: &str, width: Width) -> Result<Self, LiteralError> {
        if width == 0 {
            return Err(LiteralError::ZeroWidth);
        }
        let value = literal
            .parse::<BigInt>()
            .map_err(|_| LiteralError::InvalidDigit(literal.to_string()))?;
        let overflow = || LiteralError::Overflow {
            literal: literal.to_string(),
            width,
        };
        if value.sign() == Sign::Minus {
            let min = -(BigInt::one() << (width - 1));
            if value < min {
                return Err(overflow());
            }
        } else if value.bits() > width as u64 {
            return Err(overflow());
        }
        Ok(Self::from_bigint(&value, width))
    }

    pub fn from_hex_str(literal: &str, width: Width) -> Result<Self, LiteralError> {
        if width == 0 {
            return Err(LiteralError::ZeroWidth);
        }
        let value = BigUint::parse_bytes(literal.as_bytes(), 16)
            .ok_or_else(|| LiteralError::InvalidDigit(literal.to_string()))?;
        if value.bits() > width as u64 {
            return Err(LiteralError::Overflow {
                literal: literal.to_string(),
                width,
            });
        }
        Ok(Self::from_biguint(&value, width))
    }

    #[inline]
    pub fn width(&self) -> Width {
        self.width
    }

    pub fn to_biguint(&self) -> BigUint {
        match &self.repr {
            Repr::Word(w) => BigUint::from(*w),
            Repr::Big(b) => b.clone(),
        }
    }

    /// Signed interpretation (two's complement).
    pub fn to_bigint(&self) -> BigInt {
        let unsigned = BigInt::from(self.to_biguint());
        if self.msb() {
            unsigned - (BigInt::one() << self.width)
        } else {
            unsigned
        }
    }

    pub fn to_u64(&self) -> Option<u64> {
        match &self.repr {
            Repr::Word(w) => Some(*w),
            Repr::Big(b) => b.to_u64(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.repr {
            Repr::Word(w) => *w == 0,
            Repr::Big(b) => b.is_zero(),
        }
    }

    pub fn is_ones(&self) -> bool {
        match &self.repr {
            Repr::Word(w) => *w == word_mask(self.width),
            Repr::Big(b) => *b == big_mask(self.width),
        }
    }

    /// True for the width-1 value `1`.
    pub fn is_true(&self) -> bool {
        self.width == 1 && !self.is_zero()
    }

    pub fn bit(&self, index: Width) -> bool {
        debug_assert!(index < self.width);
        match &self.repr {
            Repr::Word(w) => (w >> index) & 1 == 1,
            Repr::Big(b) => b.bit(index as u64),
        }
    }

    pub fn msb(&self) -> bool {
        self.bit(self.width - 1)
    }

    pub fn to_bit_string(&self) -> String {
        (0..self.width)
            .rev()
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    /// Little-endian bytes of the stored integer, padded to the full width.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let len = self.width.div_ceil(8) as usize;
        let mut bytes = match &self.repr {
            Repr::Word(w) => w.to_le_bytes().to_vec(),
            Repr::Big(b) => b.to_bytes_le(),
        };
        bytes.resize(len, 0);
        bytes
    }

    fn same_width(&self, other: &Self) {
        debug_assert_eq!(self.width, other.width, "operand widths differ");
    }

    fn lift2(
        &self,
        other: &Self,
        word: impl Fn(u64, u64) -> u64,
        big: impl Fn(&BigUint, &BigUint) -> BigUint,
    ) -> Self {
        self.same_width(other);
        match (&self.repr, &other.repr) {
            (Repr::Word(a), Repr::Word(b)) => Self::from_u64(word(*a, *b), self.width),
            (Repr::Big(a), Repr::Big(b)) => Self::from_biguint(&big(a, b), self.width),
            _ => unreachable!("representation does not match width"),
        }
    }

    pub fn not(&self) -> Self {
        match &self.repr {
            Repr::Word(w) => Self::from_u64(!w, self.width),
            Repr::Big(b) => Self {
                width: self.width,
                repr: Repr::Big(b ^ big_mask(self.width)),
            },
        }
    }

    pub fn neg(&self) -> Self {
        match &self.repr {
            Repr::Word(w) => Self::from_u64(w.wrapping_neg(), self.width),
            Repr::Big(b) => {
                let modulus = BigUint::one() << self.width;
                Self::from_biguint(&(modulus - b), self.width)
            }
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        self.lift2(other, |a, b| a & b, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Self {
        self.lift2(other, |a, b| a | b, |a, b| a | b)
    }

    pub fn xor(&self, other: &Self) -> Self {
        self.lift2(other, |a, b| a ^ b, |a, b| a ^ b)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.lift2(other, u64::wrapping_add, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.lift2(other, u64::wrapping_mul, |a, b| a * b)
    }

    /// Unsigned division; division by zero yields all ones.
    pub fn udiv(&self, other: &Self) -> Self {
        if other.is_zero() {
            return Self::ones(self.width);
        }
        self.lift2(other, |a, b| a / b, |a, b| a / b)
    }

    /// Unsigned remainder; remainder by zero yields the dividend.
    pub fn urem(&self, other: &Self) -> Self {
        if other.is_zero() {
            return self.clone();
        }
        self.lift2(other, |a, b| a % b, |a, b| a % b)
    }

    pub fn sdiv(&self, other: &Self) -> Self {
        match (self.msb(), other.msb()) {
            (false, false) => self.udiv(other),
            (true, false) => self.neg().udiv(other).neg(),
            (false, true) => self.udiv(&other.neg()).neg(),
            (true, true) => self.neg().udiv(&other.neg()),
        }
    }

    pub fn srem(&self, other: &Self) -> Self {
        match (self.msb(), other.msb()) {
            (false, false) => self.urem(other),
            (true, false) => self.neg().urem(other).neg(),
            (false, true) => self.urem(&other.neg()),
            (true, true) => self.neg().urem(&other.neg()).neg(),
        }
    }

    pub fn smod(&self, other: &Self) -> Self {
        let (ms, mt) = (self.msb(), other.msb());
        let abs_s = if ms { self.neg() } else { self.clone() };
        let abs_t = if mt { other.neg() } else { other.clone() };
        let u = abs_s.urem(&abs_t);
        if u.is_zero() {
            return u;
        }
        match (ms, mt) {
            (false, false) => u,
            (true, false) => u.neg().add(other),
            (false, true) => u.add(other),
            (true, true) => u.neg(),
        }
    }

    /// Shift amount as a `Width`, saturating at `self.width` when the amount
    /// is at least the width.
    fn shift_amount(&self) -> Width {
        match self.to_u64() {
            Some(v) if v < self.width as u64 => v as Width,
            _ => self.width,
        }
    }

    pub fn shl(&self, amount: &Self) -> Self {
        let n = amount.shift_amount();
        if n >= self.width {
            return Self::zero(self.width);
        }
        match &self.repr {
            Repr::Word(w) => Self::from_u64(w << n, self.width),
            Repr::Big(b) => Self::from_biguint(&(b << n), self.width),
        }
    }

    pub fn lshr(&self, amount: &Self) -> Self {
        let n = amount.shift_amount();
        if n >= self.width {
            return Self::zero(self.width);
        }
        self.shr_by(n)
    }

    fn shr_by(&self, n: Width) -> Self {
        match &self.repr {
            Repr::Word(w) => Self::from_u64(if n >= 64 { 0 } else { w >> n }, self.width),
            Repr::Big(b) => Self::from_biguint(&(b >> n), self.width),
        }
    }

    pub fn ashr(&self, amount: &Self) -> Self {
        if self.msb() {
            self.not().lshr(amount).not()
        } else {
            self.lshr(amount)
        }
    }

    /// `self` forms the high bits of the result.
    pub fn concat(&self, low: &Self) -> Self {
        let width = self.width + low.width;
        match (&self.repr, &low.repr) {
            (Repr::Word(h), Repr::Word(l)) if width <= 64 => {
                Self::from_u64((h << low.width) | l, width)
            }
            _ => {
                let value = (self.to_biguint() << low.width) | low.to_biguint();
                Self::from_biguint(&value, width)
            }
        }
    }

    /// Bits `hi` down to `lo`, inclusive.
    pub fn slice(&self, hi: Width, lo: Width) -> Self {
        debug_assert!(lo <= hi && hi < self.width);
        let width = hi - lo + 1;
        match &self.repr {
            Repr::Word(w) => Self::from_u64(w >> lo, width),
            Repr::Big(b) => Self::from_biguint(&(b >> lo), width),
        }
    }

    pub fn zext(&self, extra: Width) -> Self {
        if extra == 0 {
            return self.clone();
        }
        Self::zero(extra).concat(self)
    }

    pub fn sext(&self, extra: Width) -> Self {
        if extra == 0 {
            return self.clone();
        }
        if self.msb() {
            Self::ones(extra).concat(self)
        } else {
            Self::zero(extra).concat(self)
        }
    }

    pub fn ult(&self, other: &Self) -> bool {
        self.same_width(other);
        match (&self.repr, &other.repr) {
            (Repr::Word(a), Repr::Word(b)) => a < b,
            (Repr::Big(a), Repr::Big(b)) => a < b,
            _ => unreachable!("representation does not match width"),
        }
    }

    pub fn ule(&self, other: &Self) -> bool {
        !other.ult(self)
    }

    pub fn slt(&self, other: &Self) -> bool {
        match (self.msb(), other.msb()) {
            (true, false) => true,
            (false, true) => false,
            _ => self.ult(other),
        }
    }

    pub fn sle(&self, other: &Self) -> bool {
        !other.slt(self)
    }

    pub fn redand(&self) -> Self {
        Self::from_bool(self.is_ones())
    }

    pub fn redor(&self) -> Self {
        Self::from_bool(!self.is_zero())
    }

    pub fn redxor(&self) -> Self {
        let parity = match &self.repr {
            Repr::Word(w) => w.count_ones() % 2 == 1,
            Repr::Big(b) => b.count_ones() % 2 == 1,
        };
        Self::from_bool(parity)
    }
}

impl fmt::Debug for BitVecValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'h{:x}", self.width, self.to_biguint())
    }
}

impl fmt::Display for BitVecValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#b{}", self.to_bit_string())
    }
}
