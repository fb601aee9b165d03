//! Test-side reference machinery: a naive big-integer evaluator written
//! independently of `wordsweep::bv`, random formula pairs, and BTOR2 text
//! generators for small arithmetic circuits.

#![allow(dead_code)]

pub mod circuits;
pub mod formulas;
pub mod naive;
