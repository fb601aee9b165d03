//! Word-level SAT sweeping for BTOR2 hardware models.
//!
//! Models are parsed into a hash-consed [`term::TermGraph`], unrolled into a
//! combinational check, simulated with random and constraint-guided stimulus,
//! and reduced by proving simulation-equivalent terms equal with an SMT-style
//! oracle. The reduced check is handed to the oracle at the end.

pub mod array;
pub mod btor2;
pub mod bv;
pub mod driver;
pub mod oracle;
pub mod sim;
pub mod smt2;
pub mod sweep;
pub mod term;
pub mod unroll;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/terms.md")]
    mod terms {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/sweeping.md")]
    mod sweeping {}
    #[doc = include_str!("../../../book/src/arrays.md")]
    mod arrays {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
