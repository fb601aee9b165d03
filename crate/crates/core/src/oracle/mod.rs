//! Satisfiability oracles for `assumptions ∧ goal` queries.
//!
//! Every backend goes through [`check`], which completes and replays each
//! model before it is trusted. A model that does not satisfy the query is an
//! error, never a verdict.

mod brute;
mod external;

pub use brute::BruteForce;
pub use external::{ExternalProcess, ExternalSolverConfig};

use crate::array::{ArrayTables, ConstArrayTable};
use crate::bv::BitVecValue;
use crate::sim::{ArrayBase, ArrayValue, Pattern, Plan, SimError, Value};
use crate::term::{TermGraph, TermId};

/// One satisfiability question over a frozen graph.
#[derive(Clone, Copy)]
pub struct Query<'a> {
    pub graph: &'a TermGraph,
    /// Tables constraining array leaves of the query.
    pub tables: &'a ArrayTables,
    pub assumptions: TermId,
    pub goal: TermId,
}

impl<'a> Query<'a> {
    pub fn new(
        graph: &'a TermGraph,
        tables: &'a ArrayTables,
        assumptions: TermId,
        goal: TermId,
    ) -> Self {
        Self {
            graph,
            tables,
            assumptions,
            goal,
        }
    }

    pub fn roots(&self) -> [TermId; 2] {
        [self.assumptions, self.goal]
    }

    pub fn leaves(&self) -> Vec<TermId> {
        self.graph.leaves(&self.roots())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    Sat(Pattern),
    Unsat,
    Unknown(String),
}

impl OracleVerdict {
    pub fn kind(&self) -> VerdictKind {
        match self {
            OracleVerdict::Sat(_) => VerdictKind::Sat,
            OracleVerdict::Unsat => VerdictKind::Unsat,
            OracleVerdict::Unknown(_) => VerdictKind::Unknown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictKind {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("{backend} returned a model that does not satisfy the query")]
    InvalidModel { backend: String },
    #[error("{backend} returned a model that contradicts the table of {leaf}")]
    TableMismatch { backend: String, leaf: TermId },
    #[error("model replay failed: {0}")]
    Replay(#[from] SimError),
}

pub trait Oracle {
    fn name(&self) -> &str;

    /// Decides `assumptions ∧ goal`. Models may be partial; [`check`]
    /// completes and validates them.
    fn solve(&mut self, query: &Query<'_>) -> OracleVerdict;
}

/// Runs `oracle` on `query` and validates any model it returns.
pub fn check(oracle: &mut dyn Oracle, query: &Query<'_>) -> Result<OracleVerdict, OracleError> {
    match oracle.solve(query) {
        OracleVerdict::Sat(mut model) => {
            let leaves = query.leaves();
            model.complete_with_defaults(query.graph, &leaves, query.tables);
            validate_model(oracle.name(), query, &model)?;
            Ok(OracleVerdict::Sat(model))
        }
        other => Ok(other),
    }
}

/// Replays `model` and checks that it satisfies both roots and every table.
pub fn validate_model(
    backend: &str,
    query: &Query<'_>,
    model: &Pattern,
) -> Result<(), OracleError> {
    for (&leaf, table) in query.tables {
        if let Some(Value::Array(a)) = model.get(leaf) {
            if !respects_table(a, table) {
                return Err(OracleError::TableMismatch {
                    backend: backend.to_string(),
                    leaf,
                });
            }
        }
    }
    let plan = Plan::new(query.graph, &query.roots());
    let values = plan.run(query.graph, model)?;
    let holds = |t: TermId| {
        let slot = plan.slot(t).expect("root is in plan");
        values[slot].as_bv().is_some_and(BitVecValue::is_true)
    };
    if holds(query.assumptions) && holds(query.goal) {
        Ok(())
    } else {
        Err(OracleError::InvalidModel {
            backend: backend.to_string(),
        })
    }
}

/// True when `value` agrees with `table` at every index the table defines.
pub fn respects_table(value: &ArrayValue, table: &ConstArrayTable) -> bool {
    if let ArrayBase::Table(t) = &value.base {
        if t.entries == table.entries && t.default == table.default {
            return value
                .overlay
                .iter()
                .all(|(k, v)| table.get(k).is_none_or(|e| e == v));
        }
    }
    if table.index_width <= 16 {
        return (0..1u64 << table.index_width).all(|k| {
            let k = BitVecValue::from_u64(k, table.index_width);
            table.get(&k).is_none_or(|e| *e == value.read(&k))
        });
    }
    let defined = table.entries.keys().chain(value.overlay.keys());
    if !defined
        .into_iter()
        .all(|k| table.get(k).is_none_or(|e| *e == value.read(k)))
    {
        return false;
    }
    match (&table.default, &value.base) {
        (None, _) => true,
        (Some(d), ArrayBase::Constant(c)) => d == c,
        (Some(_), _) => false,
    }
}
