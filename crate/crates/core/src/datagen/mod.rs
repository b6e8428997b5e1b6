//! Dataset generation: axioms, local mutations, rewrite-table generation of
//! correct identities, function-evaluation data and dataset splits.

mod axioms;
mod dataset;
mod funceval;
mod generate;
mod mutate;
mod rewrite;

use thiserror::Error;

pub use axioms::{AxiomSet, DEFAULT_AXIOMS};
pub use dataset::{Dataset, Provenance, Record, Split, SplitMode, Stats};
pub use funceval::{generate_func_eval, perturb_result};
pub use generate::{generate, generate_symbolic, GenConfig, GenReport};
pub use mutate::{Action, Mutator};
pub use rewrite::{rewrite_once, RewriteTable};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("axiom file line {line}: {msg}")]
    Axiom { line: usize, msg: String },
    #[error("dataset line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("no valid mutation found after {0} attempts")]
    MutationExhausted(usize),
    #[error("a split side is empty")]
    EmptySplit,
    #[error("generation targets unreachable: {0}")]
    Unreachable(String),
    #[error("invalid generation config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
