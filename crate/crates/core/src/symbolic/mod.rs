//! Symbolic objects: interval and modal descriptions of groups of stocks,
//! and the measures used to compare them.

mod aggregate;
mod dissimilarity;
mod normalize;
mod table;
mod value;

pub use aggregate::{
    aggregate, taxonomy_rollup, GroupKey, IndividualRow, Observation, OUTSIDE_GROUP, PORTFOLIO_GROUP,
};
pub use dissimilarity::{
    dissimilarity, dissimilarity_matrix, parse_dissimilarity, write_dissimilarity, DissimilaritySpec,
};
pub use normalize::{column_moments, normalize};
pub use table::{SymbolicTable, VariableDescriptor};
pub use value::{Interval, Modal, SymbolicValue, VariableKind, MODAL_SUM_TOL};
