//! Ingestion of drugs, expression profiles and responses; pairing,
//! normalization, split protocols and batch assembly.

mod batch;
mod ingest;
mod split;
mod transform;

pub use batch::{encode_variants, make_batches, Dataset, SampleRef, DEFAULT_BATCH_SIZE};
pub use ingest::{
    build_drug_records, load_drugs, load_expression, load_responses, pair_samples, CellRecord, DrugRecord, ExpressionTable,
    PairSample, ResponseRow,
};
pub use split::{lenient_split, strict_split, Fold, Protocol, SplitPlan, LENIENT_FOLDS, STRICT_FOLDS};
pub use transform::{ExpressionTransform, LabelTransform, STD_FLOOR};

use crate::chem::ChemError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: unknown drug id {id:?}")]
    UnknownDrugId { line: usize, id: String },
    #[error("line {line}: unknown cell id {id:?}")]
    UnknownCellId { line: usize, id: String },
    #[error("line {line}: pair ({drug}, {cell}) listed twice")]
    DuplicatePair { line: usize, drug: String, cell: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("gene {0:?} of the panel is missing from the expression table")]
    MissingGene(String),
    #[error("cell {cell}: {len} expression values for a panel of {panel}")]
    PanelLength { cell: String, len: usize, panel: usize },
    #[error("drug {drug}: {source}")]
    Smiles { drug: String, source: ChemError },
    #[error("drug {drug}: {len} tokens exceed the maximum length {max}")]
    SequenceTooLong { drug: String, len: usize, max: usize },
    #[error("{what}: quotas collapse to zero with {count} entities")]
    TooFewEntities { what: &'static str, count: usize },
    #[error("{0} pairs are too few to split")]
    TooFewPairs(usize),
    #[error("labels span a degenerate range")]
    DegenerateRange,
    #[error("{0} training cells are too few to standardize")]
    TooFewCells(usize),
    #[error("invalid split plan: {0}")]
    InvalidPlan(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        DataError::Io(e.to_string())
    }
}
