//! Interpretability pipelines: attention profiles, distance matrices and
//! their correlation with structural similarity, gene-attention
//! aggregation and over-representation analysis.

mod enrichment;
mod profiles;

pub use enrichment::{benjamini_hochberg, enrichment_tsv, hypergeometric_upper_tail, ora_enrichment, parse_gmt, EnrichmentResult, GeneSet};
pub use profiles::{
    aggregate_gene_attention, attention_structure_correlation, collect_profiles, correlate_matrices, drug_distance_matrix,
    frobenius_distance, AttentionProfile, DistanceMatrix, ProfileKind, StructureCorrelation, StructurePair,
};

use crate::chem::ChemError;
use crate::models::ModelError;
use crate::train::TrainError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("{0} models emit no token attention")]
    ModelWithoutAttention(String),
    #[error("drug {drug}: {count} cell profiles, need at least 2")]
    InsufficientCells { drug: String, count: usize },
    #[error("{0} drugs, need at least 2")]
    InsufficientDrugs(usize),
    #[error("distance matrix of drug {0} covers a different cell set")]
    CellSetMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown drug {0:?}")]
    UnknownDrug(String),
    #[error("unknown cell {0:?}")]
    UnknownCell(String),
    #[error("gene universe is empty")]
    EmptyUniverse,
    #[error("line {line}: expected set_id<TAB>description<TAB>genes")]
    MalformedGmt { line: usize },
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}
