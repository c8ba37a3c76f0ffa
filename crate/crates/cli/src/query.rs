use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use pacc::chem::{canonical_form, morgan_fingerprint, parse_smiles, tokenize, ChemError, Vocabulary, DEFAULT_RADIUS};
use pacc::data::{CellRecord, Dataset, DrugRecord, ExpressionTable};
use pacc::models::Model;
use pacc::train::{exact_mean, Checkpoint};

pub const DEFAULT_TOP_K_GENES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub smiles: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k_genes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weighted {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub ic50_log: f64,
    pub ic50_normalized: f64,
    /// Highest-weighted panel genes, ties in panel order. Empty for models
    /// without gene attention.
    pub gene_attention: Vec<Weighted>,
    /// Canonical SMILES tokens with head-averaged attention. Empty for
    /// models without token attention.
    pub token_attention: Vec<Weighted>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("invalid SMILES: {0}")]
    InvalidSmiles(ChemError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown cell id {0:?}")]
    UnknownCell(String),
    #[error("{got} expression values for a panel of {expected}")]
    PanelLength { got: usize, expected: usize },
    #[error("prediction failed: {0}")]
    Internal(String),
}

/// A loaded checkpoint with the expression table restricted to its panel.
/// Immutable once built, so one instance can serve concurrent requests.
#[derive(Debug)]
pub struct Predictor {
    ckpt: Checkpoint,
    model: Model<f32>,
    vocab: Vocabulary,
    cells: BTreeMap<String, Vec<f64>>,
    hash: String,
}

impl Predictor {
    pub fn new(ckpt: Checkpoint, expression: &ExpressionTable) -> Result<Self, crate::CliError> {
        let cells = expression.restrict(&ckpt.panel)?.into_iter().map(|c| (c.id, c.expression)).collect();
        Ok(Predictor { model: ckpt.model()?, vocab: ckpt.vocabulary(), hash: ckpt.hash(), cells, ckpt })
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.ckpt
    }

    pub fn checkpoint_hash(&self) -> &str {
        &self.hash
    }

    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, QueryError> {
        let spec = &self.ckpt.spec;
        let expression = match (&req.cell_id, &req.expression) {
            (Some(id), None) => self.cells.get(id).cloned().ok_or_else(|| QueryError::UnknownCell(id.clone()))?,
            (None, Some(v)) => {
                if v.len() != self.ckpt.panel.len() {
                    return Err(QueryError::PanelLength { got: v.len(), expected: self.ckpt.panel.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(QueryError::InvalidRequest("expression values must be finite".into()));
                }
                v.clone()
            }
            _ => return Err(QueryError::InvalidRequest("give exactly one of cell_id and expression".into())),
        };
        let top_k = req.top_k_genes.unwrap_or(DEFAULT_TOP_K_GENES);
        let graph = parse_smiles(&req.smiles).map_err(QueryError::InvalidSmiles)?;
        let canonical = canonical_form(&graph);
        let tokens = tokenize(&canonical).map_err(QueryError::InvalidSmiles)?;
        let max_len = if spec.kind.uses_smiles() { spec.max_len } else { 0 };
        if spec.kind.uses_smiles() && tokens.len() > max_len {
            return Err(QueryError::InvalidRequest(format!("{} tokens exceed the model's maximum of {max_len}", tokens.len())));
        }
        let drug = DrugRecord {
            id: "query".into(),
            smiles: req.smiles.clone(),
            fingerprint: morgan_fingerprint(&graph, DEFAULT_RADIUS, spec.fingerprint_width).map_err(QueryError::InvalidSmiles)?,
            variants: vec![canonical.clone()],
            canonical,
            top_genes: Vec::new(),
        };
        let cell = CellRecord { id: "query".into(), expression };
        let internal = |e: &dyn std::fmt::Display| QueryError::Internal(e.to_string());
        let ds = Dataset::new(vec![drug], vec![cell], Vec::new(), self.ckpt.panel.clone(), self.vocab.clone(), max_len)
            .map_err(|e| internal(&e))?;
        let input = ds.entity_input(spec, &[(0, 0)], &self.ckpt.expression).map_err(|e| internal(&e))?;
        let fwd = self.model.predict(&input).map_err(|e| internal(&e))?;
        let normalized = fwd.prediction[0];

        let mut gene_attention: Vec<Weighted> = fwd
            .gene_attention
            .map(|g| self.ckpt.panel.iter().zip(g.data()).map(|(name, &weight)| Weighted { name: name.clone(), weight }).collect())
            .unwrap_or_default();
        // stable sort keeps panel order among ties
        gene_attention.sort_by(|a, b| b.weight.total_cmp(&a.weight));
        gene_attention.truncate(top_k);

        let token_attention = match fwd.smiles_attention {
            Some(att) => {
                let (heads, t) = (att.shape()[1], att.shape()[2]);
                let maps = att.data();
                tokens
                    .iter()
                    .enumerate()
                    .map(|(i, tok)| Weighted { name: tok.clone(), weight: exact_mean(&(0..heads).map(|h| maps[h * t + i]).collect::<Vec<_>>()) })
                    .collect()
            }
            None => Vec::new(),
        };
        Ok(PredictResponse { ic50_log: self.ckpt.labels.invert(normalized), ic50_normalized: normalized, gene_attention, token_attention })
    }
}
