use std::collections::{BTreeSet, HashMap};

use super::{CellRecord, DataError, DrugRecord, ExpressionTransform, LabelTransform, PairSample};
use crate::chem::{tokenize, TokenSequence, Vocabulary};
use crate::models::{ModelError, ModelInput, ModelSpec};
use crate::rng::RngStream;

pub const DEFAULT_BATCH_SIZE: usize = 2048;

/// One training sample: a pair shown with one of its drug's SMILES variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub pair: usize,
    pub variant: usize,
}

/// Encodes every stored variant of `drug`, padded to `max_len`. Sequences
/// longer than `max_len` are an error rather than being cut.
pub fn encode_variants(drug: &DrugRecord, vocab: &Vocabulary, max_len: usize) -> Result<Vec<TokenSequence>, DataError> {
    drug.variants
        .iter()
        .map(|v| {
            let len = tokenize(v).map_err(|source| DataError::Smiles { drug: drug.id.clone(), source })?.len();
            if len > max_len {
                return Err(DataError::SequenceTooLong { drug: drug.id.clone(), len, max: max_len });
            }
            vocab.encode(v, Some(max_len)).map_err(|source| DataError::Smiles { drug: drug.id.clone(), source })
        })
        .collect()
}

/// Expands `pairs` into samples (every variant when `augment`, else the
/// canonical one), shuffles them with `rng` and cuts batches of
/// `batch_size`, keeping the final short batch. `variant_counts[i]` is the
/// number of variants available to `pairs[i]`.
pub fn make_batches(pairs: &[usize], variant_counts: &[usize], batch_size: usize, augment: bool, rng: &mut RngStream) -> Vec<Vec<SampleRef>> {
    assert_eq!(pairs.len(), variant_counts.len(), "one variant count per pair");
    assert!(batch_size > 0, "batch size must be positive");
    let mut samples: Vec<SampleRef> = pairs
        .iter()
        .zip(variant_counts)
        .flat_map(|(&pair, &n)| (0..if augment { n.max(1) } else { 1 }).map(move |variant| SampleRef { pair, variant }))
        .collect();
    rng.shuffle(&mut samples);
    samples.chunks(batch_size).map(<[SampleRef]>::to_vec).collect()
}

/// Drugs, cells and observed pairs with pre-encoded token sequences.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub drugs: Vec<DrugRecord>,
    pub cells: Vec<CellRecord>,
    pub pairs: Vec<PairSample>,
    /// Gene ids in the order of every cell's expression vector.
    pub panel: Vec<String>,
    pub vocab: Vocabulary,
    pub max_len: usize,
    drug_of: Vec<usize>,
    cell_of: Vec<usize>,
    sequences: Vec<Vec<TokenSequence>>,
}

impl Dataset {
    /// With `max_len` 0 no sequences are encoded (fingerprint models).
    pub fn new(
        drugs: Vec<DrugRecord>,
        cells: Vec<CellRecord>,
        pairs: Vec<PairSample>,
        panel: Vec<String>,
        vocab: Vocabulary,
        max_len: usize,
    ) -> Result<Self, DataError> {
        if let Some(c) = cells.iter().find(|c| c.expression.len() != panel.len()) {
            return Err(DataError::PanelLength { cell: c.id.clone(), len: c.expression.len(), panel: panel.len() });
        }
        let drug_index: HashMap<&str, usize> = drugs.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
        let cell_index: HashMap<&str, usize> = cells.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
        let mut drug_of = Vec::with_capacity(pairs.len());
        let mut cell_of = Vec::with_capacity(pairs.len());
        for p in &pairs {
            drug_of.push(*drug_index.get(p.drug.as_str()).ok_or_else(|| DataError::UnknownDrugId { line: 0, id: p.drug.clone() })?);
            cell_of.push(*cell_index.get(p.cell.as_str()).ok_or_else(|| DataError::UnknownCellId { line: 0, id: p.cell.clone() })?);
        }
        let sequences = if max_len == 0 {
            vec![Vec::new(); drugs.len()]
        } else {
            drugs.iter().map(|d| encode_variants(d, &vocab, max_len)).collect::<Result<_, _>>()?
        };
        Ok(Dataset { drugs, cells, pairs, panel, vocab, max_len, drug_of, cell_of, sequences })
    }

    pub fn drug(&self, pair: usize) -> &DrugRecord {
        &self.drugs[self.drug_of[pair]]
    }

    pub fn cell(&self, pair: usize) -> &CellRecord {
        &self.cells[self.cell_of[pair]]
    }

    pub fn variant_count(&self, pair: usize) -> usize {
        self.drug(pair).variants.len().max(1)
    }

    pub fn batches(&self, pairs: &[usize], batch_size: usize, augment: bool, rng: &mut RngStream) -> Vec<Vec<SampleRef>> {
        let counts: Vec<usize> = pairs.iter().map(|&p| self.variant_count(p)).collect();
        make_batches(pairs, &counts, batch_size, augment, rng)
    }

    /// Canonical-variant samples for `pairs`, in order.
    pub fn canonical(pairs: &[usize]) -> Vec<SampleRef> {
        pairs.iter().map(|&pair| SampleRef { pair, variant: 0 }).collect()
    }

    /// Label and expression transforms fitted on the training pairs (each
    /// training cell counted once).
    pub fn fit_transforms(&self, train: &[usize]) -> Result<(LabelTransform, ExpressionTransform), DataError> {
        let labels: Vec<f64> = train.iter().map(|&p| self.pairs[p].label).collect();
        let cells: BTreeSet<usize> = train.iter().map(|&p| self.cell_of[p]).collect();
        let rows: Vec<&[f64]> = cells.iter().map(|&c| self.cells[c].expression.as_slice()).collect();
        Ok((LabelTransform::fit(&labels)?, ExpressionTransform::fit(&rows)?))
    }

    /// Model input for `samples` with standardized expression. Token
    /// sequences are cut to the longest one in the batch; trailing pads do
    /// not change model outputs.
    pub fn input(&self, spec: &ModelSpec, samples: &[SampleRef], expression: &ExpressionTransform) -> Result<ModelInput, ModelError> {
        let items: Vec<(usize, usize, usize)> = samples.iter().map(|s| (self.drug_of[s.pair], self.cell_of[s.pair], s.variant)).collect();
        self.assemble(spec, &items, expression)
    }

    /// Model input for arbitrary (drug, cell) index combinations, observed
    /// or not, using canonical SMILES.
    pub fn entity_input(&self, spec: &ModelSpec, combos: &[(usize, usize)], expression: &ExpressionTransform) -> Result<ModelInput, ModelError> {
        let items: Vec<(usize, usize, usize)> = combos.iter().map(|&(d, c)| (d, c, 0)).collect();
        self.assemble(spec, &items, expression)
    }

    pub fn drug_index(&self, id: &str) -> Option<usize> {
        self.drugs.iter().position(|d| d.id == id)
    }

    pub fn cell_index(&self, id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.id == id)
    }

    fn assemble(&self, spec: &ModelSpec, items: &[(usize, usize, usize)], expression: &ExpressionTransform) -> Result<ModelInput, ModelError> {
        let genes: Vec<Vec<f64>> = items.iter().map(|&(_, c, _)| expression.apply(&self.cells[c].expression)).collect();
        if !spec.kind.uses_smiles() {
            let fps: Vec<_> = items.iter().map(|&(d, _, _)| self.drugs[d].fingerprint.clone()).collect();
            return ModelInput::from_fingerprints(&fps, &genes);
        }
        let seqs = items
            .iter()
            .map(|&(d, _, v)| {
                self.sequences[d]
                    .get(v)
                    .ok_or_else(|| ModelError::InvalidInput(format!("no SMILES variant {v} for drug {}", self.drugs[d].id)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let width = seqs.iter().map(|s| s.valid_len()).max().unwrap_or(0);
        let trimmed: Vec<TokenSequence> = seqs
            .iter()
            .map(|s| TokenSequence { tokens: s.tokens[..width].to_vec(), ids: s.ids[..width].to_vec(), pad_mask: s.pad_mask[..width].to_vec() })
            .collect();
        ModelInput::from_sequences(&trimmed, &genes)
    }

    pub fn targets(&self, samples: &[SampleRef], labels: &LabelTransform) -> Vec<f64> {
        samples.iter().map(|s| labels.apply(self.pairs[s.pair].label)).collect()
    }

    pub fn labels(&self, pairs: &[usize]) -> Vec<f64> {
        pairs.iter().map(|&p| self.pairs[p].label).collect()
    }
}
