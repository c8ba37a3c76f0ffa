#![allow(dead_code)]

use pacc::models::{ModelInput, ModelKind, ModelSpec};
use pacc::nn::ParamStore;
use pacc::rng::RngStream;

/// Small dimensions for gradient checks and fast tests.
pub fn toy_spec(kind: ModelKind) -> ModelSpec {
    let mut spec = ModelSpec::new(kind, 7, 5, 12);
    spec.embedding = 3;
    spec.attention = 4;
    spec.filters = 3;
    spec.heads = 2;
    spec.rnn_hidden = 2;
    spec.dense = vec![4, 3];
    spec.fingerprint_width = 8;
    match kind {
        ModelKind::Scnn => {
            spec.kernel_widths = vec![3, 3];
            spec.scnn_channels = vec![3, 2];
        }
        ModelKind::Mca => spec.kernel_widths = vec![3, 5],
        _ => {}
    }
    spec
}

/// Random batch with trailing padding; every row keeps at least one token.
pub fn random_input(spec: &ModelSpec, batch: usize, seq_len: usize, seed: u64) -> ModelInput {
    let mut rng = RngStream::new(seed);
    let mut ids = Vec::new();
    let mut pad_mask = Vec::new();
    for _ in 0..if spec.kind.uses_smiles() { batch } else { 0 } {
        let len = 1 + rng.below(seq_len);
        for t in 0..seq_len {
            let pad = t >= len;
            pad_mask.push(pad);
            ids.push(if pad { 0 } else { 2 + rng.below(spec.vocab - 2) });
        }
    }
    let fingerprints = if spec.kind.uses_smiles() {
        Vec::new()
    } else {
        (0..batch * spec.fingerprint_width).map(|_| f64::from(rng.bernoulli(0.3) as u8)).collect()
    };
    let genes = (0..batch * spec.panel).map(|_| rng.normal()).collect();
    ModelInput {
        batch,
        seq_len: if spec.kind.uses_smiles() { seq_len } else { 0 },
        ids,
        pad_mask,
        fingerprints,
        genes,
    }
}

/// Same rows with `extra` additional pad positions appended to each.
pub fn pad_more(input: &ModelInput, extra: usize) -> ModelInput {
    let t = input.seq_len;
    let mut out = input.clone();
    out.seq_len = t + extra;
    out.ids.clear();
    out.pad_mask.clear();
    for r in 0..input.batch {
        out.ids.extend_from_slice(&input.ids[r * t..(r + 1) * t]);
        out.ids.extend(std::iter::repeat_n(0, extra));
        out.pad_mask.extend_from_slice(&input.pad_mask[r * t..(r + 1) * t]);
        out.pad_mask.extend(std::iter::repeat_n(true, extra));
    }
    out
}

pub fn targets(batch: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    (0..batch).map(|_| rng.uniform()).collect()
}

/// Spreads embedding rows to ±1 so token attention has a visible effect on
/// the loss; the default ±0.05 init leaves attention gradients near 1e-8,
/// where central differences are dominated by rounding.
pub fn spread_embeddings(store: &mut ParamStore<f64>) {
    let ids: Vec<_> = store.iter().filter(|(_, p)| p.name.ends_with("embedding.table")).map(|(id, _)| id).collect();
    for id in ids {
        store.value_mut(id).data_mut().iter_mut().for_each(|v| *v *= 20.0);
    }
}

pub const SMILES: [&str; 16] = [
    "CCO",
    "c1ccccc1O",
    "CC(=O)Oc1ccccc1C(=O)O",
    "CN1C=NC2=C1C(=O)N(C(=O)N2C)C",
    "CC(C)Cc1ccc(cc1)C(C)C(=O)O",
    "c1ccc2ccccc2c1",
    "CCN(CC)CC",
    "OC(=O)CCC(=O)O",
    "Clc1ccc(Cl)cc1",
    "CC(=O)Nc1ccc(O)cc1",
    "NC1CCCCC1",
    "COc1ccccc1",
    "O=C(O)c1ccncc1",
    "CCCCCCCC(=O)O",
    "c1ccoc1",
    "CS(N)(=O)=O",
];

/// Complete drugs x cells response table whose labels are a drug effect
/// plus a linear function of the cell's expression.
pub fn synthetic_dataset(n_drugs: usize, n_cells: usize, panel: usize, variants: usize, seed: u64) -> pacc::data::Dataset {
    use pacc::data::*;
    let mut rng = RngStream::new(seed);
    let drugs: Vec<(String, String)> = (0..n_drugs).map(|i| (format!("D{i:02}"), SMILES[i % SMILES.len()].to_string())).collect();
    let records = build_drug_records(&drugs, variants, seed, 2, 64).unwrap();
    let vocab = pacc::chem::Vocabulary::from_corpus(records.iter().flat_map(|r| r.variants.clone())).unwrap();
    let genes: Vec<String> = (0..panel).map(|g| format!("G{g}")).collect();
    let cells: Vec<CellRecord> = (0..n_cells)
        .map(|c| CellRecord { id: format!("C{c:02}"), expression: (0..panel).map(|_| 2.0 * rng.normal() + 5.0).collect() })
        .collect();
    let weights: Vec<f64> = (0..panel).map(|_| rng.normal()).collect();
    let effects: Vec<f64> = (0..n_drugs).map(|_| 2.0 * rng.normal()).collect();
    let mut pairs = Vec::new();
    for (d, (id, _)) in drugs.iter().enumerate() {
        for c in &cells {
            let x: f64 = c.expression.iter().zip(&weights).map(|(e, w)| (e - 5.0) * w).sum::<f64>() / panel as f64;
            pairs.push(PairSample { drug: id.clone(), cell: c.id.clone(), label: effects[d] + x });
        }
    }
    let max_len = records.iter().flat_map(|r| r.variants.iter()).map(|v| pacc::chem::tokenize(v).unwrap().len()).max().unwrap();
    Dataset::new(records, cells, pairs, genes, vocab, max_len).unwrap()
}

/// Toy spec sized to `ds`.
pub fn spec_for(kind: ModelKind, ds: &pacc::data::Dataset) -> ModelSpec {
    let mut spec = toy_spec(kind);
    spec.vocab = if kind.uses_smiles() { ds.vocab.len() } else { 0 };
    spec.panel = ds.panel.len();
    spec.max_len = if kind.uses_smiles() { ds.max_len } else { 0 };
    spec.fingerprint_width = 64;
    spec
}
