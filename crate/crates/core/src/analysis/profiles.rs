use std::collections::{BTreeMap, BTreeSet};

use super::AnalysisError;
use crate::chem::{tanimoto, Fingerprint};
use crate::data::Dataset;
use crate::train::{exact_mean, Checkpoint};

/// Eval-mode attention of one (drug, cell) pair. Token attention is the
/// mean over every head (and channel) and covers the drug's canonical
/// SMILES tokens only.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProfile {
    pub drug: String,
    pub cell: String,
    pub tokens: Vec<f64>,
    pub genes: Vec<f64>,
}

/// Which attention distribution distance matrices are built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Token,
    Gene,
}

const PROFILE_CHUNK: usize = 256;

/// Profiles for every combination of `drugs` and `cells`, drug-major.
pub fn collect_profiles(ckpt: &Checkpoint, ds: &Dataset, drugs: &[String], cells: &[String]) -> Result<Vec<AttentionProfile>, AnalysisError> {
    if !ckpt.spec.kind.has_token_attention() {
        return Err(AnalysisError::ModelWithoutAttention(ckpt.spec.kind.to_string()));
    }
    let model = ckpt.model()?;
    let d_idx = drugs.iter().map(|d| ds.drug_index(d).ok_or_else(|| AnalysisError::UnknownDrug(d.clone()))).collect::<Result<Vec<_>, _>>()?;
    let c_idx = cells.iter().map(|c| ds.cell_index(c).ok_or_else(|| AnalysisError::UnknownCell(c.clone()))).collect::<Result<Vec<_>, _>>()?;
    let combos: Vec<(usize, usize)> = d_idx.iter().flat_map(|&d| c_idx.iter().map(move |&c| (d, c))).collect();
    let mut out = Vec::with_capacity(combos.len());
    for chunk in combos.chunks(PROFILE_CHUNK) {
        let input = ds.entity_input(&ckpt.spec, chunk, &ckpt.expression)?;
        let fwd = model.predict(&input)?;
        let tokens = fwd.smiles_attention.ok_or_else(|| AnalysisError::ModelWithoutAttention(ckpt.spec.kind.to_string()))?;
        let genes = fwd.gene_attention.ok_or_else(|| AnalysisError::ModelWithoutAttention(ckpt.spec.kind.to_string()))?;
        let (heads, t) = (tokens.shape()[1], tokens.shape()[2]);
        let panel = genes.shape()[1];
        for (b, &(d, c)) in chunk.iter().enumerate() {
            let valid = input.pad_mask[b * t..(b + 1) * t].iter().filter(|&&p| !p).count();
            let maps = &tokens.data()[b * heads * t..(b + 1) * heads * t];
            let profile = (0..valid).map(|i| exact_mean(&(0..heads).map(|h| maps[h * t + i]).collect::<Vec<_>>())).collect();
            out.push(AttentionProfile {
                drug: ds.drugs[d].id.clone(),
                cell: ds.cells[c].id.clone(),
                tokens: profile,
                genes: genes.data()[b * panel..(b + 1) * panel].to_vec(),
            });
        }
    }
    Ok(out)
}

/// Pairwise Euclidean distances between one drug's per-cell profiles, with
/// cells in sorted id order.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub drug: String,
    pub cells: Vec<String>,
    /// Row-major, `cells.len()` squared.
    pub values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cells.len() + j]
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn drug_distance_matrix(profiles: &[AttentionProfile], drug: &str, kind: ProfileKind) -> Result<DistanceMatrix, AnalysisError> {
    let mut rows: Vec<&AttentionProfile> = profiles.iter().filter(|p| p.drug == drug).collect();
    rows.sort_by(|a, b| a.cell.cmp(&b.cell));
    if rows.len() < 2 {
        return Err(AnalysisError::InsufficientCells { drug: drug.to_string(), count: rows.len() });
    }
    let pick = |p: &AttentionProfile| match kind {
        ProfileKind::Token => p.tokens.clone(),
        ProfileKind::Gene => p.genes.clone(),
    };
    let vecs: Vec<Vec<f64>> = rows.iter().map(|p| pick(p)).collect();
    if vecs.iter().any(|v| v.len() != vecs[0].len()) {
        return Err(AnalysisError::ShapeMismatch(format!("profiles of drug {drug} differ in length")));
    }
    let n = rows.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = euclidean(&vecs[i], &vecs[j]);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { drug: drug.to_string(), cells: rows.iter().map(|p| p.cell.clone()).collect(), values })
}

pub fn frobenius_distance(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64, AnalysisError> {
    if a.values.len() != b.values.len() {
        return Err(AnalysisError::ShapeMismatch(format!("{} vs {} entries", a.values.len(), b.values.len())));
    }
    Ok(euclidean(&a.values, &b.values))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructurePair {
    pub drug_a: String,
    pub drug_b: String,
    pub frobenius: f64,
    pub tanimoto: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureCorrelation {
    /// NaN when either column is constant.
    pub pearson: f64,
    pub defined: bool,
    pub n: usize,
    pub pairs: Vec<StructurePair>,
}

impl StructureCorrelation {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("drug_a\tdrug_b\tfrobenius\ttanimoto\n");
        for p in &self.pairs {
            s.push_str(&format!("{}\t{}\t{}\t{}\n", p.drug_a, p.drug_b, p.frobenius, p.tanimoto));
        }
        s
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

/// Correlates distance-matrix dissimilarity with structural similarity over
/// every ordered drug pair, self-pairs included (n = drugs squared).
pub fn correlate_matrices(matrices: &[DistanceMatrix], fingerprints: &BTreeMap<String, Fingerprint>) -> Result<StructureCorrelation, AnalysisError> {
    if matrices.len() < 2 {
        return Err(AnalysisError::InsufficientDrugs(matrices.len()));
    }
    if let Some(m) = matrices.iter().find(|m| m.cells != matrices[0].cells) {
        return Err(AnalysisError::CellSetMismatch(m.drug.clone()));
    }
    let fp = |d: &str| fingerprints.get(d).ok_or_else(|| AnalysisError::UnknownDrug(d.to_string()));
    let mut pairs = Vec::with_capacity(matrices.len() * matrices.len());
    for a in matrices {
        for b in matrices {
            pairs.push(StructurePair {
                drug_a: a.drug.clone(),
                drug_b: b.drug.clone(),
                frobenius: frobenius_distance(a, b)?,
                tanimoto: tanimoto(fp(&a.drug)?, fp(&b.drug)?)?,
            });
        }
    }
    let f: Vec<f64> = pairs.iter().map(|p| p.frobenius).collect();
    let t: Vec<f64> = pairs.iter().map(|p| p.tanimoto).collect();
    let r = pearson(&f, &t);
    Ok(StructureCorrelation { pearson: r, defined: !r.is_nan(), n: pairs.len(), pairs })
}

/// Distance matrices for every drug in `profiles` (sorted by id), then
/// [`correlate_matrices`].
pub fn attention_structure_correlation(
    profiles: &[AttentionProfile],
    fingerprints: &BTreeMap<String, Fingerprint>,
    kind: ProfileKind,
) -> Result<StructureCorrelation, AnalysisError> {
    let drugs: BTreeSet<&str> = profiles.iter().map(|p| p.drug.as_str()).collect();
    let matrices = drugs.into_iter().map(|d| drug_distance_matrix(profiles, d, kind)).collect::<Result<Vec<_>, _>>()?;
    correlate_matrices(&matrices, fingerprints)
}

/// Panel genes whose mean attention over all profiles is at least 1/K,
/// with that mean, in panel order.
pub fn aggregate_gene_attention(profiles: &[AttentionProfile], panel: &[String]) -> Result<Vec<(String, f64)>, AnalysisError> {
    let k = panel.len();
    if profiles.iter().any(|p| p.genes.len() != k) {
        return Err(AnalysisError::ShapeMismatch(format!("gene attention does not match a panel of {k}")));
    }
    if profiles.is_empty() {
        return Ok(Vec::new());
    }
    let threshold = 1.0 / k as f64;
    Ok(panel
        .iter()
        .enumerate()
        .map(|(g, name)| (name.clone(), exact_mean(&profiles.iter().map(|p| p.genes[g]).collect::<Vec<_>>())))
        .filter(|(_, a)| !(*a < threshold))
        .collect())
}
