use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use super::DataError;
use crate::chem::{augment, canonical_form, morgan_fingerprint, parse_smiles, Fingerprint};

/// Expression matrix with cells as rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTable {
    pub genes: Vec<String>,
    pub cells: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl ExpressionTable {
    pub fn cell_index(&self, id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c == id)
    }

    /// Cell records restricted to `panel`, in panel order.
    pub fn restrict(&self, panel: &[String]) -> Result<Vec<CellRecord>, DataError> {
        let index: HashMap<&str, usize> = self.genes.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let cols = panel
            .iter()
            .map(|g| index.get(g.as_str()).copied().ok_or_else(|| DataError::MissingGene(g.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self
            .cells
            .iter()
            .zip(&self.values)
            .map(|(id, row)| CellRecord { id: id.clone(), expression: cols.iter().map(|&c| row[c]).collect() })
            .collect())
    }
}

fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), DataError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(e.into())),
        Ok(l) => {
            let l = l.trim_end_matches('\r').to_string();
            (!l.trim().is_empty() && !l.starts_with('#')).then_some(Ok((i + 1, l)))
        }
    })
}

/// Reads a TSV whose header is `cell_id<TAB>gene...` and whose rows hold one
/// cell each. Missing or non-finite values are rejected.
pub fn load_expression<R: BufRead>(reader: R) -> Result<ExpressionTable, DataError> {
    let mut lines = data_lines(reader);
    let (hline, header) = lines.next().ok_or(DataError::MalformedRow { line: 1, reason: "empty expression table".into() })??;
    let genes: Vec<String> = header.split('\t').skip(1).map(|g| g.trim().to_string()).collect();
    if genes.is_empty() {
        return Err(DataError::MalformedRow { line: hline, reason: "header lists no genes".into() });
    }
    let mut seen = HashSet::new();
    for g in &genes {
        if !seen.insert(g.clone()) {
            return Err(DataError::DuplicateId(g.clone()));
        }
    }
    let mut cells = Vec::new();
    let mut values = Vec::new();
    let mut cell_seen = HashSet::new();
    for item in lines {
        let (line, text) = item?;
        let mut fields = text.split('\t');
        let id = fields.next().unwrap_or("").trim().to_string();
        let row: Vec<f64> = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| DataError::MalformedRow { line, reason: format!("missing or invalid value {f:?}") })
            })
            .collect::<Result<_, _>>()?;
        if row.len() != genes.len() {
            return Err(DataError::MalformedRow { line, reason: format!("{} values for {} genes", row.len(), genes.len()) });
        }
        if !cell_seen.insert(id.clone()) {
            return Err(DataError::DuplicateId(id));
        }
        cells.push(id);
        values.push(row);
    }
    Ok(ExpressionTable { genes, cells, values })
}

/// One observed response.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRow {
    pub line: usize,
    pub drug: String,
    pub cell: String,
    /// log-IC50 (log micromolar).
    pub label: f64,
}

/// Reads `drug_id<TAB>cell_id<TAB>log_ic50`. A first line whose third field
/// is not numeric is treated as a header.
pub fn load_responses<R: BufRead>(reader: R) -> Result<Vec<ResponseRow>, DataError> {
    let mut out = Vec::new();
    for (n, item) in data_lines(reader).enumerate() {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(DataError::MalformedRow { line, reason: format!("expected 3 columns, got {}", fields.len()) });
        }
        let label = match fields[2].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ if n == 0 => continue,
            _ => return Err(DataError::MalformedRow { line, reason: format!("invalid log-IC50 {:?}", fields[2]) }),
        };
        out.push(ResponseRow { line, drug: fields[0].to_string(), cell: fields[1].to_string(), label });
    }
    Ok(out)
}

/// Reads `drug_id<TAB>smiles`; a first line `drug_id<TAB>...` is a header.
pub fn load_drugs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>, DataError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, item) in data_lines(reader).enumerate() {
        let (line, text) = item?;
        let Some((id, smiles)) = text.split_once('\t') else {
            return Err(DataError::MalformedRow { line, reason: "expected drug_id<TAB>smiles".into() });
        };
        let (id, smiles) = (id.trim(), smiles.trim());
        if n == 0 && id == "drug_id" {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(DataError::DuplicateId(id.to_string()));
        }
        out.push((id.to_string(), smiles.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrugRecord {
    pub id: String,
    pub smiles: String,
    pub canonical: String,
    pub fingerprint: Fingerprint,
    /// SMILES variants with the canonical string first.
    pub variants: Vec<String>,
    /// Top propagated genes for this drug, when a panel was built for it.
    pub top_genes: Vec<String>,
}

/// Parses each drug, computes its fingerprint and `n_variants` SMILES
/// strings (canonical first). Variant seeds are derived from `seed` and the
/// drug's position.
pub fn build_drug_records(
    drugs: &[(String, String)],
    n_variants: usize,
    seed: u64,
    fp_radius: usize,
    fp_width: usize,
) -> Result<Vec<DrugRecord>, DataError> {
    drugs
        .iter()
        .enumerate()
        .map(|(i, (id, smiles))| {
            let wrap = |source| DataError::Smiles { drug: id.clone(), source };
            let g = parse_smiles(smiles).map_err(wrap)?;
            let fingerprint = morgan_fingerprint(&g, fp_radius, fp_width).map_err(wrap)?;
            let variant_seed = crate::chem::mix_hash(&[seed, i as u64]);
            Ok(DrugRecord {
                id: id.clone(),
                smiles: smiles.clone(),
                canonical: canonical_form(&g),
                fingerprint,
                variants: augment(&g, n_variants.max(1), variant_seed),
                top_genes: Vec::new(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub id: String,
    /// Values over the gene panel, in panel order.
    pub expression: Vec<f64>,
}

/// An observed (drug, cell) response.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub drug: String,
    pub cell: String,
    /// log-IC50.
    pub label: f64,
}

/// Turns observed responses into pairs, rejecting unknown ids and repeated
/// pairs. Unobserved combinations simply produce no pair.
pub fn pair_samples(drug_ids: &[String], cell_ids: &[String], responses: &[ResponseRow]) -> Result<Vec<PairSample>, DataError> {
    let drugs: HashSet<&str> = drug_ids.iter().map(String::as_str).collect();
    let cells: HashSet<&str> = cell_ids.iter().map(String::as_str).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(responses.len());
    for r in responses {
        if !drugs.contains(r.drug.as_str()) {
            return Err(DataError::UnknownDrugId { line: r.line, id: r.drug.clone() });
        }
        if !cells.contains(r.cell.as_str()) {
            return Err(DataError::UnknownCellId { line: r.line, id: r.cell.clone() });
        }
        if !seen.insert((r.drug.as_str(), r.cell.as_str())) {
            return Err(DataError::DuplicatePair { line: r.line, drug: r.drug.clone(), cell: r.cell.clone() });
        }
        out.push(PairSample { drug: r.drug.clone(), cell: r.cell.clone(), label: r.label });
    }
    Ok(out)
}
