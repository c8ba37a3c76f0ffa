//! Gene-panel selection by diffusing drug-target weights over a weighted
//! protein-interaction network.
//!
//! Propagation iterates `W[t+1] = alpha * W[t] A' + (1 - alpha) * W[0]` with
//! the symmetric normalisation `A' = D^-1/2 A D^-1/2`. Isolated nodes get a
//! zero row in `A'`. Arithmetic is always `f64`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use nalgebra::{DMatrix, DVector};

pub const DEFAULT_ALPHA: f64 = 0.7;
pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_TARGET_WEIGHT: f64 = 1.0;
pub const DEFAULT_BACKGROUND: f64 = 1e-5;
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetpropError {
    #[error("line {line}: negative edge weight {weight}")]
    NegativeWeight { line: usize, weight: f64 },
    #[error("line {line}: self-loop on {gene}")]
    SelfLoop { line: usize, gene: String },
    #[error("line {line}: malformed row ({reason})")]
    MalformedRow { line: usize, reason: String },
    #[error("k = {k} exceeds the {nodes} network nodes")]
    KTooLarge { k: usize, nodes: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("weight vector has {got} entries, network has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("fixed-point system is singular")]
    SingularSystem,
    #[error("no drug has a target inside the network")]
    NoUsableDrugs,
    #[error("read error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NetpropError {
    fn from(e: std::io::Error) -> Self {
        NetpropError::Io(e.to_string())
    }
}

/// Undirected weighted network in compressed sparse-row form.
#[derive(Debug, Clone)]
pub struct PpiNetwork {
    genes: Vec<String>,
    index: HashMap<String, usize>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    degree: Vec<f64>,
}

/// One parsed edge-list row.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: String,
    pub b: String,
    pub weight: f64,
}

impl PpiNetwork {
    /// Builds the network from edges. Duplicate undirected edges keep the
    /// maximum weight; node order is first appearance.
    pub fn from_edges<I>(edges: I) -> Result<Self, NetpropError>
    where
        I: IntoIterator<Item = (usize, Edge)>,
    {
        let mut genes: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        let mut intern = |g: &str, genes: &mut Vec<String>| -> usize {
            if let Some(&i) = index.get(g) {
                return i;
            }
            genes.push(g.to_string());
            index.insert(g.to_string(), genes.len() - 1);
            genes.len() - 1
        };
        for (line, e) in edges {
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                if e.weight < 0.0 {
                    return Err(NetpropError::NegativeWeight { line, weight: e.weight });
                }
                return Err(NetpropError::MalformedRow { line, reason: format!("weight {}", e.weight) });
            }
            if e.a == e.b {
                return Err(NetpropError::SelfLoop { line, gene: e.a });
            }
            let i = intern(&e.a, &mut genes);
            let j = intern(&e.b, &mut genes);
            let key = (i.min(j), i.max(j));
            let w = weights.entry(key).or_insert(e.weight);
            *w = w.max(e.weight);
        }
        let n = genes.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (&(i, j), &w) in &weights {
            rows[i].push((j, w));
            rows[j].push((i, w));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut degree = Vec::with_capacity(n);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            degree.push(row.iter().map(|&(_, w)| w).sum());
            for (c, w) in row {
                cols.push(c);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }
        let index = genes.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        Ok(PpiNetwork { genes, index, row_ptr, cols, vals, degree })
    }

    pub fn node_count(&self) -> usize {
        self.genes.len()
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn gene_index(&self, gene: &str) -> Option<usize> {
        self.index.get(gene).copied()
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    /// Stored weight between two nodes (0 when absent).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.vals[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (self.cols[p], self.vals[p]))
    }
}

/// Reads a TSV edge list `gene_a<TAB>gene_b<TAB>weight`. A leading header
/// row whose third column is not numeric is skipped.
pub fn load_ppi<R: BufRead>(reader: R) -> Result<PpiNetwork, NetpropError> {
    let mut edges = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 3 {
            return Err(NetpropError::MalformedRow {
                line: line_no,
                reason: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let weight = match fields[2].trim().parse::<f64>() {
            Ok(w) => w,
            Err(_) if line_no == 1 => continue,
            Err(_) => {
                return Err(NetpropError::MalformedRow {
                    line: line_no,
                    reason: format!("weight {:?} is not a number", fields[2]),
                })
            }
        };
        edges.push((line_no, Edge { a: fields[0].trim().to_string(), b: fields[1].trim().to_string(), weight }));
    }
    PpiNetwork::from_edges(edges)
}

/// Symmetrically normalised adjacency in the network's sparse layout.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.vals[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.row_ptr.len() - 1;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.cols[p])] = self.vals[p];
            }
        }
        m
    }

    /// Row-vector product `w A'`.
    fn left_multiply(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                out[self.cols[p]] += wi * self.vals[p];
            }
        }
    }
}

pub fn normalize_adjacency(net: &PpiNetwork) -> NormalizedAdjacency {
    let inv_sqrt: Vec<f64> = net
        .degree
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut vals = Vec::with_capacity(net.vals.len());
    for i in 0..net.node_count() {
        for (j, w) in net.row(i) {
            vals.push(inv_sqrt[i] * w * inv_sqrt[j]);
        }
    }
    NormalizedAdjacency { row_ptr: net.row_ptr.clone(), cols: net.cols.clone(), vals }
}

/// Per-gene non-negative weights in network node order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_abs_diff(&self, other: &WeightVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Targets get `target_weight`, everything else `background`. Returns the
/// vector and the number of targets missing from the network.
pub fn initial_weights<S: AsRef<str>>(
    net: &PpiNetwork,
    targets: &[S],
    target_weight: f64,
    background: f64,
) -> (WeightVector, usize) {
    let mut w = vec![background; net.node_count()];
    let mut missing = 0;
    for t in targets {
        match net.gene_index(t.as_ref()) {
            Some(i) => w[i] = target_weight,
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{missing} target gene(s) not present in the network were skipped");
    }
    (WeightVector(w), missing)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationResult {
    pub weights: WeightVector,
    pub iterations: usize,
    /// Max-norm of the last update `W[t+1] - W[t]`.
    pub final_residual: f64,
    pub converged: bool,
}

/// Iterates the propagation rule until the max-norm residual drops below
/// `tol` or `max_iter` updates have been made. Non-convergence is reported
/// through `converged = false`.
pub fn propagate(
    net: &PpiNetwork,
    w0: &WeightVector,
    alpha: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PropagationResult, NetpropError> {
    check_inputs(net, w0, alpha)?;
    if !(tol > 0.0) {
        return Err(NetpropError::InvalidTolerance(tol));
    }
    let a = normalize_adjacency(net);
    let restart: Vec<f64> = w0.0.iter().map(|&x| (1.0 - alpha) * x).collect();
    let mut w = w0.0.clone();
    let mut next = vec![0.0; w.len()];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        a.left_multiply(&w, &mut next);
        residual = 0.0;
        for j in 0..next.len() {
            let v = alpha * next[j] + restart[j];
            residual = f64::max(residual, (v - w[j]).abs());
            next[j] = v;
        }
        std::mem::swap(&mut w, &mut next);
        iterations += 1;
        if residual < tol {
            break;
        }
    }
    let converged = residual < tol;
    if !converged {
        log::warn!("propagation stopped after {iterations} iterations with residual {residual:e}");
    }
    Ok(PropagationResult { weights: WeightVector(w), iterations, final_residual: residual, converged })
}

fn check_inputs(net: &PpiNetwork, w0: &WeightVector, alpha: f64) -> Result<(), NetpropError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(NetpropError::InvalidAlpha(alpha));
    }
    if w0.len() != net.node_count() {
        return Err(NetpropError::LengthMismatch { expected: net.node_count(), got: w0.len() });
    }
    Ok(())
}

/// Direct dense solution of `W (I - alpha A') = (1 - alpha) W0`.
pub fn solve_fixed_point(net: &PpiNetwork, w0: &WeightVector, alpha: f64) -> Result<WeightVector, NetpropError> {
    check_inputs(net, w0, alpha)?;
    let n = net.node_count();
    let a = normalize_adjacency(net).to_dense();
    // A' is symmetric, so the row-vector system transposes to (I - alpha A') x = rhs
    let system = DMatrix::<f64>::identity(n, n) - a.transpose() * alpha;
    let rhs = DVector::from_iterator(n, w0.0.iter().map(|&x| (1.0 - alpha) * x));
    let lu = system.lu();
    if !lu.is_invertible() {
        return Err(NetpropError::SingularSystem);
    }
    let x = lu.solve(&rhs).ok_or(NetpropError::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NetpropError::SingularSystem);
    }
    Ok(WeightVector(x.iter().copied().collect()))
}

/// Indices of the `k` largest weights, ties broken by gene id.
pub fn top_k_genes(net: &PpiNetwork, w: &WeightVector, k: usize) -> Result<Vec<usize>, NetpropError> {
    if k == 0 {
        return Err(NetpropError::ZeroK);
    }
    if k > net.node_count() {
        return Err(NetpropError::KTooLarge { k, nodes: net.node_count() });
    }
    let mut idx: Vec<usize> = (0..net.node_count()).collect();
    idx.sort_by(|&i, &j| {
        w.0[j]
            .total_cmp(&w.0[i])
            .then_with(|| net.genes[i].cmp(&net.genes[j]))
    });
    idx.truncate(k);
    Ok(idx)
}

/// Union of per-drug top-k propagated genes.
#[derive(Debug, Clone, PartialEq)]
pub struct GenePanel {
    /// Sorted, deduplicated gene ids.
    pub genes: Vec<String>,
    pub per_drug_topk: BTreeMap<String, Vec<String>>,
    /// Drugs without any in-network target.
    pub skipped: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationParams {
    pub alpha: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub target_weight: f64,
    pub background: f64,
    pub k: usize,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            alpha: DEFAULT_ALPHA,
            tol: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            target_weight: DEFAULT_TARGET_WEIGHT,
            background: DEFAULT_BACKGROUND,
            k: DEFAULT_TOP_K,
        }
    }
}

/// Runs propagation and top-k selection for each drug, in drug-id order.
pub fn build_panel(
    net: &PpiNetwork,
    target_map: &BTreeMap<String, Vec<String>>,
    params: &PropagationParams,
) -> Result<GenePanel, NetpropError> {
    let mut per_drug_topk = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut union = BTreeSet::new();
    for (drug, targets) in target_map {
        if !targets.iter().any(|t| net.gene_index(t).is_some()) {
            log::warn!("drug {drug}: no target inside the network, skipped");
            skipped.push(drug.clone());
            continue;
        }
        let (w0, _) = initial_weights(net, targets, params.target_weight, params.background);
        let result = propagate(net, &w0, params.alpha, params.tol, params.max_iter)?;
        let top: Vec<String> = top_k_genes(net, &result.weights, params.k)?
            .into_iter()
            .map(|i| net.genes[i].clone())
            .collect();
        union.extend(top.iter().cloned());
        per_drug_topk.insert(drug.clone(), top);
    }
    if per_drug_topk.is_empty() && !target_map.is_empty() {
        return Err(NetpropError::NoUsableDrugs);
    }
    Ok(GenePanel { genes: union.into_iter().collect(), per_drug_topk, skipped })
}

/// Reads `drug_id<TAB>comma-separated gene ids`; an optional header whose
/// first field is `drug_id` is skipped.
pub fn load_target_map<R: BufRead>(reader: R) -> Result<BTreeMap<String, Vec<String>>, NetpropError> {
    let mut map = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((drug, genes)) = line.split_once('\t') else {
            return Err(NetpropError::MalformedRow { line: i + 1, reason: "expected 2 columns".into() });
        };
        if i == 0 && drug == "drug_id" {
            continue;
        }
        let genes: Vec<String> = genes
            .split(',')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(String::from)
            .collect();
        if genes.is_empty() {
            return Err(NetpropError::MalformedRow { line: i + 1, reason: format!("drug {drug} has no targets") });
        }
        map.insert(drug.trim().to_string(), genes);
    }
    Ok(map)
}
