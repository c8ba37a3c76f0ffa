use std::collections::BTreeSet;

use super::AnalysisError;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSet {
    pub id: String,
    pub description: String,
    pub genes: Vec<String>,
}

/// Parses GMT text: `set_id<TAB>description<TAB>gene...` per line.
pub fn parse_gmt(text: &str) -> Result<Vec<GeneSet>, AnalysisError> {
    let mut sets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() < 2 || f[0].trim().is_empty() {
            return Err(AnalysisError::MalformedGmt { line: i + 1 });
        }
        sets.push(GeneSet {
            id: f[0].trim().to_string(),
            description: f[1].trim().to_string(),
            genes: f[2..].iter().map(|g| g.trim()).filter(|g| !g.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentResult {
    pub set_id: String,
    pub description: String,
    pub overlap: usize,
    /// Set size after intersecting with the universe.
    pub set_size: usize,
    pub attended_size: usize,
    pub universe_size: usize,
    pub p_value: f64,
    pub adjusted_p: f64,
}

fn binomial_exact(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    (1..=k as u128).fold(1u128, |acc, j| acc * (n as u128 - k as u128 + j) / j)
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (1..=k).map(|j| ((n - k + j) as f64 / j as f64).ln()).sum()
}

/// Largest universe for which tail counts stay exact in 53 bits.
const EXACT_UNIVERSE: usize = 50;

/// P(X >= k) for X ~ Hypergeometric(universe N, successes K, draws n).
/// Small universes are summed in exact integers and divided once.
pub fn hypergeometric_upper_tail(k: usize, universe: usize, successes: usize, draws: usize) -> f64 {
    if k <= (successes + draws).saturating_sub(universe) {
        return 1.0;
    }
    let (lo, hi) = (k, successes.min(draws));
    if lo > hi {
        return 0.0;
    }
    if universe <= EXACT_UNIVERSE {
        let (n, s, d) = (universe as u64, successes as u64, draws as u64);
        let hits: u128 = (lo..=hi).map(|i| binomial_exact(s, i as u64) * binomial_exact(n - s, d - i as u64)).sum();
        return hits as f64 / binomial_exact(n, d) as f64;
    }
    let ln_total = ln_binomial(universe, draws);
    let mut term = (ln_binomial(successes, lo) + ln_binomial(universe - successes, draws - lo) - ln_total).exp();
    let mut sum = 0.0;
    for i in lo..=hi {
        sum += term;
        if i < hi {
            let ratio = ((successes - i) * (draws - i)) as f64 / ((i + 1) * (universe + i + 1 - successes - draws)) as f64;
            term *= ratio;
        }
    }
    sum.min(1.0)
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn benjamini_hochberg(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        // Mathematically never below the raw p; the max guards rounding.
        adjusted[i] = running.min(1.0).max(p[i]);
    }
    adjusted
}

/// Over-representation of `attended` in each gene set. Gene sets and the
/// attended genes are intersected with the universe first. Results are
/// sorted by adjusted p, then raw p, then set id.
pub fn ora_enrichment(attended: &[String], sets: &[GeneSet], universe: &[String]) -> Result<Vec<EnrichmentResult>, AnalysisError> {
    let universe: BTreeSet<&str> = universe.iter().map(String::as_str).collect();
    if universe.is_empty() {
        return Err(AnalysisError::EmptyUniverse);
    }
    let attended: BTreeSet<&str> = attended.iter().map(String::as_str).filter(|g| universe.contains(g)).collect();
    let (n_universe, n_attended) = (universe.len(), attended.len());
    let mut results: Vec<EnrichmentResult> = sets
        .iter()
        .map(|s| {
            let members: BTreeSet<&str> = s.genes.iter().map(String::as_str).filter(|g| universe.contains(g)).collect();
            let overlap = members.intersection(&attended).count();
            EnrichmentResult {
                set_id: s.id.clone(),
                description: s.description.clone(),
                overlap,
                set_size: members.len(),
                attended_size: n_attended,
                universe_size: n_universe,
                p_value: hypergeometric_upper_tail(overlap, n_universe, members.len(), n_attended),
                adjusted_p: 0.0,
            }
        })
        .collect();
    let adjusted = benjamini_hochberg(&results.iter().map(|r| r.p_value).collect::<Vec<_>>());
    results.iter_mut().zip(adjusted).for_each(|(r, a)| r.adjusted_p = a);
    results.sort_by(|a, b| a.adjusted_p.total_cmp(&b.adjusted_p).then(a.p_value.total_cmp(&b.p_value)).then(a.set_id.cmp(&b.set_id)));
    Ok(results)
}

pub fn enrichment_tsv(results: &[EnrichmentResult]) -> String {
    let mut s = String::from("set_id\tdescription\toverlap\tset_size\tattended_size\tuniverse_size\tp_value\tadjusted_p\n");
    for r in results {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.set_id, r.description, r.overlap, r.set_size, r.attended_size, r.universe_size, r.p_value, r.adjusted_p
        ));
    }
    s
}
