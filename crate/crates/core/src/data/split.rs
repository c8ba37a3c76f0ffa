use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use super::{DataError, PairSample};
use crate::rng::RngStream;

pub const STRICT_FOLDS: usize = 25;
pub const LENIENT_FOLDS: usize = 5;
const TEST_PERCENT: usize = 10;
const STRICT_FOLD_PERCENT: usize = 4;
const PLAN_HEADER: &str = "pacc-split-plan\t1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Strict,
    Lenient,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Strict => "strict",
            Protocol::Lenient => "lenient",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Protocol::Strict),
            "lenient" => Ok(Protocol::Lenient),
            other => Err(DataError::InvalidPlan(format!("unknown protocol {other:?}"))),
        }
    }
}

/// One cross-validation fold; pair lists index the pair slice the plan was
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    /// Strict only.
    pub validation_drugs: Vec<String>,
    /// Strict only.
    pub validation_cells: Vec<String>,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub protocol: Protocol,
    pub seed: u64,
    pub pair_count: usize,
    /// Strict only: held-out test entities and the remaining pools.
    pub test_drugs: Vec<String>,
    pub test_cells: Vec<String>,
    pub pool_drugs: Vec<String>,
    pub pool_cells: Vec<String>,
    pub test: Vec<usize>,
    pub folds: Vec<Fold>,
}

fn percent(n: usize, p: usize) -> usize {
    n * p / 100
}

fn sorted_unique(ids: &[String]) -> Vec<String> {
    ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Pairs whose drug lies in `drugs` and cell in `cells`, in pair order.
fn pairs_within(pairs: &[PairSample], drugs: &HashSet<&str>, cells: &HashSet<&str>) -> Vec<usize> {
    (0..pairs.len())
        .filter(|&i| drugs.contains(pairs[i].drug.as_str()) && cells.contains(pairs[i].cell.as_str()))
        .collect()
}

fn set(ids: &[String]) -> HashSet<&str> {
    ids.iter().map(String::as_str).collect()
}

fn minus<'a>(pool: &'a [String], out: &[String]) -> Vec<&'a str> {
    let out = set(out);
    pool.iter().map(String::as_str).filter(|d| !out.contains(d)).collect()
}

/// Strict protocol: 10% of drugs and 10% of cells (floored) form the test
/// set; each of 25 folds draws 4% of the remaining drugs and cells
/// (floored, independently per fold) for validation and trains on pairs
/// among the rest. Pairs mixing validation and training entities are
/// dropped.
pub fn strict_split(drug_ids: &[String], cell_ids: &[String], pairs: &[PairSample], seed: u64) -> Result<SplitPlan, DataError> {
    let drugs = sorted_unique(drug_ids);
    let cells = sorted_unique(cell_ids);
    let (dset, cset) = (set(&drugs), set(&cells));
    if let Some(p) = pairs.iter().find(|p| !dset.contains(p.drug.as_str())) {
        return Err(DataError::UnknownDrugId { line: 0, id: p.drug.clone() });
    }
    if let Some(p) = pairs.iter().find(|p| !cset.contains(p.cell.as_str())) {
        return Err(DataError::UnknownCellId { line: 0, id: p.cell.clone() });
    }
    for (what, n) in [("drugs", drugs.len()), ("cells", cells.len())] {
        let test = percent(n, TEST_PERCENT);
        if test == 0 || percent(n - test, STRICT_FOLD_PERCENT) == 0 {
            return Err(DataError::TooFewEntities { what, count: n });
        }
    }
    let rng = RngStream::new(seed);
    let hold_out = |ids: &[String], label: u64| {
        let mut r = rng.fork(label);
        let mut test = r.sample(ids, percent(ids.len(), TEST_PERCENT));
        test.sort();
        let pool: Vec<String> = minus(ids, &test).into_iter().map(str::to_string).collect();
        (test, pool)
    };
    let (test_drugs, pool_drugs) = hold_out(&drugs, 1);
    let (test_cells, pool_cells) = hold_out(&cells, 2);
    let test = pairs_within(pairs, &set(&test_drugs), &set(&test_cells));
    let mut folds = Vec::with_capacity(STRICT_FOLDS);
    for k in 0..STRICT_FOLDS {
        let mut r = rng.fork(100 + k as u64);
        let mut validation_drugs = r.sample(&pool_drugs, percent(pool_drugs.len(), STRICT_FOLD_PERCENT));
        let mut validation_cells = r.sample(&pool_cells, percent(pool_cells.len(), STRICT_FOLD_PERCENT));
        validation_drugs.sort();
        validation_cells.sort();
        folds.push(strict_fold(pairs, &pool_drugs, &pool_cells, validation_drugs, validation_cells));
    }
    Ok(SplitPlan {
        protocol: Protocol::Strict,
        seed,
        pair_count: pairs.len(),
        test_drugs,
        test_cells,
        pool_drugs,
        pool_cells,
        test,
        folds,
    })
}

fn strict_fold(pairs: &[PairSample], pool_drugs: &[String], pool_cells: &[String], validation_drugs: Vec<String>, validation_cells: Vec<String>) -> Fold {
    let train_drugs: HashSet<&str> = minus(pool_drugs, &validation_drugs).into_iter().collect();
    let train_cells: HashSet<&str> = minus(pool_cells, &validation_cells).into_iter().collect();
    let train = pairs_within(pairs, &train_drugs, &train_cells);
    let validation = pairs_within(pairs, &set(&validation_drugs), &set(&validation_cells));
    Fold { validation_drugs, validation_cells, train, validation }
}

/// Lenient protocol: shuffle pairs, hold out 10% (floored) for testing and
/// partition the rest into 5 contiguous folds.
pub fn lenient_split(pairs: &[PairSample], seed: u64) -> Result<SplitPlan, DataError> {
    if pairs.len() < 10 {
        return Err(DataError::TooFewPairs(pairs.len()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    RngStream::new(seed).fork(1).shuffle(&mut order);
    let n_test = percent(pairs.len(), TEST_PERCENT);
    let mut test = order[..n_test].to_vec();
    test.sort_unstable();
    let rest = &order[n_test..];
    let chunks: Vec<Vec<usize>> = (0..LENIENT_FOLDS)
        .map(|k| {
            let mut c = rest[k * rest.len() / LENIENT_FOLDS..(k + 1) * rest.len() / LENIENT_FOLDS].to_vec();
            c.sort_unstable();
            c
        })
        .collect();
    let folds = (0..LENIENT_FOLDS).map(|k| lenient_fold(&chunks, k)).collect();
    Ok(SplitPlan {
        protocol: Protocol::Lenient,
        seed,
        pair_count: pairs.len(),
        test_drugs: Vec::new(),
        test_cells: Vec::new(),
        pool_drugs: Vec::new(),
        pool_cells: Vec::new(),
        test,
        folds,
    })
}

fn lenient_fold(chunks: &[Vec<usize>], k: usize) -> Fold {
    let mut train: Vec<usize> = chunks.iter().enumerate().filter(|(j, _)| *j != k).flat_map(|(_, c)| c.iter().copied()).collect();
    train.sort_unstable();
    Fold { validation_drugs: Vec::new(), validation_cells: Vec::new(), train, validation: chunks[k].clone() }
}

impl SplitPlan {
    /// Pairs used by no fold's training or validation set nor the test set.
    pub fn discarded(&self, fold: usize) -> usize {
        let f = &self.folds[fold];
        self.pair_count - f.train.len() - f.validation.len() - self.test.len()
    }

    /// Versioned tab-separated text form: strict plans list entity ids,
    /// lenient plans list the test and validation pairs.
    pub fn to_text(&self, pairs: &[PairSample]) -> String {
        let mut s = String::new();
        let line = |s: &mut String, fields: &[&str]| {
            s.push_str(&fields.join("\t"));
            s.push('\n');
        };
        line(&mut s, &[PLAN_HEADER]);
        line(&mut s, &["protocol", self.protocol.name()]);
        line(&mut s, &["seed", &self.seed.to_string()]);
        line(&mut s, &["rounding", "floor"]);
        line(&mut s, &["pairs", &self.pair_count.to_string()]);
        line(&mut s, &["folds", &self.folds.len().to_string()]);
        let ids = |s: &mut String, head: &[&str], v: &[String]| {
            let mut f: Vec<&str> = head.to_vec();
            f.extend(v.iter().map(String::as_str));
            line(s, &f);
        };
        match self.protocol {
            Protocol::Strict => {
                ids(&mut s, &["test_drugs"], &self.test_drugs);
                ids(&mut s, &["test_cells"], &self.test_cells);
                ids(&mut s, &["pool_drugs"], &self.pool_drugs);
                ids(&mut s, &["pool_cells"], &self.pool_cells);
                for (k, f) in self.folds.iter().enumerate() {
                    let k = k.to_string();
                    ids(&mut s, &["fold", &k, "validation_drugs"], &f.validation_drugs);
                    ids(&mut s, &["fold", &k, "validation_cells"], &f.validation_cells);
                }
            }
            Protocol::Lenient => {
                for &i in &self.test {
                    line(&mut s, &["test_pair", &pairs[i].drug, &pairs[i].cell]);
                }
                for (k, f) in self.folds.iter().enumerate() {
                    let k = k.to_string();
                    for &i in &f.validation {
                        line(&mut s, &["fold", &k, "validation_pair", &pairs[i].drug, &pairs[i].cell]);
                    }
                }
            }
        }
        let _ = writeln!(s, "count\ttest\t{}", self.test.len());
        for (k, f) in self.folds.iter().enumerate() {
            let _ = writeln!(s, "count\tfold\t{k}\ttrain\t{}\tvalidation\t{}\tdiscarded\t{}", f.train.len(), f.validation.len(), self.discarded(k));
        }
        s
    }

    /// Rebuilds a plan from [`SplitPlan::to_text`] output and the same pairs.
    pub fn from_text(text: &str, pairs: &[PairSample]) -> Result<Self, DataError> {
        let bad = |m: String| DataError::InvalidPlan(m);
        let mut lines = text.lines();
        if lines.next() != Some(PLAN_HEADER) {
            return Err(bad("missing plan header".into()));
        }
        let mut protocol = None;
        let mut seed = None;
        let mut declared_pairs = None;
        let mut n_folds = None;
        let mut lists: HashMap<String, Vec<String>> = HashMap::new();
        let mut test_pairs = Vec::new();
        let mut fold_pairs: Vec<(usize, String, String)> = Vec::new();
        for l in lines {
            let f: Vec<&str> = l.split('\t').collect();
            let num = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("bad number in {l:?}")));
            match f.as_slice() {
                ["protocol", p] => protocol = Some(p.parse::<Protocol>()?),
                ["seed", v] => seed = Some(v.parse::<u64>().map_err(|_| bad(format!("bad seed {v:?}")))?),
                ["rounding", "floor"] | ["count", ..] => {}
                ["pairs", v] => declared_pairs = Some(num(v)?),
                ["folds", v] => n_folds = Some(num(v)?),
                ["test_pair", d, c] => test_pairs.push((d.to_string(), c.to_string())),
                ["fold", k, "validation_pair", d, c] => fold_pairs.push((num(k)?, d.to_string(), c.to_string())),
                ["fold", k, name, rest @ ..] => {
                    lists.insert(format!("{}:{name}", num(k)?), rest.iter().map(|s| s.to_string()).collect());
                }
                [name, rest @ ..] if name.ends_with("_drugs") || name.ends_with("_cells") => {
                    lists.insert(name.to_string(), rest.iter().map(|s| s.to_string()).collect());
                }
                _ => return Err(bad(format!("unrecognized line {l:?}"))),
            }
        }
        let protocol = protocol.ok_or_else(|| bad("missing protocol".into()))?;
        let seed = seed.ok_or_else(|| bad("missing seed".into()))?;
        let n_folds = n_folds.ok_or_else(|| bad("missing fold count".into()))?;
        if declared_pairs != Some(pairs.len()) {
            return Err(bad(format!("plan covers {declared_pairs:?} pairs, data has {}", pairs.len())));
        }
        let mut take = |key: &str| lists.remove(key).ok_or_else(|| bad(format!("missing {key}")));
        match protocol {
            Protocol::Strict => {
                let (test_drugs, test_cells) = (take("test_drugs")?, take("test_cells")?);
                let (pool_drugs, pool_cells) = (take("pool_drugs")?, take("pool_cells")?);
                let test = pairs_within(pairs, &set(&test_drugs), &set(&test_cells));
                let mut folds = Vec::with_capacity(n_folds);
                for k in 0..n_folds {
                    let vd = take(&format!("{k}:validation_drugs"))?;
                    let vc = take(&format!("{k}:validation_cells"))?;
                    folds.push(strict_fold(pairs, &pool_drugs, &pool_cells, vd, vc));
                }
                Ok(SplitPlan { protocol, seed, pair_count: pairs.len(), test_drugs, test_cells, pool_drugs, pool_cells, test, folds })
            }
            Protocol::Lenient => {
                let index: HashMap<(&str, &str), usize> = pairs.iter().enumerate().map(|(i, p)| ((p.drug.as_str(), p.cell.as_str()), i)).collect();
                let find = |d: &str, c: &str| index.get(&(d, c)).copied().ok_or_else(|| bad(format!("pair ({d}, {c}) not in data")));
                let mut test = test_pairs.iter().map(|(d, c)| find(d, c)).collect::<Result<Vec<_>, _>>()?;
                test.sort_unstable();
                let mut chunks = vec![Vec::new(); n_folds];
                for (k, d, c) in &fold_pairs {
                    chunks.get_mut(*k).ok_or_else(|| bad(format!("fold {k} out of range")))?.push(find(d, c)?);
                }
                chunks.iter_mut().for_each(|c| c.sort_unstable());
                let folds = (0..n_folds).map(|k| lenient_fold(&chunks, k)).collect();
                Ok(SplitPlan {
                    protocol,
                    seed,
                    pair_count: pairs.len(),
                    test_drugs: Vec::new(),
                    test_cells: Vec::new(),
                    pool_drugs: Vec::new(),
                    pool_cells: Vec::new(),
                    test,
                    folds,
                })
            }
        }
    }
}
