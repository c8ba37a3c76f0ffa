#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pacc::rng::RngStream;
use tempfile::TempDir;

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

/// Input tables for a small complete drug x cell study.
pub struct Fixture {
    pub dir: TempDir,
    pub drugs: PathBuf,
    pub expression: PathBuf,
    pub responses: PathBuf,
    pub ppi: PathBuf,
    pub targets: PathBuf,
    pub gene_sets: PathBuf,
    pub n_genes: usize,
}

impl Fixture {
    pub fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn s(p: &Path) -> String {
        p.to_str().unwrap().to_string()
    }
}

pub fn gene(g: usize) -> String {
    format!("G{g:02}")
}

pub fn fixture(n_drugs: usize, n_cells: usize, n_genes: usize, seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(seed);
    let write = |name: &str, text: String| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let mut drugs = String::from("drug_id\tsmiles\n");
    for d in 0..n_drugs {
        writeln!(drugs, "D{d:02}\t{}", SMILES[d % SMILES.len()]).unwrap();
    }
    let mut expression = String::from("cell_id");
    for g in 0..n_genes {
        write!(expression, "\t{}", gene(g)).unwrap();
    }
    expression.push('\n');
    let mut rows = Vec::new();
    for c in 0..n_cells {
        let row: Vec<f64> = (0..n_genes).map(|_| 2.0 * rng.normal() + 5.0).collect();
        writeln!(expression, "C{c:02}\t{}", row.iter().map(f64::to_string).collect::<Vec<_>>().join("\t")).unwrap();
        rows.push(row);
    }
    let weights: Vec<f64> = (0..n_genes).map(|_| rng.normal()).collect();
    let mut responses = String::from("drug_id\tcell_id\tlog_ic50\n");
    for d in 0..n_drugs {
        let effect = 2.0 * rng.normal();
        for (c, row) in rows.iter().enumerate() {
            let x: f64 = row.iter().zip(&weights).map(|(e, w)| (e - 5.0) * w).sum::<f64>() / n_genes as f64;
            writeln!(responses, "D{d:02}\tC{c:02}\t{}", effect + x).unwrap();
        }
    }
    let mut ppi = String::new();
    for g in 0..n_genes {
        writeln!(ppi, "{}\t{}\t{}", gene(g), gene((g + 1) % n_genes), 0.5 + rng.uniform()).unwrap();
        writeln!(ppi, "{}\t{}\t{}", gene(g), gene((g + 7) % n_genes), 0.5 + rng.uniform()).unwrap();
    }
    let mut targets = String::new();
    for d in 0..n_drugs {
        writeln!(targets, "D{d:02}\t{},{}", gene(rng.below(n_genes)), gene(rng.below(n_genes))).unwrap();
    }
    let mut gmt = String::new();
    for s in 0..4 {
        let members: Vec<String> = (0..n_genes).filter(|g| g % 4 == s).map(gene).collect();
        writeln!(gmt, "SET{s}\tgenes congruent to {s} mod 4\t{}", members.join("\t")).unwrap();
    }
    Fixture {
        drugs: write("drugs.tsv", drugs),
        expression: write("expression.tsv", expression),
        responses: write("responses.tsv", responses),
        ppi: write("ppi.tsv", ppi),
        targets: write("targets.tsv", targets),
        gene_sets: write("sets.gmt", gmt),
        n_genes,
        dir,
    }
}

/// Small MCA dimensions for quick training runs.
pub const SMALL_MCA: &[&str] = &[
    "--kind", "MCA", "--model", "embedding=4", "--model", "filters=4", "--model", "attention=8", "--model", "heads=2", "--model",
    "kernel_widths=3,5", "--model", "dense=8",
];

pub fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("pacc").chain(args.iter().copied()).map(str::to_string).collect()
}

/// Runs `pacc` in-process and returns the exit code.
pub fn pacc(args: &[&str]) -> i32 {
    pacc_cli::dispatch(argv(args))
}

/// Trains a few steps of a small model on fold 0 of a lenient split and
/// returns the best checkpoint's path.
pub fn trained_checkpoint(f: &Fixture, extra: &[&str]) -> PathBuf {
    let out = f.out("train");
    let (drugs, expr, resp, out_s) = (Fixture::s(&f.drugs), Fixture::s(&f.expression), Fixture::s(&f.responses), Fixture::s(&out));
    let mut args = vec![
        "train", "--drugs", &drugs, "--expression", &expr, "--responses", &resp, "--protocol", "lenient", "--folds", "0", "--max-steps",
        "40", "--batch-size", "32", "--eval-interval", "20", "--checkpoint-keep", "2", "--variants", "2", "--seed", "3", "--out", &out_s,
    ];
    if !extra.iter().any(|a| *a == "--kind") {
        args.extend_from_slice(SMALL_MCA);
    }
    args.extend_from_slice(extra);
    let code = pacc(&args);
    assert_eq!(code, 0, "training failed");
    out.join("fold_00/checkpoint_00.pacc")
}

pub fn manifest_value(dir: &Path, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(dir.join("manifest.tsv")).ok()?;
    text.lines().find_map(|l| l.strip_prefix(&format!("{key}\t")).map(str::to_string))
}
