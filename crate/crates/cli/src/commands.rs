use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use pacc::analysis::{
    aggregate_gene_attention, attention_structure_correlation, collect_profiles, enrichment_tsv, ora_enrichment, parse_gmt, ProfileKind,
};
use pacc::chem::{morgan_fingerprint, parse_smiles, tokenize, Vocabulary, DEFAULT_RADIUS};
use pacc::data::{
    build_drug_records, lenient_split, load_drugs, load_expression, load_responses, pair_samples, strict_split, Dataset, DrugRecord,
    ExpressionTable, PairSample, Protocol, SplitPlan,
};
use pacc::models::{ModelKind, ModelSpec};
use pacc::netprop::{build_panel, load_ppi, load_target_map, PropagationParams};
use pacc::nn::LrSchedule;
use pacc::train::{cross_validate, ensemble_predict, history_csv, metric_report, Checkpoint, MetricReport, TrainConfig};

use crate::config::{Outputs, RunConfig};
use crate::query::{PredictRequest, Predictor};
use crate::CliError;

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    match cfg.command.name {
        "propagate" => propagate(cfg),
        "tokenize" => tokenize_drugs(cfg),
        "augment" => augment_drugs(cfg),
        "fingerprint" => fingerprint_drugs(cfg),
        "split" => split(cfg),
        "train" => train(cfg),
        "predict" => predict(cfg),
        "evaluate" => evaluate(cfg),
        "attention" => attention(cfg),
        "serve" => serve(cfg),
        other => Err(CliError::Usage(format!("unknown subcommand {other:?}"))),
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn in_file<T, E: std::fmt::Display>(path: &Path, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn drug_table(cfg: &RunConfig) -> Result<Vec<(String, String)>, CliError> {
    let path = cfg.path("drugs")?;
    in_file(path, load_drugs(open(path)?))
}

fn expression_table(cfg: &RunConfig) -> Result<ExpressionTable, CliError> {
    let path = cfg.path("expression")?;
    in_file(path, load_expression(open(path)?))
}

fn responses(cfg: &RunConfig, drug_ids: &[String], cell_ids: &[String]) -> Result<Vec<PairSample>, CliError> {
    let path = cfg.path("responses")?;
    let rows = in_file(path, load_responses(open(path)?))?;
    in_file(path, pair_samples(drug_ids, cell_ids, &rows))
}

fn load_panel(path: &Path) -> Result<Vec<String>, CliError> {
    let genes: Vec<String> =
        read_text(path)?.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect();
    if genes.is_empty() {
        return Err(CliError::Data(format!("{}: empty gene panel", path.display())));
    }
    Ok(genes)
}

fn csv_list(cfg: &RunConfig, key: &str) -> Option<Vec<String>> {
    cfg.get(key).map(|v| v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
}

fn positive(cfg: &RunConfig, key: &str) -> Result<usize, CliError> {
    match cfg.parse::<usize>(key)? {
        0 => Err(CliError::Usage(format!("--{key}: must be positive"))),
        n => Ok(n),
    }
}

/// Split plans are built over the drugs and cells that occur in `pairs`, so
/// `split` and `train` agree for the same responses and seed.
pub fn make_plan(protocol: Protocol, pairs: &[PairSample], seed: u64) -> Result<SplitPlan, CliError> {
    Ok(match protocol {
        Protocol::Strict => {
            let drugs: Vec<String> = pairs.iter().map(|p| p.drug.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            let cells: Vec<String> = pairs.iter().map(|p| p.cell.clone()).collect::<BTreeSet<_>>().into_iter().collect();
            strict_split(&drugs, &cells, pairs, seed)?
        }
        Protocol::Lenient => lenient_split(pairs, seed)?,
    })
}

fn protocol(cfg: &RunConfig) -> Result<Protocol, CliError> {
    cfg.parse("protocol")
}

fn propagate(cfg: &RunConfig) -> Result<(), CliError> {
    let params = PropagationParams {
        alpha: cfg.parse("alpha")?,
        tol: cfg.parse("tol")?,
        max_iter: positive(cfg, "max-iter")?,
        target_weight: cfg.parse("target-weight")?,
        background: cfg.parse("background")?,
        k: positive(cfg, "k")?,
    };
    let (ppi, targets) = (cfg.path("ppi")?, cfg.path("targets")?);
    let net = in_file(ppi, load_ppi(open(ppi)?))?;
    let map = in_file(targets, load_target_map(open(targets)?))?;
    let panel = build_panel(&net, &map, &params)?;
    let mut out = Outputs::default();
    out.add("panel.txt", panel.genes.iter().map(|g| format!("{g}\n")).collect::<String>());
    let mut topk = String::from("drug_id\ttop_genes\n");
    for (drug, genes) in &panel.per_drug_topk {
        writeln!(topk, "{drug}\t{}", genes.join(",")).unwrap();
    }
    out.add("per_drug_topk.tsv", topk);
    out.add("skipped_drugs.txt", panel.skipped.iter().map(|d| format!("{d}\n")).collect::<String>());
    out.write(cfg)
}

fn tokenize_drugs(cfg: &RunConfig) -> Result<(), CliError> {
    let drugs = drug_table(cfg)?;
    let mut table = String::from("drug_id\tcount\ttokens\n");
    for (id, smiles) in &drugs {
        let tokens = tokenize(smiles).map_err(|e| CliError::Data(format!("drug {id}: {e}")))?;
        writeln!(table, "{id}\t{}\t{}", tokens.len(), tokens.join(" ")).unwrap();
    }
    let vocab = Vocabulary::from_corpus(drugs.iter().map(|(_, s)| s))?;
    let mut out = Outputs::default();
    out.add("tokens.tsv", table);
    out.add("vocab.tsv", vocab.tokens().iter().enumerate().map(|(i, t)| format!("{i}\t{t}\n")).collect::<String>());
    out.write(cfg)
}

fn augment_drugs(cfg: &RunConfig) -> Result<(), CliError> {
    let drugs = drug_table(cfg)?;
    let records = build_drug_records(&drugs, positive(cfg, "n")?, cfg.seed, DEFAULT_RADIUS, pacc::chem::DEFAULT_WIDTH)?;
    let mut table = String::from("drug_id\tvariant\tsmiles\n");
    for r in &records {
        for (i, v) in r.variants.iter().enumerate() {
            writeln!(table, "{}\t{i}\t{v}", r.id).unwrap();
        }
    }
    let mut out = Outputs::default();
    out.add("augmented.tsv", table);
    out.write(cfg)
}

fn fingerprint_drugs(cfg: &RunConfig) -> Result<(), CliError> {
    let (radius, width): (usize, usize) = (cfg.parse("radius")?, cfg.parse("width")?);
    let drugs = drug_table(cfg)?;
    let mut table = String::from("drug_id\tbits_on\thex\n");
    for (id, smiles) in &drugs {
        let wrap = |e: pacc::chem::ChemError| CliError::Data(format!("drug {id}: {e}"));
        let fp = morgan_fingerprint(&parse_smiles(smiles).map_err(wrap)?, radius, width).map_err(wrap)?;
        let on = (0..width).filter(|&i| fp.get(i)).count();
        writeln!(table, "{id}\t{on}\t{}", fp.to_hex()).unwrap();
    }
    let mut out = Outputs::default();
    out.add("fingerprints.tsv", table);
    out.write(cfg)
}

fn split(cfg: &RunConfig) -> Result<(), CliError> {
    let protocol = protocol(cfg)?;
    let path = cfg.path("responses")?;
    let rows = in_file(path, load_responses(open(path)?))?;
    let ids = |f: fn(&pacc::data::ResponseRow) -> &String| rows.iter().map(f).cloned().collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>();
    let pairs = in_file(path, pair_samples(&ids(|r| &r.drug), &ids(|r| &r.cell), &rows))?;
    let plan = make_plan(protocol, &pairs, cfg.seed)?;
    let mut out = Outputs::default();
    out.add("split_plan.txt", plan.to_text(&pairs));
    out.write(cfg)
}

fn model_spec(cfg: &RunConfig, panel: usize) -> Result<ModelSpec, CliError> {
    let kind: ModelKind = cfg.parse("kind")?;
    let mut spec = ModelSpec::new(kind, 0, panel, 0);
    for (k, v) in cfg.model_overrides() {
        if k == "kind" {
            return Err(CliError::Usage("--model: set the kind with --kind".into()));
        }
        spec.set(k, v).map_err(|e| CliError::Usage(format!("--model: {e}")))?;
    }
    Ok(spec)
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let tc = TrainConfig {
        max_steps: cfg.parse("max-steps")?,
        batch_size: cfg.parse("batch-size")?,
        eval_interval: cfg.parse("eval-interval")?,
        checkpoint_keep: cfg.parse("checkpoint-keep")?,
        seed: cfg.seed,
        augment: cfg.switch("augment")?,
        schedule: LrSchedule { initial: cfg.parse("lr")?, decay_factor: cfg.parse("lr-decay")?, decay_interval: positive(cfg, "lr-decay-interval")? as u64 },
    };
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(tc)
}

fn report_rows(s: &mut String, fold: usize, subset: &str, m: &MetricReport) {
    writeln!(s, "{fold}\t{subset}\t{}\t{}\t{}\t{}\t{}", m.rmse, m.rmse_log, m.pearson, m.r2, m.count).unwrap();
}

fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let tc = train_config(cfg)?;
    let protocol = protocol(cfg)?;
    let variants = positive(cfg, "variants")?;
    let expr = expression_table(cfg)?;
    let panel = match cfg.get("panel") {
        Some(p) => load_panel(Path::new(p))?,
        None => expr.genes.clone(),
    };
    let mut spec = model_spec(cfg, panel.len())?;
    let drugs = drug_table(cfg)?;
    let records = build_drug_records(&drugs, variants, cfg.seed, DEFAULT_RADIUS, spec.fingerprint_width)?;
    let vocab = Vocabulary::from_corpus(records.iter().flat_map(|r| r.variants.iter()))?;
    let max_len = if spec.kind.uses_smiles() {
        let longest = records.iter().flat_map(|r| r.variants.iter()).map(|v| tokenize(v).map(|t| t.len())).try_fold(0, |m, l| l.map(|l| m.max(l)))?;
        spec.vocab = vocab.len();
        if cfg.get("model.max_len").is_none() {
            spec.max_len = longest;
        }
        spec.max_len
    } else {
        0
    };
    spec.panel = panel.len();
    spec.validate().map_err(|e| CliError::Usage(format!("--model: {e}")))?;

    let cells = expr.restrict(&panel)?;
    let drug_ids: Vec<String> = drugs.iter().map(|(id, _)| id.clone()).collect();
    let pairs = responses(cfg, &drug_ids, &expr.cells)?;
    let plan = match cfg.get("plan") {
        Some(p) => in_file(Path::new(p), SplitPlan::from_text(&read_text(Path::new(p))?, &pairs))?,
        None => make_plan(protocol, &pairs, cfg.seed)?,
    };
    let selected: Vec<usize> = match cfg.require("folds")? {
        "all" => (0..plan.folds.len()).collect(),
        list => {
            let mut ks = Vec::new();
            for part in list.split(',') {
                match part.trim().parse::<usize>() {
                    Ok(k) if k < plan.folds.len() => ks.push(k),
                    _ => return Err(CliError::Usage(format!("--folds: {part:?} is not a fold of a {}-fold plan", plan.folds.len()))),
                }
            }
            ks
        }
    };
    let mut subset = plan.clone();
    subset.folds = selected.iter().map(|&k| plan.folds[k].clone()).collect();
    let ds = Dataset::new(records, cells, pairs.clone(), panel.clone(), vocab, max_len)?;
    let report = cross_validate(&spec, &ds, &subset, &tc, cfg.threads)?;

    let mut out = Outputs::default();
    out.add("split_plan.txt", plan.to_text(&pairs));
    out.add("model.txt", spec.to_config());
    let mut table = String::from("fold\tsubset\trmse\trmse_log\tpearson\tr2\tcount\n");
    for (fr, &k) in report.folds.iter().zip(&selected) {
        for (rank, c) in fr.outcome.checkpoints.iter().enumerate() {
            out.add(format!("fold_{k:02}/checkpoint_{rank:02}.pacc"), c.to_bytes());
        }
        out.add(format!("fold_{k:02}/history.csv"), history_csv(&fr.outcome.history));
        report_rows(&mut table, k, "validation", &fr.validation);
        if let Some(t) = &fr.test {
            report_rows(&mut table, k, "test", t);
        }
    }
    out.add("cv_report.tsv", table);
    let mut summary = String::from("metric\tmedian\tiqr\n");
    for (name, s) in [("rmse", report.rmse), ("rmse_log", report.rmse_log), ("pearson", report.pearson), ("r2", report.r2)] {
        writeln!(summary, "{name}\t{}\t{}", s.median, s.iqr).unwrap();
    }
    out.add("cv_summary.tsv", summary);
    out.write(cfg)
}

fn collect_pacc(dir: &Path, found: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_pacc(&p, found)?;
        } else if p.extension().is_some_and(|x| x == "pacc") {
            found.push(p);
        }
    }
    Ok(())
}

/// One checkpoint, or every `.pacc` file under a directory in path order.
pub fn load_checkpoints(path: &Path) -> Result<Vec<Checkpoint>, CliError> {
    let mut files = Vec::new();
    if path.is_dir() {
        collect_pacc(path, &mut files)?;
    } else {
        files.push(path.to_path_buf());
    }
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .pacc checkpoints", path.display())));
    }
    files.iter().map(|f| in_file(f, Checkpoint::load(f))).collect()
}

fn single_checkpoint(cfg: &RunConfig) -> Result<Checkpoint, CliError> {
    let path = cfg.path("checkpoint")?;
    if path.is_dir() {
        return Err(CliError::Usage("--checkpoint: expected a checkpoint file, not a directory".into()));
    }
    in_file(path, Checkpoint::load(path))
}

/// Drugs encoded with the checkpoint's vocabulary and cells restricted to
/// its panel.
fn checkpoint_dataset(cfg: &RunConfig, ckpt: &Checkpoint, variants: usize, pairs: Option<Vec<PairSample>>) -> Result<Dataset, CliError> {
    let drugs = drug_table(cfg)?;
    let expr = expression_table(cfg)?;
    let records = build_drug_records(&drugs, variants, cfg.seed, DEFAULT_RADIUS, ckpt.spec.fingerprint_width)?;
    let cells = expr.restrict(&ckpt.panel)?;
    let pairs = match pairs {
        Some(p) => p,
        None if cfg.get("responses").is_some() => {
            let ids: Vec<String> = drugs.iter().map(|(id, _)| id.clone()).collect();
            responses(cfg, &ids, &expr.cells)?
        }
        None => drugs
            .iter()
            .flat_map(|(d, _)| expr.cells.iter().map(move |c| PairSample { drug: d.clone(), cell: c.clone(), label: f64::NAN }))
            .collect(),
    };
    let max_len = if ckpt.spec.kind.uses_smiles() { ckpt.spec.max_len } else { 0 };
    Ok(Dataset::new(records, cells, pairs, ckpt.panel.clone(), ckpt.vocabulary(), max_len)?)
}

fn prediction_table(ds: &Dataset, pairs: &[usize], pred: &[f64]) -> String {
    let mut s = String::from("drug_id\tcell_id\tpredicted_log_ic50\tobserved_log_ic50\n");
    for (&p, v) in pairs.iter().zip(pred) {
        let pair = &ds.pairs[p];
        let observed = if pair.label.is_nan() { String::new() } else { pair.label.to_string() };
        writeln!(s, "{}\t{}\t{v}\t{observed}", pair.drug, pair.cell).unwrap();
    }
    s
}

fn variants_for(cfg: &RunConfig) -> Result<(bool, usize), CliError> {
    let average = cfg.switch("augment-average")?;
    Ok((average, if average { positive(cfg, "variants")? } else { 1 }))
}

fn predict(cfg: &RunConfig) -> Result<(), CliError> {
    if let Some(smiles) = cfg.get("query") {
        let request = PredictRequest {
            smiles: smiles.to_string(),
            cell_id: cfg.get("cell-id").map(str::to_string),
            expression: match cfg.get("expression-values") {
                Some(v) => Some(
                    v.split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| CliError::Usage(format!("--expression-values: invalid list {v:?}")))?,
                ),
                None => None,
            },
            top_k_genes: Some(cfg.parse("top-k-genes")?),
        };
        if request.cell_id.is_some() == request.expression.is_some() {
            return Err(CliError::Usage("--query: give exactly one of --cell-id and --expression-values".into()));
        }
        if request.cell_id.is_some() && cfg.get("expression").is_none() {
            return Err(CliError::Usage("--cell-id: requires --expression".into()));
        }
        let ckpt = single_checkpoint(cfg)?;
        let expr = match cfg.get("expression") {
            Some(_) => expression_table(cfg)?,
            None => ExpressionTable { genes: ckpt.panel.clone(), cells: Vec::new(), values: Vec::new() },
        };
        let response = Predictor::new(ckpt, &expr)?.predict(&request).map_err(|e| CliError::Data(e.to_string()))?;
        let mut out = Outputs::default();
        out.add("prediction.json", query_json(&response));
        return out.write(cfg);
    }
    let (average, variants) = variants_for(cfg)?;
    let ckpts = load_checkpoints(cfg.path("checkpoint")?)?;
    let ds = checkpoint_dataset(cfg, &ckpts[0], variants, None)?;
    let pairs: Vec<usize> = (0..ds.pairs.len()).collect();
    let pred = ensemble_predict(&ckpts, &ds, &pairs, average)?;
    let mut out = Outputs::default();
    out.add("predictions.tsv", prediction_table(&ds, &pairs, &pred));
    out.write(cfg)
}

/// The same bytes the service sends for a response.
pub fn query_json(response: &crate::query::PredictResponse) -> Vec<u8> {
    serde_json::to_vec(response).expect("responses serialize")
}

fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let (average, variants) = variants_for(cfg)?;
    let ckpts = load_checkpoints(cfg.path("checkpoint")?)?;
    let drugs = drug_table(cfg)?;
    let expr = expression_table(cfg)?;
    let ids: Vec<String> = drugs.iter().map(|(id, _)| id.clone()).collect();
    let all = responses(cfg, &ids, &expr.cells)?;
    let pairs: Vec<usize> = match cfg.get("plan") {
        None => (0..all.len()).collect(),
        Some(p) => {
            let plan = in_file(Path::new(p), SplitPlan::from_text(&read_text(Path::new(p))?, &all))?;
            match cfg.require("subset")? {
                "test" => plan.test.clone(),
                s => match s.strip_prefix("validation:").and_then(|k| k.parse::<usize>().ok()) {
                    Some(k) if k < plan.folds.len() => plan.folds[k].validation.clone(),
                    _ => return Err(CliError::Usage(format!("--subset: expected test or validation:K, got {s:?}"))),
                },
            }
        }
    };
    let ds = checkpoint_dataset(cfg, &ckpts[0], variants, Some(all))?;
    let pred = ensemble_predict(&ckpts, &ds, &pairs, average)?;
    let m = metric_report(&pred, &ds.labels(&pairs), &ckpts[0].labels)?;
    let mut out = Outputs::default();
    out.add(
        "metrics.tsv",
        format!(
            "metric\tvalue\nrmse\t{}\nrmse_log\t{}\npearson\t{}\nr2\t{}\ncount\t{}\nconstant_truth\t{}\n",
            m.rmse, m.rmse_log, m.pearson, m.r2, m.count, m.constant_truth
        ),
    );
    out.add("predictions.tsv", prediction_table(&ds, &pairs, &pred));
    out.write(cfg)
}

fn attention(cfg: &RunConfig) -> Result<(), CliError> {
    let action = cfg.action.as_deref().expect("attention takes an analysis");
    let kind = match cfg.require("profile")? {
        "token" => ProfileKind::Token,
        "gene" => ProfileKind::Gene,
        other => return Err(CliError::Usage(format!("--profile: expected token or gene, got {other:?}"))),
    };
    if action == "enrich" && cfg.get("gene-sets").is_none() {
        return Err(CliError::Usage("--gene-sets: required for enrich".into()));
    }
    let ckpt = single_checkpoint(cfg)?;
    let ds = checkpoint_dataset(cfg, &ckpt, 1, Some(Vec::new()))?;
    let drugs = csv_list(cfg, "drug-ids").unwrap_or_else(|| ds.drugs.iter().map(|d| d.id.clone()).collect());
    let cells = csv_list(cfg, "cell-ids").unwrap_or_else(|| ds.cells.iter().map(|c| c.id.clone()).collect());
    let profiles = collect_profiles(&ckpt, &ds, &drugs, &cells)?;
    let mut out = Outputs::default();
    let attended = || -> Result<(String, Vec<String>), CliError> {
        let genes = aggregate_gene_attention(&profiles, &ckpt.panel)?;
        let table = std::iter::once("gene\tmean_attention\n".to_string()).chain(genes.iter().map(|(g, a)| format!("{g}\t{a}\n"))).collect();
        Ok((table, genes.into_iter().map(|(g, _)| g).collect()))
    };
    match action {
        "profiles" => {
            let canonical: BTreeMap<&str, Vec<String>> =
                ds.drugs.iter().map(|d| Ok((d.id.as_str(), tokenize(&d.canonical)?))).collect::<Result<_, pacc::chem::ChemError>>()?;
            let mut tokens = String::from("drug_id\tcell_id\tposition\ttoken\tweight\n");
            let mut genes = format!("drug_id\tcell_id\t{}\n", ckpt.panel.join("\t"));
            for p in &profiles {
                for (i, w) in p.tokens.iter().enumerate() {
                    writeln!(tokens, "{}\t{}\t{i}\t{}\t{w}", p.drug, p.cell, canonical[p.drug.as_str()][i]).unwrap();
                }
                let row: Vec<String> = p.genes.iter().map(f64::to_string).collect();
                writeln!(genes, "{}\t{}\t{}", p.drug, p.cell, row.join("\t")).unwrap();
            }
            out.add("token_profiles.tsv", tokens);
            out.add("gene_profiles.tsv", genes);
        }
        "correlation" => {
            let fps: BTreeMap<String, _> = ds.drugs.iter().map(|d: &DrugRecord| (d.id.clone(), d.fingerprint.clone())).collect();
            let corr = attention_structure_correlation(&profiles, &fps, kind)?;
            out.add("structure_pairs.tsv", corr.to_tsv());
            out.add("structure_correlation.tsv", format!("pearson\t{}\ndefined\t{}\nn\t{}\n", corr.pearson, corr.defined, corr.n));
        }
        "genes" => out.add("attended_genes.tsv", attended()?.0),
        "enrich" => {
            let path = cfg.path("gene-sets")?;
            let sets = in_file(path, parse_gmt(&read_text(path)?))?;
            let (table, genes) = attended()?;
            let results = ora_enrichment(&genes, &sets, &ckpt.panel)?;
            out.add("attended_genes.tsv", table);
            out.add("enrichment.tsv", enrichment_tsv(&results));
        }
        other => return Err(CliError::Usage(format!("unknown analysis {other:?}"))),
    }
    out.write(cfg)
}

fn serve(cfg: &RunConfig) -> Result<(), CliError> {
    let port: u16 = cfg.parse("port")?;
    let host = cfg.require("host")?.to_string();
    let ckpt = single_checkpoint(cfg)?;
    let predictor = Predictor::new(ckpt, &expression_table(cfg)?)?;
    let mut out = Outputs::default();
    out.add("checkpoint_sha256.txt", format!("{}\n", predictor.checkpoint_hash()));
    out.write(cfg)?;
    crate::serve::run(predictor, &host, port).map_err(|e| CliError::Data(format!("serve: {e}")))
}
