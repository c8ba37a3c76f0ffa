use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptKind {
    /// An input file that must exist.
    Path,
    Value,
    /// Boolean; `--name` alone means true.
    Switch,
}

#[derive(Debug, Clone, Copy)]
pub struct OptSpec {
    pub name: &'static str,
    pub kind: OptKind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn path(name: &'static str, help: &'static str) -> OptSpec {
    OptSpec { name, kind: OptKind::Path, default: None, help }
}

const fn value(name: &'static str, default: Option<&'static str>, help: &'static str) -> OptSpec {
    OptSpec { name, kind: OptKind::Value, default, help }
}

const fn switch(name: &'static str, default: &'static str, help: &'static str) -> OptSpec {
    OptSpec { name, kind: OptKind::Switch, default: Some(default), help }
}

#[derive(Debug, Clone, Copy)]
pub struct CommandSpec {
    pub name: &'static str,
    pub about: &'static str,
    /// Name and allowed values of a required positional argument.
    pub action: Option<(&'static str, &'static [&'static str])>,
    pub opts: &'static [OptSpec],
    /// Accepts repeated `--model key=value` spec overrides.
    pub model_overrides: bool,
}

const DRUGS: OptSpec = path("drugs", "drug table: drug_id<TAB>smiles");
const EXPRESSION: OptSpec = path("expression", "expression table: cell_id<TAB>gene...");
const RESPONSES: OptSpec = path("responses", "responses: drug_id<TAB>cell_id<TAB>log_ic50");
const PANEL: OptSpec = path("panel", "gene panel, one gene per line (default: every expression gene)");
const CHECKPOINT: OptSpec = path("checkpoint", "checkpoint file, or a directory whose .pacc files form an ensemble");
const VARIANTS: OptSpec = value("variants", Some("32"), "SMILES strings per drug, canonical first");
const PROTOCOL: OptSpec = value("protocol", Some("strict"), "split protocol: strict or lenient");

pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "propagate",
        about: "Propagate drug targets over a PPI network and build the gene panel",
        action: None,
        opts: &[
            path("ppi", "PPI edges: gene_a<TAB>gene_b<TAB>weight"),
            path("targets", "drug targets: drug_id<TAB>comma-separated genes"),
            value("alpha", Some("0.7"), "restart trade-off"),
            value("tol", Some("1e-6"), "max-norm convergence tolerance"),
            value("max-iter", Some("10000"), "iteration cap"),
            value("k", Some("20"), "top genes kept per drug"),
            value("target-weight", Some("1"), "initial weight of target genes"),
            value("background", Some("1e-5"), "initial weight of the other genes"),
        ],
        model_overrides: false,
    },
    CommandSpec {
        name: "tokenize",
        about: "Tokenize each drug's SMILES and write the vocabulary",
        action: None,
        opts: &[DRUGS],
        model_overrides: false,
    },
    CommandSpec {
        name: "augment",
        about: "Enumerate randomized SMILES per drug",
        action: None,
        opts: &[DRUGS, value("n", Some("32"), "strings per drug, canonical first")],
        model_overrides: false,
    },
    CommandSpec {
        name: "fingerprint",
        about: "Morgan fingerprints per drug",
        action: None,
        opts: &[DRUGS, value("radius", Some("2"), "neighbourhood radius"), value("width", Some("512"), "bit width, a power of two")],
        model_overrides: false,
    },
    CommandSpec {
        name: "split",
        about: "Build a cross-validation split plan from the observed pairs",
        action: None,
        opts: &[RESPONSES, PROTOCOL],
        model_overrides: false,
    },
    CommandSpec {
        name: "train",
        about: "Cross-validate a model and keep the best checkpoints per fold",
        action: None,
        opts: &[
            DRUGS,
            EXPRESSION,
            RESPONSES,
            PANEL,
            path("plan", "split plan written by `split` (default: built from --protocol and --seed)"),
            PROTOCOL,
            value("folds", Some("all"), "folds to train: all, or comma-separated indices"),
            value("kind", Some("MCA"), "model kind: DNN, bRNN, SCNN, SA, CA or MCA"),
            value("max-steps", Some("500000"), "optimizer steps per fold"),
            value("batch-size", Some("2048"), "samples per batch"),
            value("eval-interval", Some("1000"), "steps between validations"),
            value("checkpoint-keep", Some("20"), "best checkpoints kept per fold"),
            value("lr", Some("0.001"), "initial learning rate"),
            value("lr-decay", Some("0.5"), "learning-rate decay factor"),
            value("lr-decay-interval", Some("10000"), "steps between decays"),
            switch("augment", "true", "train on every SMILES variant"),
            VARIANTS,
        ],
        model_overrides: true,
    },
    CommandSpec {
        name: "predict",
        about: "Predict log-IC50 for dataset pairs, or for one query compound",
        action: None,
        opts: &[
            CHECKPOINT,
            DRUGS,
            EXPRESSION,
            path("responses", "pairs to score (default: every drug-cell combination)"),
            switch("augment-average", "false", "average predictions over SMILES variants"),
            VARIANTS,
            value("query", None, "query SMILES; scores one compound with attention output"),
            value("cell-id", None, "query cell line from --expression"),
            value("expression-values", None, "query expression values over the panel, comma-separated"),
            value("top-k-genes", Some("10"), "attended genes reported for a query"),
        ],
        model_overrides: false,
    },
    CommandSpec {
        name: "evaluate",
        about: "Score checkpoints against observed responses",
        action: None,
        opts: &[
            CHECKPOINT,
            DRUGS,
            EXPRESSION,
            RESPONSES,
            path("plan", "split plan; restricts scoring to --subset"),
            value("subset", Some("test"), "with --plan: test, or validation:K"),
            switch("augment-average", "false", "average predictions over SMILES variants"),
            VARIANTS,
        ],
        model_overrides: false,
    },
    CommandSpec {
        name: "attention",
        about: "Attention profiles, structure correlation, attended genes and enrichment",
        action: Some(("analysis", &["profiles", "correlation", "genes", "enrich"])),
        opts: &[
            CHECKPOINT,
            DRUGS,
            EXPRESSION,
            value("drug-ids", None, "comma-separated drugs (default: all)"),
            value("cell-ids", None, "comma-separated cells (default: all)"),
            value("profile", Some("token"), "distance matrices from token or gene attention"),
            path("gene-sets", "GMT gene sets for enrichment"),
        ],
        model_overrides: false,
    },
    CommandSpec {
        name: "serve",
        about: "Serve predictions over HTTP",
        action: None,
        opts: &[
            CHECKPOINT,
            EXPRESSION,
            value("host", Some("127.0.0.1"), "bind address"),
            value("port", Some("8080"), "bind port"),
        ],
        model_overrides: false,
    },
];

pub fn command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

fn known_key(key: &str) -> bool {
    matches!(key, "seed" | "out")
        || key.strip_prefix("model.").is_some_and(|k| !k.is_empty())
        || COMMANDS.iter().any(|c| c.opts.iter().any(|o| o.name == key))
}

/// Parses `key = value` lines. Lines starting with `#` are comments; a `#`
/// elsewhere is part of the value, since SMILES use it for triple bonds.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--config: line {}: expected key = value", n + 1)))?;
        let k = k.trim().to_string();
        if !known_key(&k) {
            return Err(CliError::Usage(format!("--config: line {}: unknown key {k:?}", n + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

/// Fully resolved settings of one run: defaults, then the config file, then
/// command-line flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: &'static CommandSpec,
    pub action: Option<String>,
    pub values: BTreeMap<String, String>,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    /// Raw `PACC_THREADS`, when set.
    pub threads_env: Option<String>,
}

impl RunConfig {
    pub fn resolve(
        command: &'static CommandSpec,
        action: Option<String>,
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
        threads_env: Option<String>,
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            command.opts.iter().filter_map(|o| o.default.map(|d| (o.name.to_string(), d.to_string()))).collect();
        values.insert("seed".into(), "0".into());
        values.insert("out".into(), "pacc-out".into());
        let relevant = |k: &str| {
            matches!(k, "seed" | "out") || command.opts.iter().any(|o| o.name == k) || (command.model_overrides && k.starts_with("model."))
        };
        values.extend(file.into_iter().filter(|(k, _)| relevant(k)));
        values.extend(flags);
        let seed = values["seed"].parse::<u64>().map_err(|_| CliError::Usage(format!("--seed: invalid value {:?}", values["seed"])))?;
        let out = PathBuf::from(&values["out"]);
        let threads = match &threads_env {
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            Some(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => n,
                _ => return Err(CliError::Usage(format!("PACC_THREADS: invalid value {v:?}"))),
            },
        };
        let cfg = RunConfig { command, action, values, seed, out, threads, threads_env };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        for o in self.command.opts {
            let Some(v) = self.values.get(o.name) else { continue };
            match o.kind {
                OptKind::Path if !Path::new(v).exists() => {
                    return Err(CliError::Usage(format!("--{}: no such file or directory: {v}", o.name)));
                }
                OptKind::Switch if v.parse::<bool>().is_err() => {
                    return Err(CliError::Usage(format!("--{}: expected true or false, got {v:?}", o.name)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| CliError::Usage(format!("--{key}: required")))
    }

    pub fn path(&self, key: &str) -> Result<&Path, CliError> {
        self.require(key).map(Path::new)
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.require(key)?;
        v.parse().map_err(|_| CliError::Usage(format!("--{key}: invalid value {v:?}")))
    }

    pub fn switch(&self, key: &str) -> Result<bool, CliError> {
        Ok(self.get(key).is_some() && self.parse::<bool>(key)?)
    }

    /// `model.*` entries with the prefix removed.
    pub fn model_overrides(&self) -> Vec<(&str, &str)> {
        self.values.iter().filter_map(|(k, v)| k.strip_prefix("model.").map(|k| (k, v.as_str()))).collect()
    }

    /// Canonical `key = value` text of everything that shapes the outputs.
    pub fn config_text(&self) -> String {
        let mut s = format!("command = {}\n", self.command.name);
        if let Some(a) = &self.action {
            s.push_str(&format!("action = {a}\n"));
        }
        for (k, v) in self.values.iter().filter(|(k, _)| k.as_str() != "out") {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.config_text().as_bytes()))
    }
}

/// Files produced by a run, written together once every one of them has
/// been computed.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    /// Writes every file under the run directory, then `manifest.tsv`.
    pub fn write(self, cfg: &RunConfig) -> Result<(), CliError> {
        let io = |p: &Path, e: std::io::Error| CliError::Data(format!("{}: {e}", p.display()));
        let mut manifest = format!(
            "tool\tpacc\nversion\t{}\ncommand\t{}\nseed\t{}\nthreads\t{}\npacc_threads\t{}\nconfig_sha256\t{}\n",
            env!("CARGO_PKG_VERSION"),
            cfg.command.name,
            cfg.seed,
            cfg.threads,
            cfg.threads_env.as_deref().unwrap_or("unset"),
            cfg.config_hash(),
        );
        for line in cfg.config_text().lines() {
            manifest.push_str(&format!("config\t{line}\n"));
        }
        for (name, bytes) in &self.files {
            let path = cfg.out.join(name);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
            manifest.push_str(&format!("output\t{name}\t{}\n", hex::encode(Sha256::digest(bytes))));
        }
        std::fs::create_dir_all(&cfg.out).map_err(|e| io(&cfg.out, e))?;
        let path = cfg.out.join("manifest.tsv");
        std::fs::write(&path, manifest).map_err(|e| io(&path, e))
    }
}
