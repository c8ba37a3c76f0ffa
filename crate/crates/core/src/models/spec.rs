use std::fmt;
use std::str::FromStr;

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Dnn,
    Brnn,
    Scnn,
    Sa,
    Ca,
    Mca,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [ModelKind::Dnn, ModelKind::Brnn, ModelKind::Scnn, ModelKind::Sa, ModelKind::Ca, ModelKind::Mca];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "DNN",
            ModelKind::Brnn => "bRNN",
            ModelKind::Scnn => "SCNN",
            ModelKind::Sa => "SA",
            ModelKind::Ca => "CA",
            ModelKind::Mca => "MCA",
        }
    }

    /// Whether the model reads token ids (everything but the fingerprint baseline).
    pub fn uses_smiles(self) -> bool {
        self != ModelKind::Dnn
    }

    /// Whether the model emits token attention (SA, CA and MCA).
    pub fn has_token_attention(self) -> bool {
        matches!(self, ModelKind::Sa | ModelKind::Ca | ModelKind::Mca)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ModelError::InvalidSpec(format!("unknown model kind {s:?}")))
    }
}

pub const DEFAULT_EMBEDDING: usize = 16;
pub const DEFAULT_P_DROP: f64 = 0.5;
pub const DNN_LAYERS: [usize; 6] = [512, 256, 128, 64, 32, 16];
pub const SMILES_DENSE_LAYERS: [usize; 3] = [512, 128, 64];

/// Architecture hyperparameters. Fields that a kind does not use keep their
/// defaults and are left out of the serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Embedding size H.
    pub embedding: usize,
    /// Attention size A.
    pub attention: usize,
    /// Kernels per MCA channel f.
    pub filters: usize,
    /// Heads per MCA channel m.
    pub heads: usize,
    /// MCA channel widths, or SCNN layer widths.
    pub kernel_widths: Vec<usize>,
    /// SCNN channels per layer.
    pub scnn_channels: Vec<usize>,
    pub rnn_hidden: usize,
    pub rnn_layers: usize,
    pub dense: Vec<usize>,
    pub p_drop: f64,
    pub vocab: usize,
    pub panel: usize,
    pub max_len: usize,
    pub fingerprint_width: usize,
    /// Exclude pads from attention softmaxes.
    pub mask_pads: bool,
}

impl ModelSpec {
    /// Published defaults for `kind`. The fingerprint model ignores `vocab` and `max_len`.
    pub fn new(kind: ModelKind, vocab: usize, panel: usize, max_len: usize) -> Self {
        let mut spec = ModelSpec {
            kind,
            embedding: DEFAULT_EMBEDDING,
            attention: 256,
            filters: 64,
            heads: 4,
            kernel_widths: vec![3, 5, 11],
            scnn_channels: vec![32, 32, 32, 16],
            rnn_hidden: 64,
            rnn_layers: 2,
            dense: SMILES_DENSE_LAYERS.to_vec(),
            p_drop: DEFAULT_P_DROP,
            vocab,
            panel,
            max_len,
            fingerprint_width: crate::chem::DEFAULT_WIDTH,
            mask_pads: true,
        };
        match kind {
            ModelKind::Dnn => {
                spec.dense = DNN_LAYERS.to_vec();
                spec.vocab = 0;
                spec.max_len = 0;
            }
            ModelKind::Scnn => spec.kernel_widths = vec![5, 5, 5, 5],
            ModelKind::Mca => spec.attention = 64,
            _ => {}
        }
        spec
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::InvalidSpec(what.to_string()));
        if self.panel == 0 {
            return bad("panel size must be at least 1");
        }
        if self.dense.iter().any(|&d| d == 0) {
            return bad("dense layer sizes must be at least 1");
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return bad("p_drop must lie in [0, 1)");
        }
        match self.kind {
            ModelKind::Dnn => {
                if self.fingerprint_width == 0 {
                    return bad("fingerprint_width must be at least 1");
                }
                return Ok(());
            }
            _ => {
                if self.vocab < 2 || self.embedding == 0 || self.max_len == 0 {
                    return bad("vocab must be at least 2 and embedding, max_len at least 1");
                }
            }
        }
        match self.kind {
            ModelKind::Brnn if self.rnn_hidden == 0 || self.rnn_layers == 0 => bad("rnn_hidden and rnn_layers must be at least 1"),
            ModelKind::Scnn if self.scnn_channels.is_empty() || self.scnn_channels.len() != self.kernel_widths.len() => {
                bad("scnn_channels and kernel_widths must be non-empty and equally long")
            }
            ModelKind::Scnn if self.scnn_channels.contains(&0) => bad("scnn_channels must be at least 1"),
            ModelKind::Sa | ModelKind::Ca if self.attention == 0 => bad("attention must be at least 1"),
            ModelKind::Mca if self.attention == 0 || self.filters == 0 || self.heads == 0 || self.kernel_widths.is_empty() => {
                bad("attention, filters, heads and kernel_widths must be non-empty")
            }
            ModelKind::Scnn | ModelKind::Mca if self.kernel_widths.iter().any(|w| w % 2 == 0) => bad("kernel widths must be odd"),
            _ => Ok(()),
        }
    }

    /// Keys written for this kind, in order.
    fn keys(&self) -> Vec<&'static str> {
        let mut keys = vec!["kind", "dense", "p_drop", "panel"];
        match self.kind {
            ModelKind::Dnn => keys.push("fingerprint_width"),
            kind => {
                keys.extend(["vocab", "max_len", "embedding"]);
                match kind {
                    ModelKind::Brnn => keys.extend(["rnn_hidden", "rnn_layers"]),
                    ModelKind::Scnn => keys.extend(["scnn_channels", "kernel_widths"]),
                    ModelKind::Sa => keys.extend(["attention", "mask_pads"]),
                    ModelKind::Ca => keys.extend(["attention", "mask_pads"]),
                    ModelKind::Mca => keys.extend(["attention", "filters", "heads", "kernel_widths", "mask_pads"]),
                    ModelKind::Dnn => unreachable!(),
                }
            }
        }
        keys
    }

    fn value_of(&self, key: &str) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match key {
            "kind" => self.kind.to_string(),
            "embedding" => self.embedding.to_string(),
            "attention" => self.attention.to_string(),
            "filters" => self.filters.to_string(),
            "heads" => self.heads.to_string(),
            "kernel_widths" => list(&self.kernel_widths),
            "scnn_channels" => list(&self.scnn_channels),
            "rnn_hidden" => self.rnn_hidden.to_string(),
            "rnn_layers" => self.rnn_layers.to_string(),
            "dense" => list(&self.dense),
            "p_drop" => format!("{:?}", self.p_drop),
            "vocab" => self.vocab.to_string(),
            "panel" => self.panel.to_string(),
            "max_len" => self.max_len.to_string(),
            "fingerprint_width" => self.fingerprint_width.to_string(),
            "mask_pads" => self.mask_pads.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// `key = value` lines.
    pub fn to_config(&self) -> String {
        self.keys().into_iter().map(|k| format!("{k} = {}\n", self.value_of(k))).collect()
    }

    /// Parses `key = value` lines; `#` starts a comment. Missing keys take
    /// the kind's defaults; unknown keys are an error.
    pub fn from_config(text: &str) -> Result<Self, ModelError> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ModelError::InvalidSpec(format!("line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let kind: ModelKind = pairs
            .iter()
            .find(|(k, _)| k == "kind")
            .ok_or_else(|| ModelError::InvalidSpec("missing kind".into()))?
            .1
            .parse()?;
        let mut spec = ModelSpec::new(kind, 0, 0, 0);
        for (k, v) in &pairs {
            spec.set(k, v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        let err = || ModelError::InvalidSpec(format!("bad value {value:?} for {key}"));
        let int = || value.parse::<usize>().map_err(|_| err());
        let list = || -> Result<Vec<usize>, ModelError> {
            value.split(',').map(|p| p.trim().parse::<usize>().map_err(|_| err())).collect()
        };
        match key {
            "kind" => self.kind = value.parse()?,
            "embedding" => self.embedding = int()?,
            "attention" => self.attention = int()?,
            "filters" => self.filters = int()?,
            "heads" => self.heads = int()?,
            "kernel_widths" => self.kernel_widths = list()?,
            "scnn_channels" => self.scnn_channels = list()?,
            "rnn_hidden" => self.rnn_hidden = int()?,
            "rnn_layers" => self.rnn_layers = int()?,
            "dense" => self.dense = if value.is_empty() { Vec::new() } else { list()? },
            "p_drop" => self.p_drop = value.parse().map_err(|_| err())?,
            "vocab" => self.vocab = int()?,
            "panel" => self.panel = int()?,
            "max_len" => self.max_len = int()?,
            "fingerprint_width" => self.fingerprint_width = int()?,
            "mask_pads" => self.mask_pads = value.parse().map_err(|_| err())?,
            _ => return Err(ModelError::InvalidSpec(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Width of the concatenated MCA head outputs: `c·m·f + m·H` for `c`
    /// convolution channels.
    pub fn mca_concat_width(&self) -> usize {
        self.kernel_widths.len() * self.heads * self.filters + self.heads * self.embedding
    }

    /// Positions seen by one output of the stacked SCNN convolutions.
    pub fn scnn_receptive_field(&self) -> usize {
        1 + self.kernel_widths.iter().map(|w| w - 1).sum::<usize>()
    }
}
