//! SMILES parsing and writing, augmentation, tokenization, circular
//! fingerprints and Tanimoto similarity.

mod canon;
mod fingerprint;
mod graph;
mod parser;
mod tokenize;
mod writer;

pub use canon::{canonical_form, canonical_ranks};
pub use fingerprint::{
    mix_hash, morgan_fingerprint, tanimoto, Fingerprint, DEFAULT_RADIUS, DEFAULT_WIDTH,
};
pub use graph::{atomic_number, Atom, Bond, BondOrder, MolGraph, Stereo};
pub use parser::parse_smiles;
pub use tokenize::{
    detokenize, tokenize, TokenSequence, Vocabulary, PAD_ID, PAD_TOKEN, TOKEN_PATTERN, UNKNOWN_ID,
    UNKNOWN_TOKEN,
};
pub use writer::{augment, enumerate_smiles, write_smiles, DEFAULT_AUGMENTATION};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChemError {
    #[error("empty SMILES at offset {offset}")]
    EmptyInput { offset: usize },
    #[error("unbalanced parenthesis at offset {offset}")]
    UnbalancedParenthesis { offset: usize },
    #[error("unclosed ring bond opened at offset {offset}")]
    UnclosedRingBond { offset: usize },
    #[error("unknown atom symbol {symbol:?} at offset {offset}")]
    UnknownAtomSymbol { offset: usize, symbol: String },
    #[error("unexpected character {ch:?} at offset {offset}")]
    UnexpectedCharacter { offset: usize, ch: char },
    #[error("bond symbol without a following atom at offset {offset}")]
    DanglingBond { offset: usize },
    #[error("unclosed bracket atom at offset {offset}")]
    UnclosedBracket { offset: usize },
    #[error("ring closure at offset {offset} conflicts with the opening bond symbol")]
    ConflictingRingBond { offset: usize },
    #[error("ring closure at offset {offset} duplicates an existing bond")]
    InvalidRingBond { offset: usize },
    #[error("no token matches {ch:?} at offset {offset}")]
    TokenizationGap { offset: usize, ch: char },
    #[error("start atom {index} out of range for {atoms} atoms")]
    InvalidStartAtom { index: usize, atoms: usize },
    #[error("fingerprint width {width} is not a positive power of two")]
    InvalidWidth { width: usize },
    #[error("fingerprint widths differ ({left} vs {right})")]
    WidthMismatch { left: usize, right: usize },
    #[error("malformed fingerprint hex")]
    BadFingerprintHex,
}

impl ChemError {
    /// Byte offset in the input, for errors tied to a position.
    pub fn offset(&self) -> Option<usize> {
        use ChemError::*;
        match self {
            EmptyInput { offset }
            | UnbalancedParenthesis { offset }
            | UnclosedRingBond { offset }
            | UnknownAtomSymbol { offset, .. }
            | UnexpectedCharacter { offset, .. }
            | DanglingBond { offset }
            | UnclosedBracket { offset }
            | ConflictingRingBond { offset }
            | InvalidRingBond { offset }
            | TokenizationGap { offset, .. } => Some(*offset),
            _ => None,
        }
    }

    /// Variant name, used in structured error payloads.
    pub fn kind(&self) -> &'static str {
        use ChemError::*;
        match self {
            EmptyInput { .. } => "EmptyInput",
            UnbalancedParenthesis { .. } => "UnbalancedParenthesis",
            UnclosedRingBond { .. } => "UnclosedRingBond",
            UnknownAtomSymbol { .. } => "UnknownAtomSymbol",
            UnexpectedCharacter { .. } => "UnexpectedCharacter",
            DanglingBond { .. } => "DanglingBond",
            UnclosedBracket { .. } => "UnclosedBracket",
            ConflictingRingBond { .. } => "ConflictingRingBond",
            InvalidRingBond { .. } => "InvalidRingBond",
            TokenizationGap { .. } => "TokenizationGap",
            InvalidStartAtom { .. } => "InvalidStartAtom",
            InvalidWidth { .. } => "InvalidWidth",
            WidthMismatch { .. } => "WidthMismatch",
            BadFingerprintHex => "BadFingerprintHex",
        }
    }
}
