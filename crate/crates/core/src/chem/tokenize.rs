use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use regex::Regex;

use super::ChemError;

/// Token pattern: bracket atoms, two-letter halogens, `%nn` ring labels, and
/// single-character atoms, bonds, branches and digits.
pub const TOKEN_PATTERN: &str =
    r"(\[[^\]]+\]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9])";

pub const PAD_ID: usize = 0;
pub const UNKNOWN_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNKNOWN_TOKEN: &str = "<unk>";

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(TOKEN_PATTERN).expect("valid token pattern"))
}

/// Splits a SMILES string into tokens; the concatenation of the result is `s`.
pub fn tokenize(s: &str) -> Result<Vec<String>, ChemError> {
    if s.is_empty() {
        return Err(ChemError::EmptyInput { offset: 0 });
    }
    let mut tokens = Vec::new();
    let mut cursor = 0;
    for m in token_regex().find_iter(s) {
        if m.start() != cursor {
            return Err(ChemError::TokenizationGap {
                offset: cursor,
                ch: s[cursor..].chars().next().unwrap(),
            });
        }
        tokens.push(m.as_str().to_string());
        cursor = m.end();
    }
    if cursor != s.len() {
        return Err(ChemError::TokenizationGap { offset: cursor, ch: s[cursor..].chars().next().unwrap() });
    }
    Ok(tokens)
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens.iter().map(|t| t.as_ref()).collect()
}

/// Token dictionary with reserved pad (0) and unknown (1) entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokenized corpus strings; tokens are sorted
    /// lexicographically before ids are assigned.
    pub fn from_corpus<I, S>(corpus: I) -> Result<Self, ChemError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for s in corpus {
            set.extend(tokenize(s.as_ref())?);
        }
        Ok(Self::from_tokens(set))
    }

    /// Builds from an explicit token list (reserved entries are added in front).
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut list = vec![PAD_TOKEN.to_string(), UNKNOWN_TOKEN.to_string()];
        let mut rest: Vec<String> = tokens
            .into_iter()
            .filter(|t| t != PAD_TOKEN && t != UNKNOWN_TOKEN)
            .collect();
        rest.sort();
        rest.dedup();
        list.extend(rest);
        let index = list.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens: list, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// All tokens in id order, reserved entries included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokenizes `s` and maps to ids, padded with [`PAD_ID`] to `pad_to`
    /// (truncating longer sequences).
    pub fn encode(&self, s: &str, pad_to: Option<usize>) -> Result<TokenSequence, ChemError> {
        let mut tokens = tokenize(s)?;
        if let Some(t) = pad_to {
            tokens.truncate(t);
        }
        let mut ids: Vec<usize> = tokens.iter().map(|t| self.id(t)).collect();
        let len = ids.len();
        let total = pad_to.unwrap_or(len).max(len);
        ids.resize(total, PAD_ID);
        tokens.resize(total, PAD_TOKEN.to_string());
        let pad_mask = (0..total).map(|i| i >= len).collect();
        Ok(TokenSequence { tokens, ids, pad_mask })
    }
}

/// Token strings with their ids and a pad mask (`true` at pad positions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub pad_mask: Vec<bool>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of non-pad positions.
    pub fn valid_len(&self) -> usize {
        self.pad_mask.iter().filter(|&&p| !p).count()
    }

    /// SMILES text of the non-pad tokens.
    pub fn detokenize(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.pad_mask)
            .filter(|(_, &p)| !p)
            .map(|(t, _)| t.as_str())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_tokens() {
        assert_eq!(tokenize("CCO").unwrap(), ["C", "C", "O"]);
        assert_eq!(tokenize("[C@@H](Cl)Br").unwrap(), ["[C@@H]", "(", "Cl", ")", "Br"]);
        assert_eq!(tokenize("C%12CC%12").unwrap(), ["C", "%12", "C", "C", "%12"]);
        assert_eq!(tokenize("[NH4+]").unwrap(), ["[NH4+]"]);
    }

    #[test]
    fn gap_reported() {
        assert_eq!(tokenize("CCX"), Err(ChemError::TokenizationGap { offset: 2, ch: 'X' }));
        assert_eq!(tokenize("C C"), Err(ChemError::TokenizationGap { offset: 1, ch: ' ' }));
    }

    #[test]
    fn detokenize_concatenates() {
        assert_eq!(detokenize(&["C", "C", "O"]), "CCO");
        assert_eq!(detokenize(&["[NH4+]"]), "[NH4+]");
    }

    #[test]
    fn vocabulary_is_sorted_and_reserved() {
        let v = Vocabulary::from_corpus(["CCO", "c1ccccc1Cl"]).unwrap();
        assert_eq!(v.token(0), Some(PAD_TOKEN));
        assert_eq!(v.token(1), Some(UNKNOWN_TOKEN));
        let rest: Vec<_> = v.tokens()[2..].to_vec();
        let mut sorted = rest.clone();
        sorted.sort();
        assert_eq!(rest, sorted);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), i);
        }
        assert_eq!(v.id("[Fe]"), UNKNOWN_ID);
    }

    #[test]
    fn encode_pads() {
        let v = Vocabulary::from_corpus(["CCO"]).unwrap();
        let seq = v.encode("CCO", Some(5)).unwrap();
        assert_eq!(seq.ids.len(), 5);
        assert_eq!(&seq.ids[3..], &[PAD_ID, PAD_ID]);
        assert_eq!(seq.pad_mask, vec![false, false, false, true, true]);
        assert_eq!(seq.detokenize(), "CCO");
        assert_eq!(seq.valid_len(), 3);
    }
}
