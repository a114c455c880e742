use std::collections::HashMap;

use crate::error::{Result, S2vtError};

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

pub const RESERVED_TOKENS: [&str; 4] = ["<pad>", "<BOS>", "<EOS>", "<unk>"];

/// Token ↔ id bijection with the four reserved ids in front.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    /// Reserved tokens followed by `words` in the given order.
    pub fn with_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens = RESERVED_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(words.into_iter().map(Into::into))
            .collect();
        Vocabulary::from_tokens(tokens)
    }

    /// Full token list in id order, reserved tokens included.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED_TOKENS.len()
            || tokens.iter().zip(RESERVED_TOKENS).any(|(t, r)| t != r)
        {
            return Err(S2vtError::invalid(
                "vocabulary must start with <pad>, <BOS>, <EOS>, <unk>",
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(S2vtError::invalid("empty token in vocabulary"));
            }
            if index.insert(t.clone(), id).is_some() {
                return Err(S2vtError::invalid(format!("duplicate token {t:?} in vocabulary")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn is_reserved(id: TokenId) -> bool {
        id < RESERVED_TOKENS.len()
    }

    /// Maps words to ids; unknown words become `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<TokenId> {
        words
            .iter()
            .map(|w| self.id(w.as_ref()).unwrap_or(UNK))
            .collect()
    }

    /// `encode` plus the terminating `<EOS>`.
    pub fn encode_target<S: AsRef<str>>(&self, words: &[S]) -> Vec<TokenId> {
        let mut ids = self.encode(words);
        ids.push(EOS);
        ids
    }

    /// Space-joined words for `ids`, stopping at the first `<EOS>`.
    pub fn render(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .filter_map(|&id| self.token(id))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = Vocabulary::with_words(["a", "b"]).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("<pad>"), Some(PAD));
        assert_eq!(v.id("<BOS>"), Some(BOS));
        assert_eq!(v.id("<EOS>"), Some(EOS));
        assert_eq!(v.id("<unk>"), Some(UNK));
        assert_eq!(v.id("a"), Some(4));
    }

    #[test]
    fn rejects_duplicates_and_missing_reserved() {
        assert!(Vocabulary::with_words(["a", "a"]).is_err());
        assert!(Vocabulary::from_tokens(vec!["a".into()]).is_err());
    }

    #[test]
    fn encode_maps_unknowns() {
        let v = Vocabulary::with_words(["a"]).unwrap();
        assert_eq!(v.encode_target(&["a", "zzz"]), vec![4, UNK, EOS]);
        assert_eq!(v.render(&[4, UNK, EOS, 4]), "a <unk>");
    }
}
