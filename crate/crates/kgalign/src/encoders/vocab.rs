//! Word-level tokenizer and corpus-built vocabulary.
//!
//! Tokens are lowercase maximal alphanumeric runs; everything else is a
//! separator. Id 0 is reserved for out-of-vocabulary tokens; ids follow
//! first appearance among tokens that clear the frequency cutoff.

use std::collections::HashMap;
use std::path::Path;

use super::EncodeError;

pub const OOV_ID: u32 = 0;
pub const OOV_TOKEN: &str = "<oov>";

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from a corpus, keeping tokens that appear at least `min_count`
    /// times, in first-appearance order.
    pub fn build<'a>(corpus: impl Iterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for text in corpus {
            for tok in tokenize(text) {
                let c = counts.entry(tok.clone()).or_insert(0);
                if *c == 0 {
                    order.push(tok);
                }
                *c += 1;
            }
        }
        let mut tokens = vec![OOV_TOKEN.to_string()];
        let mut ids = HashMap::new();
        ids.insert(OOV_TOKEN.to_string(), OOV_ID);
        for tok in order {
            if counts[&tok] >= min_count {
                ids.insert(tok.clone(), tokens.len() as u32);
                tokens.push(tok);
            }
        }
        Self { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Token ids for a text; empty input maps to a single OOV token.
    pub fn encode(&self, text: &str, max_len: usize) -> Vec<u32> {
        let mut ids: Vec<u32> = tokenize(text)
            .into_iter()
            .map(|t| self.id(&t))
            .take(max_len)
            .collect();
        if ids.is_empty() {
            ids.push(OOV_ID);
        }
        ids
    }

    /// token<TAB>id, one per line, UTF-8.
    pub fn save(&self, path: &Path) -> Result<(), EncodeError> {
        let mut out = String::new();
        for (i, tok) in self.tokens.iter().enumerate() {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EncodeError> {
        let content = std::fs::read_to_string(path)?;
        let mut tokens = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let Some((tok, id)) = line.split_once('\t') else {
                return Err(EncodeError::BadVocabFile {
                    line: i + 1,
                    msg: "expected token<TAB>id".into(),
                });
            };
            let id: usize = id.parse().map_err(|_| EncodeError::BadVocabFile {
                line: i + 1,
                msg: format!("bad id {id:?}"),
            })?;
            if id != i {
                return Err(EncodeError::BadVocabFile {
                    line: i + 1,
                    msg: format!("non-contiguous id {id}"),
                });
            }
            tokens.push(tok.to_string());
        }
        if tokens.first().map(String::as_str) != Some(OOV_TOKEN) {
            return Err(EncodeError::BadVocabFile {
                line: 1,
                msg: format!("first token must be {OOV_TOKEN}"),
            });
        }
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self { tokens, ids })
    }
}
