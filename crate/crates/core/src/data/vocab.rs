use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const SPECIALS: [&str; 4] = [PAD, BOS, EOS, UNK];

pub const PAD_ID: usize = 0;
pub const BOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;

/// Token ↔ id map. Ids 0–3 are always `<pad> <s> </s> <unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Vocabulary holding the specials followed by `tokens` in order.
    /// Duplicates and special strings in `tokens` are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self {
            tokens: Vec::new(),
            ids: HashMap::new(),
        };
        for s in SPECIALS.iter().map(|s| s.to_string()) {
            v.push(s);
        }
        for t in tokens {
            let t = t.as_ref();
            if !v.ids.contains_key(t) {
                v.push(t.to_string());
            }
        }
        v
    }

    fn push(&mut self, token: String) {
        self.ids.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens.get(id).map(String::as_str).ok_or(Error::Index {
            what: "vocabulary",
            index: id,
            size: self.tokens.len(),
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Result<Vec<String>> {
        ids.iter()
            .map(|&i| self.token(i).map(str::to_string))
            .collect()
    }

    /// One token per line; line number is the id.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        if lines.len() < SPECIALS.len() || lines[..4] != SPECIALS {
            return Err(Error::Format {
                path: path.into(),
                msg: format!("first four lines must be {}", SPECIALS.join(" ")),
            });
        }
        let vocab = Self::from_tokens(&lines[4..]);
        if vocab.len() != lines.len() {
            return Err(Error::Format {
                path: path.into(),
                msg: "duplicate tokens".into(),
            });
        }
        Ok(vocab)
    }
}

/// Keeps the `max_size − 4` most frequent tokens (ties by first occurrence).
pub fn build_vocab<S: AsRef<str>>(sentences: &[Vec<S>], max_size: usize) -> Result<Vocabulary> {
    if max_size <= SPECIALS.len() {
        return Err(Error::Input(format!(
            "vocabulary size must exceed 4, got {max_size}"
        )));
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0;
    for tok in sentences.iter().flatten() {
        let tok = tok.as_ref();
        if SPECIALS.contains(&tok) {
            continue;
        }
        let e = counts.entry(tok).or_insert_with(|| {
            order += 1;
            (0, order)
        });
        e.0 += 1;
    }
    if counts.is_empty() {
        return Err(Error::Data(
            "cannot build a vocabulary from an empty corpus".into(),
        ));
    }
    let mut ranked: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
    Ok(Vocabulary::from_tokens(
        ranked
            .into_iter()
            .take(max_size - SPECIALS.len())
            .map(|(t, _)| t),
    ))
}
