use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Aligned (source, target) token sequences.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelCorpus {
    pub pairs: Vec<(Vec<String>, Vec<String>)>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<(Vec<String>, Vec<String>)>) -> Result<Self> {
        for (i, (s, t)) in pairs.iter().enumerate() {
            if s.is_empty() || t.is_empty() {
                return Err(Error::Data(format!("pair {} has an empty side", i + 1)));
            }
        }
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Vec<String>> {
        self.pairs.iter().map(|(s, _)| s.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<String>> {
        self.pairs.iter().map(|(_, t)| t.clone()).collect()
    }

    /// Writes `<prefix>.src` and `<prefix>.tgt`.
    pub fn write(&self, src: &Path, tgt: &Path) -> Result<()> {
        write_lines(src, self.pairs.iter().map(|(s, _)| s.join(" ")))?;
        write_lines(tgt, self.pairs.iter().map(|(_, t)| t.join(" ")))
    }
}

pub fn write_lines<I: IntoIterator<Item = String>>(path: &Path, lines: I) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads whitespace-tokenized lines (CRLF tolerated). Empty lines are an
/// error unless `allow_empty` is set.
pub fn load_lines(path: &Path, allow_empty: bool) -> Result<Vec<Vec<String>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Format {
        path: path.into(),
        msg: "not valid UTF-8".into(),
    })?;
    let text = text.replace("\r\n", "\n");
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let toks: Vec<String> = line.split_whitespace().map(String::from).collect();
        if toks.is_empty() && !allow_empty {
            return Err(Error::Data(format!(
                "{}: empty line {}",
                path.display(),
                i + 1
            )));
        }
        out.push(toks);
    }
    Ok(out)
}

/// Pairs line `i` of the source file with line `i` of the target file.
pub fn load_parallel(source: &Path, target: &Path) -> Result<ParallelCorpus> {
    let s = load_lines(source, false)?;
    let t = load_lines(target, false)?;
    if s.len() != t.len() {
        return Err(Error::Data(format!(
            "line count mismatch: {} has {} lines, {} has {}",
            source.display(),
            s.len(),
            target.display(),
            t.len()
        )));
    }
    ParallelCorpus::new(s.into_iter().zip(t).collect())
}
