use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics for corpus BLEU; additive over sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub max_n: usize,
    /// Clipped n-gram matches per order (index 0 = unigrams).
    pub matches: Vec<usize>,
    /// Hypothesis n-gram counts per order.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    /// Sum of closest reference lengths.
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new(max_n: usize) -> Self {
        Self {
            max_n,
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..self.max_n {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    pub score: f64,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    pub stats: BleuStats,
}

impl BleuReport {
    pub fn from_stats(stats: BleuStats) -> Self {
        let precisions: Vec<f64> = stats
            .matches
            .iter()
            .zip(&stats.totals)
            .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
            .collect();
        let (c, r) = (stats.hyp_len as f64, stats.ref_len as f64);
        let brevity_penalty = match stats.hyp_len {
            0 => 0.0,
            _ if c > r => 1.0,
            _ => (1.0 - r / c).exp(),
        };
        // orders with no hypothesis n-grams at all (every sentence shorter
        // than n) are left out of the geometric mean
        let live: Vec<f64> = precisions
            .iter()
            .zip(&stats.totals)
            .filter(|(_, &t)| t > 0)
            .map(|(&p, _)| p)
            .collect();
        let score = if !live.is_empty() && live.iter().all(|&p| p > 0.0) {
            let mean_log = live.iter().map(|p| p.ln()).sum::<f64>() / live.len() as f64;
            brevity_penalty * mean_log.exp()
        } else {
            0.0
        };
        Self {
            score,
            precisions,
            brevity_penalty,
            hyp_len: stats.hyp_len,
            ref_len: stats.ref_len,
            stats,
        }
    }
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ps: Vec<String> = self
            .precisions
            .iter()
            .map(|p| format!("{:.1}", 100.0 * p))
            .collect();
        write!(
            f,
            "BLEU = {:.2}, {} (BP={:.3}, ratio={:.3}, hyp_len={}, ref_len={})",
            100.0 * self.score,
            ps.join("/"),
            self.brevity_penalty,
            if self.ref_len == 0 {
                0.0
            } else {
                self.hyp_len as f64 / self.ref_len as f64
            },
            self.hyp_len,
            self.ref_len
        )
    }
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Statistics of one hypothesis against its references.
pub fn sentence_stats(hyp: &[String], refs: &[&[String]], max_n: usize) -> BleuStats {
    let mut s = BleuStats::new(max_n);
    s.hyp_len = hyp.len();
    // closest reference length, ties to the shorter one
    s.ref_len = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(hyp.len()), len))
        .unwrap_or(0);
    for n in 1..=max_n {
        let hc = ngram_counts(hyp, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        s.matches[n - 1] = hc
            .iter()
            .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
    }
    s
}

fn normalize(sentences: &[Vec<String>], lowercase: bool) -> Vec<Vec<String>> {
    sentences
        .iter()
        .map(|s| {
            s.iter()
                .map(|t| {
                    if lowercase {
                        t.to_lowercase()
                    } else {
                        t.clone()
                    }
                })
                .collect()
        })
        .collect()
}

fn check_sets(hyps: &[Vec<String>], reference_sets: &[Vec<Vec<String>>]) -> Result<()> {
    if reference_sets.is_empty() {
        return Err(Error::Input(
            "at least one reference set is required".into(),
        ));
    }
    for (k, set) in reference_sets.iter().enumerate() {
        if set.len() != hyps.len() {
            return Err(Error::Input(format!(
                "{} hypotheses but reference set {} has {} sentences",
                hyps.len(),
                k + 1,
                set.len()
            )));
        }
    }
    Ok(())
}

/// Per-sentence statistics; `reference_sets[k][i]` is reference `k` of sentence `i`.
pub fn corpus_stats(
    hyps: &[Vec<String>],
    reference_sets: &[Vec<Vec<String>>],
    max_n: usize,
    lowercase: bool,
) -> Result<Vec<BleuStats>> {
    check_sets(hyps, reference_sets)?;
    if max_n == 0 {
        return Err(Error::Input("max n-gram order must be positive".into()));
    }
    let hyps = normalize(hyps, lowercase);
    let sets: Vec<Vec<Vec<String>>> = reference_sets
        .iter()
        .map(|s| normalize(s, lowercase))
        .collect();
    Ok(hyps
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let refs: Vec<&[String]> = sets.iter().map(|s| s[i].as_slice()).collect();
            sentence_stats(h, &refs, max_n)
        })
        .collect())
}

/// Unsmoothed corpus BLEU with clipping against the per-sentence maximum
/// over references.
pub fn bleu(
    hyps: &[Vec<String>],
    reference_sets: &[Vec<Vec<String>>],
    max_n: usize,
    lowercase: bool,
) -> Result<BleuReport> {
    let mut total = BleuStats::new(max_n);
    for s in corpus_stats(hyps, reference_sets, max_n, lowercase)? {
        total.add(&s);
    }
    Ok(BleuReport::from_stats(total))
}

/// Sentence-level BLEU with add-one smoothing on orders ≥ 2. Diagnostic only.
pub fn sentence_bleu_smoothed(hyp: &[String], refs: &[&[String]], max_n: usize) -> f64 {
    let s = sentence_stats(hyp, refs, max_n);
    if s.hyp_len == 0 || s.matches[0] == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        let p = if n == 0 {
            s.matches[0] as f64 / s.totals[0] as f64
        } else {
            (s.matches[n] as f64 + 1.0) / (s.totals[n] as f64 + 1.0)
        };
        log_sum += p.ln();
    }
    let bp = if s.hyp_len > s.ref_len {
        1.0
    } else {
        (1.0 - s.ref_len as f64 / s.hyp_len as f64).exp()
    };
    bp * (log_sum / max_n as f64).exp()
}

/// Fraction of exact matches.
pub fn sequence_accuracy<T: PartialEq>(hyps: &[T], refs: &[T]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Input(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if hyps.is_empty() {
        return Err(Error::Input("no sentences to score".into()));
    }
    let hits = hyps.iter().zip(refs).filter(|(h, r)| h == r).count();
    Ok(hits as f64 / hyps.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketReport {
    /// Source lengths in `(low, high]`; `high` is `None` for the last bucket.
    pub low: usize,
    pub high: Option<usize>,
    pub sentences: usize,
    pub report: BleuReport,
}

impl BucketReport {
    pub fn label(&self) -> String {
        match self.high {
            Some(h) => format!("{}-{}", self.low + 1, h),
            None => format!(">{}", self.low),
        }
    }
}

/// Corpus BLEU within source-length buckets. Edges are inclusive upper
/// bounds; lengths above the last edge form a final bucket. Empty buckets
/// are omitted.
pub fn bleu_by_length(
    hyps: &[Vec<String>],
    reference_sets: &[Vec<Vec<String>>],
    source_lengths: &[usize],
    edges: &[usize],
    lowercase: bool,
) -> Result<Vec<BucketReport>> {
    if source_lengths.len() != hyps.len() {
        return Err(Error::Input(format!(
            "{} hypotheses but {} source sentences",
            hyps.len(),
            source_lengths.len()
        )));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Input(format!(
            "bucket edges must be strictly increasing: {edges:?}"
        )));
    }
    let stats = corpus_stats(hyps, reference_sets, MAX_ORDER, lowercase)?;
    let mut buckets: Vec<(BleuStats, usize)> =
        vec![(BleuStats::new(MAX_ORDER), 0); edges.len() + 1];
    for (s, &len) in stats.iter().zip(source_lengths) {
        let k = edges.iter().position(|&e| len <= e).unwrap_or(edges.len());
        buckets[k].0.add(s);
        buckets[k].1 += 1;
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .filter(|(_, (_, count))| *count > 0)
        .map(|(k, (s, count))| BucketReport {
            low: if k == 0 { 0 } else { edges[k - 1] },
            high: edges.get(k).copied(),
            sentences: count,
            report: BleuReport::from_stats(s),
        })
        .collect())
}

/// Splits each line on whitespace.
pub fn tokenize_lines<S: AsRef<str>>(lines: &[S]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| l.as_ref().split_whitespace().map(str::to_string).collect())
        .collect()
}
