use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::ParallelCorpus;
use crate::error::{Error, Result};

pub const MARKER_EVEN: &str = "EVEN";
pub const MARKER_ODD: &str = "ODD";

/// Toy transduction tasks over tokens `t0 … t{V−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Copy,
    Reverse,
    Sort,
    /// Source followed by `EVEN`/`ODD`: the parity of the sum of token indices.
    SuffixChecksum,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(Task::Copy),
            "reverse" => Ok(Task::Reverse),
            "sort" => Ok(Task::Sort),
            "suffix_checksum" | "suffix-checksum" => Ok(Task::SuffixChecksum),
            other => Err(Error::Input(format!(
                "unknown task `{other}` (expected copy, reverse, sort or suffix_checksum)"
            ))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Copy => "copy",
            Task::Reverse => "reverse",
            Task::Sort => "sort",
            Task::SuffixChecksum => "suffix_checksum",
        })
    }
}

fn token(i: usize) -> String {
    format!("t{i}")
}

/// Deterministic per `(task, n, seed, lengths, vocab_size)`.
pub fn gen_synthetic(
    task: Task,
    n: usize,
    seed: u64,
    len_range: (usize, usize),
    vocab_size: usize,
) -> Result<ParallelCorpus> {
    let (lo, hi) = len_range;
    if lo == 0 || lo > hi {
        return Err(Error::Input(format!("invalid length range {lo}..={hi}")));
    }
    if vocab_size == 0 {
        return Err(Error::Input("vocabulary size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n);
    for _ in 0..n {
        let len = rng.random_range(lo..=hi);
        let ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab_size)).collect();
        let tgt_ids: Vec<usize> = match task {
            Task::Copy | Task::SuffixChecksum => ids.clone(),
            Task::Reverse => ids.iter().rev().copied().collect(),
            Task::Sort => {
                let mut s = ids.clone();
                s.sort_unstable();
                s
            }
        };
        let src: Vec<String> = ids.iter().map(|&i| token(i)).collect();
        let mut tgt: Vec<String> = tgt_ids.iter().map(|&i| token(i)).collect();
        if task == Task::SuffixChecksum {
            let sum: usize = ids.iter().sum();
            tgt.push(
                if sum % 2 == 0 {
                    MARKER_EVEN
                } else {
                    MARKER_ODD
                }
                .to_string(),
            );
        }
        pairs.push((src, tgt));
    }
    ParallelCorpus::new(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_rules() {
        let c = gen_synthetic(Task::Copy, 20, 1, (1, 6), 9).unwrap();
        assert!(c.pairs.iter().all(|(s, t)| s == t));
        let r = gen_synthetic(Task::Reverse, 20, 1, (1, 6), 9).unwrap();
        for ((s, t), (cs, _)) in r.pairs.iter().zip(&c.pairs) {
            assert_eq!(s, cs);
            assert_eq!(
                t.iter().rev().collect::<Vec<_>>(),
                s.iter().collect::<Vec<_>>()
            );
        }
        let s = gen_synthetic(Task::Sort, 20, 2, (2, 6), 15).unwrap();
        for (_, t) in &s.pairs {
            let idx: Vec<usize> = t.iter().map(|x| x[1..].parse().unwrap()).collect();
            assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn checksum_marker_matches_independent_parity_recount() {
        let c = gen_synthetic(Task::SuffixChecksum, 200, 5, (1, 10), 20).unwrap();
        let mut seen = [false; 2];
        for (s, t) in &c.pairs {
            assert_eq!(&t[..t.len() - 1], &s[..]);
            // count odd-indexed tokens: sum parity equals their count's parity
            let odd = s
                .iter()
                .filter(|x| x[1..].parse::<usize>().unwrap() % 2 == 1)
                .count();
            let expect = if odd % 2 == 0 { "EVEN" } else { "ODD" };
            assert_eq!(t.last().unwrap(), expect);
            seen[odd % 2] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = gen_synthetic(Task::Reverse, 50, 7, (3, 12), 20).unwrap();
        let b = gen_synthetic(Task::Reverse, 50, 7, (3, 12), 20).unwrap();
        assert_eq!(a, b);
        assert!(a.pairs.iter().all(|(s, _)| (3..=12).contains(&s.len())));
        assert_ne!(a, gen_synthetic(Task::Reverse, 50, 8, (3, 12), 20).unwrap());
        assert!("shuffle".parse::<Task>().is_err());
    }
}
