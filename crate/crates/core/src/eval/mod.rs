//! BLEU, sequence accuracy, length buckets and the λ sweep.

mod bleu;
mod report;
mod sweep;

pub use bleu::{
    bleu, bleu_by_length, corpus_stats, sentence_bleu_smoothed, sentence_stats, sequence_accuracy,
    tokenize_lines, BleuReport, BleuStats, BucketReport, MAX_ORDER,
};
pub use report::{bucket_table, column_chart, lambda_table, tsv};
pub use sweep::{default_lambda_grid, lambda_sweep};
