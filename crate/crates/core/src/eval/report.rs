use super::bleu::BucketReport;

/// Tab-separated table with a header row.
pub fn tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    out
}

pub fn bucket_table(buckets: &[BucketReport]) -> String {
    let rows: Vec<Vec<String>> = buckets
        .iter()
        .map(|b| {
            vec![
                b.label(),
                b.sentences.to_string(),
                format!("{:.2}", 100.0 * b.report.score),
                format!("{:.3}", b.report.brevity_penalty),
            ]
        })
        .collect();
    tsv(&["src_len", "sentences", "bleu", "bp"], &rows)
}

pub fn lambda_table(rows: &[(f64, f64)]) -> String {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|(l, b)| vec![format!("{l:.1}"), format!("{:.2}", 100.0 * b)])
        .collect();
    tsv(&["lambda", "dev_bleu"], &rows)
}

/// Plain-text vertical bar chart, `height` rows tall, scaled to the largest
/// value. Each bar is labeled underneath and topped by its value.
pub fn column_chart(title: &str, bars: &[(String, f64)], height: usize) -> String {
    let width = bars
        .iter()
        .map(|(l, v)| l.len().max(format!("{v:.2}").len()))
        .max()
        .unwrap_or(1)
        + 1;
    let top = bars.iter().map(|b| b.1).fold(0.0, f64::max);
    let levels: Vec<usize> = bars
        .iter()
        .map(|(_, v)| {
            if top <= 0.0 {
                0
            } else {
                ((v / top) * height as f64).round() as usize
            }
        })
        .collect();
    let mut out = format!("{title}\n");
    for row in (1..=height + 1).rev() {
        let mut line = String::new();
        for ((_, v), &lvl) in bars.iter().zip(&levels) {
            let cell = if lvl + 1 == row {
                format!("{v:.2}")
            } else if lvl >= row {
                "#".repeat(width - 1)
            } else {
                String::new()
            };
            line.push_str(&format!("{cell:<width$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.push_str(&"-".repeat(width * bars.len()));
    out.push('\n');
    let labels: String = bars.iter().map(|(l, _)| format!("{l:<width$}")).collect();
    out.push_str(labels.trim_end());
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_layout() {
        let t = tsv(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(t, "a\tb\n1\t2\n");
        assert_eq!(
            lambda_table(&[(0.5, 0.25)]),
            "lambda\tdev_bleu\n0.5\t25.00\n"
        );
    }

    #[test]
    fn chart_bars_scale_with_values() {
        let c = column_chart("x", &[("a".into(), 2.0), ("b".into(), 1.0)], 4);
        let lines: Vec<&str> = c.lines().collect();
        assert_eq!(lines[0], "x");
        assert!(lines[1].starts_with("2.00"));
        let hashes = |col: usize| {
            lines
                .iter()
                .filter(|l| l.chars().nth(col) == Some('#'))
                .count()
        };
        assert_eq!(hashes(0), 4);
        assert_eq!(hashes(5), 2);
        assert!(lines.last().unwrap().starts_with("a"));
    }
}
