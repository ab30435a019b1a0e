//! Report serialization: JSON for machines, aligned text for eyeballs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matching::MatchingReport;
use super::retrieval::RetrievalReport;
use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

/// Retrieval quality before and after inlier re-ranking, side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub before: RetrievalReport,
    pub after: RetrievalReport,
}

pub trait RenderText {
    fn render_text(&self) -> String;
}

fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let widths: Vec<usize> = header
        .iter()
        .enumerate()
        .map(|(c, h)| {
            rows.iter()
                .map(|r| r[c].len())
                .chain(std::iter::once(h.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    let mut line = |cells: &[String]| {
        let joined: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(joined.join("  ").trim_end());
        out.push('\n');
    };
    line(&header);
    for row in &rows {
        line(row);
    }
    out
}

impl RenderText for MatchingReport {
    fn render_text(&self) -> String {
        let mut header = vec![
            "pairs".to_string(),
            "skipped".to_string(),
            "eta".to_string(),
            "precision".to_string(),
            "recall".to_string(),
        ];
        let mut row = vec![
            self.pairs.to_string(),
            self.skipped.to_string(),
            format!("{:.4}", self.eta),
            format!("{:.4}", self.precision),
            format!("{:.4}", self.recall),
        ];
        for (t, v) in &self.mma {
            header.push(format!("mma@{t}"));
            row.push(format!("{v:.4}"));
        }
        table(header, vec![row])
    }
}

impl RenderText for RetrievalSummary {
    fn render_text(&self) -> String {
        let mut header = vec!["ranking".to_string(), "map".to_string()];
        for k in self.before.mp.keys() {
            header.push(format!("mp@{k}"));
        }
        for n in self.before.recall.keys() {
            header.push(format!("r@{n}"));
        }
        header.push("queries".to_string());

        let row = |label: &str, r: &RetrievalReport| {
            let mut cells = vec![label.to_string(), format!("{:.4}", r.map)];
            cells.extend(r.mp.values().map(|v| format!("{v:.4}")));
            cells.extend(r.recall.values().map(|v| format!("{v:.4}")));
            cells.push(r.queries.to_string());
            cells
        };
        table(
            header,
            vec![row("global", &self.before), row("reranked", &self.after)],
        )
    }
}

/// Writes the report to `path`. JSON output is pretty-printed with a
/// trailing newline so files diff cleanly run to run.
pub fn emit_report<R: Serialize + RenderText>(
    report: &R,
    path: &Path,
    format: ReportFormat,
) -> Result<(), EvalError> {
    let body = match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
        ReportFormat::Text => report.render_text(),
    };
    std::fs::write(path, body)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn matching_report() -> MatchingReport {
        MatchingReport {
            mma: (1..=10).map(|t| (t, 0.1 * t as f64 / 3.0)).collect(),
            eta: 0.85,
            precision: 1.0 / 3.0,
            recall: 2.0 / 7.0,
            pairs: 20,
            skipped: 1,
        }
    }

    fn retrieval_summary() -> RetrievalSummary {
        let report = |shift: f64| RetrievalReport {
            map: 0.5 + shift,
            mp: [1, 5, 10].iter().map(|&k| (k, 0.3 + shift)).collect::<BTreeMap<_, _>>(),
            recall: [1, 5, 10].iter().map(|&k| (k, 0.6 + shift)).collect::<BTreeMap<_, _>>(),
            queries: 32,
        };
        RetrievalSummary {
            before: report(0.0),
            after: report(0.2),
        }
    }

    #[test]
    fn matching_reports_round_trip_through_json_exactly() {
        let report = matching_report();
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: MatchingReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn retrieval_summaries_round_trip_through_json_exactly() {
        let summary = retrieval_summary();
        let json = serde_json::to_string(&summary).unwrap();
        let back: RetrievalSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, summary);
    }

    #[test]
    fn matching_text_is_one_header_and_one_data_row() {
        let text = matching_report().render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("pairs"));
        assert!(lines[0].contains("mma@10"));
        assert!(lines[1].starts_with("20"));
    }

    #[test]
    fn retrieval_text_has_a_row_per_ranking() {
        let text = retrieval_summary().render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("global"));
        assert!(lines[2].starts_with("reranked"));
        assert!(lines[0].contains("mp@5"));
        assert!(lines[0].contains("r@10"));
    }

    #[test]
    fn emitted_files_match_the_in_memory_rendering() {
        let dir = tempfile::tempdir().unwrap();
        let report = matching_report();

        let json_path = dir.path().join("report.json");
        emit_report(&report, &json_path, ReportFormat::Json).unwrap();
        let json = std::fs::read_to_string(&json_path).unwrap();
        assert!(json.ends_with('\n'));
        let back: MatchingReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);

        let text_path = dir.path().join("report.txt");
        emit_report(&report, &text_path, ReportFormat::Text).unwrap();
        assert_eq!(std::fs::read_to_string(&text_path).unwrap(), report.render_text());
    }
}
