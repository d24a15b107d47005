//! Report bundle: plain-text summary, machine-readable aggregates and
//! per-question chart data.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::AggregateResult;
use crate::calibration::{CalibrationError, GroupedModel};
use crate::fsutil::write_atomic;
use crate::pipeline::{write_intervals, AnalysisArtifact, PipelineError, TopicArtifact};
use crate::survey::{QuestionKind, Questionnaire};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub question_id: String,
    pub option: String,
    pub y_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Conformal interval around every option's exact agent-poll proportion.
/// Questions without a fitted threshold are left out.
pub fn interval_rows(aggs: &[AggregateResult], model: &GroupedModel) -> Result<Vec<IntervalRow>, CalibrationError> {
    let mut rows = Vec::new();
    for a in aggs {
        if model.model_for(&a.question_id).is_none() {
            continue;
        }
        for o in &a.options {
            let y_hat = o.count as f64 / a.n_ok as f64;
            let iv = model.predict(&a.question_id, y_hat)?;
            rows.push(IntervalRow { question_id: a.question_id.clone(), option: o.option.clone(), y_hat, lo: iv.lo, hi: iv.hi });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    question_id: &'a str,
    kind: QuestionKind,
    option: &'a str,
    count: u64,
    percent: f64,
}

#[derive(Serialize)]
struct ChartRow<'a> {
    label: &'a str,
    count: u64,
    percent: f64,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    Ok(w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
}

/// Question text up to its first sentence end.
fn headline(text: &str) -> &str {
    match text.find(['?', '.']) {
        Some(i) => &text[..=i],
        None => text,
    }
}

pub fn render_summary(
    county: &str,
    state: &str,
    q: &Questionnaire,
    analysis: &AnalysisArtifact,
    topics: &TopicArtifact,
    intervals: Option<&[IntervalRow]>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Community poll summary: {county}, {state}");
    let _ = writeln!(
        s,
        "Agents: {} polled, {} parsed, {} excluded after retries",
        analysis.n_ok + analysis.n_failed,
        analysis.n_ok,
        analysis.n_failed
    );
    let find = |id: &str| analysis.aggregates.iter().find(|a| a.question_id == id);
    if let Some(q12) = find("q12") {
        let _ = writeln!(s, "\nOverall attitude (q12)");
        for o in &q12.options {
            let _ = writeln!(s, "  {}: {:.1}%", o.option, o.percent);
        }
        let _ = writeln!(s, "Net support: {:+.1} points", analysis.net_support);
    }
    for question in &q.questions {
        if question.id == "q12" || question.kind == QuestionKind::OpenText {
            continue;
        }
        let Some(a) = find(&question.id) else { continue };
        let _ = writeln!(s, "\n{} {}", question.id, headline(&question.text));
        match question.kind {
            QuestionKind::MultiSelectMax3 => {
                for (rank, o) in a.top(3).iter().enumerate() {
                    let _ = writeln!(s, "  {}. {}: {:.1}%", rank + 1, o.option, o.percent);
                }
            }
            _ => {
                for o in &a.options {
                    let _ = writeln!(s, "  {}: {:.1}%", o.option, o.percent);
                }
            }
        }
    }
    let _ = writeln!(s);
    match topics {
        TopicArtifact::Skipped => {
            let _ = writeln!(s, "Topics: topic analysis skipped");
        }
        TopicArtifact::Complete { report } | TopicArtifact::Partial { report } => {
            let _ = writeln!(s, "Topics ({} open-text responses)", report.n_responses);
            if report.is_partial() {
                let _ = writeln!(
                    s,
                    "  partial: {} extractions failed{}",
                    report.n_extraction_failed,
                    if report.theme_stage_failed { ", theme grouping failed" } else { "" }
                );
            }
            for t in &report.themes {
                let _ = writeln!(s, "  {}: {:.1}% ({} responses)", t.theme, t.percent, t.count);
            }
        }
    }
    if let Some(rows) = intervals {
        let _ = writeln!(s, "\nConformal intervals for q12");
        for r in rows.iter().filter(|r| r.question_id == "q12") {
            let _ = writeln!(s, "  {}: {:.1}% [{:.1}%, {:.1}%]", r.option, r.y_hat * 100.0, r.lo * 100.0, r.hi * 100.0);
        }
    }
    s
}

/// Writes the bundle into `dir` and returns the files written, relative to it.
pub fn emit_report(
    dir: &Path,
    county: &str,
    state: &str,
    q: &Questionnaire,
    analysis: &AnalysisArtifact,
    topics: &TopicArtifact,
    intervals: Option<&[IntervalRow]>,
) -> Result<Vec<String>, PipelineError> {
    let mut written = Vec::new();
    let mut put = |rel: String, bytes: &[u8]| -> Result<(), PipelineError> {
        write_atomic(&dir.join(&rel), bytes)?;
        written.push(rel);
        Ok(())
    };
    put("summary.txt".into(), render_summary(county, state, q, analysis, topics, intervals).as_bytes())?;
    let mut json = serde_json::to_vec_pretty(analysis)?;
    json.push(b'\n');
    put("aggregates.json".into(), &json)?;
    let rows = analysis.aggregates.iter().flat_map(|a| {
        a.options.iter().map(move |o| AggregateRow {
            question_id: &a.question_id,
            kind: a.kind,
            option: &o.option,
            count: o.count,
            percent: o.percent,
        })
    });
    put("aggregates.csv".into(), &csv_bytes(rows)?)?;
    let mut json = serde_json::to_vec_pretty(topics)?;
    json.push(b'\n');
    put("topics.json".into(), &json)?;
    for a in &analysis.aggregates {
        let rows = a.options.iter().map(|o| ChartRow { label: &o.option, count: o.count, percent: o.percent });
        put(format!("charts/{}.csv", a.question_id), &csv_bytes(rows)?)?;
    }
    if let TopicArtifact::Complete { report } | TopicArtifact::Partial { report } = topics {
        let rows = report.themes.iter().map(|t| ChartRow { label: &t.theme, count: t.count, percent: t.percent });
        put("charts/topics.csv".into(), &csv_bytes(rows)?)?;
    }
    if let Some(rows) = intervals {
        write_intervals(&dir.join("intervals.csv"), rows)?;
        written.push("intervals.csv".into());
    }
    written.sort();
    Ok(written)
}
