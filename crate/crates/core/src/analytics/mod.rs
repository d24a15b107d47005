//! Frequency distributions, net support and topic analysis of open text.

mod ldta;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poll::SurveyResponse;
use crate::survey::{QuestionKind, Questionnaire};

pub use ldta::{ldta, open_texts, LdtaConfig, PhraseExtraction, ThemeCount, TopicReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("{0}")]
    Domain(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionCount {
    pub option: String,
    pub count: u64,
    /// Percent of ok responses, one decimal place.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub question_id: String,
    pub kind: QuestionKind,
    pub n_ok: u64,
    pub n_failed: u64,
    pub options: Vec<OptionCount>,
    /// Texts behind "Other" selections, by agent id.
    pub other_texts: Vec<String>,
}

impl AggregateResult {
    pub fn count_of(&self, option: &str) -> Option<u64> {
        self.options.iter().find(|o| o.option == option).map(|o| o.count)
    }

    pub fn percent_of(&self, option: &str) -> Option<f64> {
        self.options.iter().find(|o| o.option == option).map(|o| o.percent)
    }

    /// The `k` most chosen options, ties in questionnaire order.
    pub fn top(&self, k: usize) -> Vec<&OptionCount> {
        let mut v: Vec<&OptionCount> = self.options.iter().collect();
        v.sort_by(|a, b| b.count.cmp(&a.count));
        v.truncate(k);
        v
    }
}

/// `count / n` in tenths of a percent, half-to-even.
pub fn bankers_tenths(count: u64, n: u64) -> u64 {
    let num = count as u128 * 1000;
    let (q, r) = (num / n as u128, num % n as u128);
    let up = match (2 * r).cmp(&(n as u128)) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => q % 2 == 1,
        std::cmp::Ordering::Less => false,
    };
    (q + up as u128) as u64
}

/// Tenths of a percent summing to exactly 1000 when `counts` sum to `n`:
/// floors first, then leftover tenths to the largest remainders (earlier
/// options win ties).
pub fn largest_remainder_tenths(counts: &[u64], n: u64) -> Vec<u64> {
    let n128 = n as u128;
    let mut tenths: Vec<u64> = counts.iter().map(|&c| (c as u128 * 1000 / n128) as u64).collect();
    let total: u64 = counts.iter().sum();
    let target = (total as u128 * 1000 / n128) as u64;
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = counts[a] as u128 * 1000 % n128;
        let rb = counts[b] as u128 * 1000 % n128;
        rb.cmp(&ra).then(a.cmp(&b))
    });
    let short = target.saturating_sub(tenths.iter().sum());
    for &i in order.iter().take(short as usize) {
        tenths[i] += 1;
    }
    tenths
}

/// Per-question option counts over ok responses, in questionnaire order.
pub fn aggregate(responses: &[SurveyResponse], q: &Questionnaire) -> Result<Vec<AggregateResult>, AnalyticsError> {
    let mut ok: Vec<&SurveyResponse> = responses.iter().filter(|r| r.is_ok()).collect();
    let n_ok = ok.len() as u64;
    let n_failed = responses.len() as u64 - n_ok;
    if n_ok == 0 {
        return Err(AnalyticsError::Domain(format!("no parsed responses to aggregate ({n_failed} failed)")));
    }
    ok.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
    let mut out = Vec::with_capacity(q.questions.len());
    for question in &q.questions {
        let mut counts: BTreeMap<&str, u64> = question.options.iter().map(|o| (o.as_str(), 0)).collect();
        let mut other_texts = Vec::new();
        for r in &ok {
            let answer = r.answers.get(&question.id).ok_or_else(|| {
                AnalyticsError::Domain(format!("{} is marked ok but lacks {}", r.agent_id, question.id))
            })?;
            for s in &answer.selected {
                *counts.get_mut(s.as_str()).ok_or_else(|| {
                    AnalyticsError::Domain(format!("{}: `{s}` is not an option of {}", r.agent_id, question.id))
                })? += 1;
            }
            if let Some(t) = &answer.other_text {
                other_texts.push(t.clone());
            }
        }
        let ordered: Vec<u64> = question.options.iter().map(|o| counts[o.as_str()]).collect();
        let tenths = match question.kind {
            QuestionKind::MultiSelectMax3 => ordered.iter().map(|&c| bankers_tenths(c, n_ok)).collect(),
            QuestionKind::SingleSelect | QuestionKind::OpenText => largest_remainder_tenths(&ordered, n_ok),
        };
        out.push(AggregateResult {
            question_id: question.id.clone(),
            kind: question.kind,
            n_ok,
            n_failed,
            options: question
                .options
                .iter()
                .zip(ordered.iter().zip(&tenths))
                .map(|(o, (&count, &t))| OptionCount { option: o.clone(), count, percent: t as f64 / 10.0 })
                .collect(),
            other_texts,
        });
    }
    Ok(out)
}

pub const SUPPORT_LEVELS: [&str; 2] = ["Strongly Support", "Support"];
pub const OPPOSE_LEVELS: [&str; 2] = ["Oppose", "Strongly Oppose"];

/// Support minus opposition in percentage points, from exact counts.
pub fn net_support(agg: &AggregateResult) -> Result<f64, AnalyticsError> {
    let sum = |labels: [&str; 2]| -> Result<u64, AnalyticsError> {
        labels.iter().try_fold(0, |acc, l| {
            agg.count_of(l)
                .map(|c| acc + c)
                .ok_or_else(|| AnalyticsError::Domain(format!("{} has no `{l}` option", agg.question_id)))
        })
    };
    let (s, o) = (sum(SUPPORT_LEVELS)?, sum(OPPOSE_LEVELS)?);
    Ok((s as f64 - o as f64) * 100.0 / agg.n_ok as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bankers_ties() {
        assert_eq!(bankers_tenths(1, 2000), 0);
        assert_eq!(bankers_tenths(3, 2000), 2);
        assert_eq!(bankers_tenths(1, 3), 333);
        assert_eq!(bankers_tenths(2, 3), 667);
    }

    #[test]
    fn thirds_sum_to_hundred() {
        assert_eq!(largest_remainder_tenths(&[1, 1, 1], 3), vec![334, 333, 333]);
        assert_eq!(largest_remainder_tenths(&[542, 355, 81, 20, 2], 1000), vec![542, 355, 81, 20, 2]);
        assert_eq!(largest_remainder_tenths(&[0, 0], 7), vec![0, 0]);
    }
}
