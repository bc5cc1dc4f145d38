//! Per-prediction reasoning traces and their JSON / SVG renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::StudentSequence;
use crate::diffcore::sigmoid;
use crate::error::{Error, Result};
use crate::model::run_sequence;
use crate::scoring::{LevelScore, MINUS, PLUS};
use crate::training::TrainedModel;

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceTarget {
    pub q: usize,
    pub c: usize,
}

/// One history interaction inside a pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceMember {
    pub q: usize,
    pub c: usize,
    pub r: u8,
}

/// Arrays for one level and one hypothesized outcome, indexed by pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTrace {
    pub starts: Vec<usize>,
    pub members: Vec<Vec<TraceMember>>,
    #[serde(rename = "D")]
    pub distances: Vec<f64>,
    #[serde(rename = "s")]
    pub scores: Vec<f64>,
    pub eta: Vec<f64>,
    pub delta: Vec<f64>,
    #[serde(rename = "w")]
    pub fused: Vec<f64>,
    pub level_sum: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTraces {
    pub plus: OutcomeTrace,
    pub minus: OutcomeTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub outcomes: OutcomeTraces,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrace {
    pub schema_version: u32,
    pub student_id: String,
    /// Index of the target interaction in the sequence; the history is
    /// every interaction before it.
    pub position: usize,
    pub target: TraceTarget,
    /// Observed response at the target, for reference.
    pub response: u8,
    pub probability: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub levels: Vec<LevelTrace>,
    pub s_plus: f64,
    pub s_minus: f64,
}

/// Which hypothesized outcome a chart shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plus" | "correct" | "1" => Ok(Outcome::Plus),
            "minus" | "incorrect" | "0" => Ok(Outcome::Minus),
            other => Err(Error::Config(format!(
                "unknown outcome `{other}` (expected plus or minus)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!(
                "unknown report format `{other}` (expected json or svg)"
            ))),
        }
    }
}

impl PredictionTrace {
    pub fn outcome(level: &LevelTrace, outcome: Outcome) -> &OutcomeTrace {
        match outcome {
            Outcome::Plus => &level.outcomes.plus,
            Outcome::Minus => &level.outcomes.minus,
        }
    }

    /// Recomputes the probability from the recorded `D`, `η`, `δ` and `γ`
    /// alone.
    pub fn replay_probability(&self) -> f64 {
        let mut totals = [0.0; 2];
        for lv in &self.levels {
            for (o, tr) in [&lv.outcomes.plus, &lv.outcomes.minus].into_iter().enumerate() {
                totals[o] += tr
                    .distances
                    .iter()
                    .zip(&tr.eta)
                    .zip(&tr.delta)
                    .map(|((d, e), g)| (e + self.lambda * g) * (self.gamma - d))
                    .sum::<f64>();
            }
        }
        sigmoid(totals[0] - totals[1])
    }

    /// Largest deviation of a per-level fused weight sum from `1 + λ`.
    pub fn max_weight_sum_error(&self) -> f64 {
        self.levels
            .iter()
            .flat_map(|lv| [&lv.outcomes.plus, &lv.outcomes.minus])
            .map(|tr| (tr.fused.iter().sum::<f64>() - (1.0 + self.lambda)).abs())
            .fold(0.0, f64::max)
    }
}

/// Runs the scoring pass for the target at `target_position` and records
/// every intermediate quantity.
pub fn trace_prediction(
    model: &TrainedModel,
    seq: &StudentSequence,
    target_position: usize,
) -> Result<PredictionTrace> {
    let n = seq.valid_length;
    if target_position == 0 || target_position >= n {
        return Err(Error::Contract(format!(
            "target position {target_position} out of range 1..{n} for `{}`",
            seq.student_id
        )));
    }
    let xs = &seq.valid()[..=target_position];
    let prefix = StudentSequence::new(seq.student_id.clone(), xs.to_vec());
    let out = run_sequence(&model.params, &model.difficulty, &prefix, None, None, true)?;
    let score = out.scores.last().expect("prefix has at least one target");
    let history = &xs[..target_position];
    let member = |i: usize| TraceMember {
        q: history[i].question_id,
        c: history[i].concept_id,
        r: history[i].response,
    };
    let outcome = |lv: &LevelScore, o: usize| {
        let starts: Vec<usize> = (0..lv.len()).collect();
        OutcomeTrace {
            members: starts
                .iter()
                .map(|&k| (k..k + lv.level).map(member).collect())
                .collect(),
            starts,
            distances: lv.distances[o].clone(),
            scores: lv.scores[o].clone(),
            eta: lv.eta[o].clone(),
            delta: lv.delta.clone(),
            fused: lv.fused[o].clone(),
            level_sum: lv.level_sum[o],
        }
    };
    let target = &xs[target_position];
    Ok(PredictionTrace {
        schema_version: TRACE_SCHEMA_VERSION,
        student_id: seq.student_id.clone(),
        position: target_position,
        target: TraceTarget {
            q: target.question_id,
            c: target.concept_id,
        },
        response: target.response,
        probability: score.probability,
        lambda: score.lambda,
        gamma: score.gamma,
        levels: score
            .levels
            .iter()
            .map(|lv| LevelTrace {
                level: lv.level,
                outcomes: OutcomeTraces {
                    plus: outcome(lv, PLUS),
                    minus: outcome(lv, MINUS),
                },
            })
            .collect(),
        s_plus: score.s_plus,
        s_minus: score.s_minus,
    })
}

pub fn render_json(trace: &PredictionTrace) -> Result<String> {
    Ok(serde_json::to_string_pretty(trace)?)
}

pub fn parse_json(text: &str) -> Result<PredictionTrace> {
    Ok(serde_json::from_str(text)?)
}

pub fn render_report(trace: &PredictionTrace, format: ReportFormat, outcome: Outcome) -> Result<String> {
    match format {
        ReportFormat::Json => render_json(trace),
        ReportFormat::Svg => Ok(render_svg(trace, outcome)),
    }
}

/// `Q<q>/C<c>(r)` for each member, joined with `∧`.
pub fn pattern_label(members: &[TraceMember]) -> String {
    members
        .iter()
        .map(|m| format!("Q{}/C{}({})", m.q, m.c, m.r))
        .collect::<Vec<_>>()
        .join(" ∧ ")
}

/// Bars of one level for one outcome, sorted by descending fused weight.
pub fn sorted_bars(level: &LevelTrace, outcome: Outcome) -> Vec<(String, f64)> {
    let tr = PredictionTrace::outcome(level, outcome);
    let mut bars: Vec<(String, f64)> = tr
        .members
        .iter()
        .zip(&tr.fused)
        .map(|(m, &w)| (pattern_label(m), w))
        .collect();
    bars.sort_by(|a, b| b.1.total_cmp(&a.1));
    bars
}

const WIDTH: f64 = 800.0;
const BAR_HEIGHT: f64 = 18.0;
const BAR_GAP: f64 = 4.0;
const HEADER: f64 = 40.0;
const LEVEL_TITLE: f64 = 26.0;
const LABEL_WIDTH: f64 = 330.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Horizontal bar charts of fused weights, one panel per level.
pub fn render_svg(trace: &PredictionTrace, outcome: Outcome) -> String {
    let panels: Vec<(usize, Vec<(String, f64)>)> = trace
        .levels
        .iter()
        .map(|lv| (lv.level, sorted_bars(lv, outcome)))
        .collect();
    let height = HEADER
        + panels
            .iter()
            .map(|(_, bars)| LEVEL_TITLE + bars.len() as f64 * (BAR_HEIGHT + BAR_GAP))
            .sum::<f64>()
        + 10.0;
    let max_w = panels
        .iter()
        .flat_map(|(_, b)| b.iter().map(|x| x.1))
        .fold(f64::MIN_POSITIVE, f64::max);
    let bar_span = WIDTH - LABEL_WIDTH - 70.0;
    let outcome_name = match outcome {
        Outcome::Plus => "correct",
        Outcome::Minus => "incorrect",
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="10" y="22" font-size="15" font-weight="bold">{} target Q{}/C{} p={:.4} (weights for {outcome_name})</text>"#,
        xml_escape(&trace.student_id),
        trace.target.q,
        trace.target.c,
        trace.probability
    );
    let mut y = HEADER;
    for (level, bars) in &panels {
        let _ = writeln!(
            s,
            r#"<text x="10" y="{:.1}" font-weight="bold">level {level}</text>"#,
            y + 16.0
        );
        y += LEVEL_TITLE;
        for (label, w) in bars {
            let len = (w / max_w).max(0.0) * bar_span;
            let _ = writeln!(
                s,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><rect x="{LABEL_WIDTH}" y="{:.1}" width="{len:.2}" height="{BAR_HEIGHT}" fill="#4878a8"/><text x="{:.1}" y="{:.1}">{w:.4}</text>"##,
                LABEL_WIDTH - 6.0,
                y + 13.0,
                xml_escape(label),
                y,
                LABEL_WIDTH + len + 4.0,
                y + 13.0
            );
            y += BAR_HEIGHT + BAR_GAP;
        }
    }
    s.push_str("</svg>\n");
    s
}
