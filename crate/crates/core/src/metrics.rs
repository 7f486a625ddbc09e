//! Conversation NLL and candidate-selection statistics over search traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conversation::Conversation;
use crate::error::{Error, Result};
use crate::model::{conversation_logprob, SpeakerModel};
use crate::multiturn::SearchTrace;

/// Negative joint log-probability of the conversation (both speakers).
pub fn conversation_nll(
    conv: &Conversation,
    self_model: &dyn SpeakerModel,
    partner_model: &dyn SpeakerModel,
) -> Result<f64> {
    Ok(-conversation_logprob(conv, self_model, partner_model)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    /// Fraction of searches that chose something other than the H_0 top.
    pub rate: f64,
    /// Mean 0-based H_0 rank of the chosen candidate.
    pub mean_rank: f64,
    /// Mean score drop from the first to the second H_0 candidate.
    pub mean_gap: f64,
    pub n: usize,
    /// Traces whose H_0 held a single candidate; they contribute a gap of 0.
    pub single_candidate_traces: usize,
}

pub fn selection_stats<'a>(traces: impl IntoIterator<Item = &'a SearchTrace>) -> Result<SelectionStats> {
    let mut n = 0usize;
    let mut changed = 0usize;
    let mut rank_sum = 0usize;
    let mut gap_sum = 0.0;
    let mut single = 0usize;
    for trace in traces {
        n += 1;
        let rank = trace.selected_rank_in_h0;
        if rank > 0 {
            changed += 1;
        }
        rank_sum += rank;
        match trace.h0.entries.as_slice() {
            [first, second, ..] => gap_sum += first.score - second.score,
            _ => single += 1,
        }
    }
    if n == 0 {
        return Err(Error::Metrics("no traces to aggregate".into()));
    }
    let n_f = n as f64;
    Ok(SelectionStats {
        rate: changed as f64 / n_f,
        mean_rank: rank_sum as f64 / n_f,
        mean_gap: gap_sum / n_f,
        n,
        single_candidate_traces: single,
    })
}

/// One row of an experiment report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub steps: usize,
    pub width: usize,
    pub partner_kind: String,
    pub nll_mean: f64,
    pub rate: f64,
    pub rank: f64,
    pub gap: f64,
    pub n: usize,
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "strategy",
    "steps",
    "width",
    "partner_kind",
    "nll_mean",
    "rate",
    "rank",
    "gap",
    "n",
];

pub fn write_csv<W: std::io::Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Io(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ReportRow]) -> Result<String> {
    let mut buf = Vec::new();
    if rows.is_empty() {
        buf.extend_from_slice(REPORT_COLUMNS.join(",").as_bytes());
        buf.push(b'\n');
    } else {
        write_csv(rows, &mut buf)?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Plain-text table with NLL on the left and selection statistics on the
/// right, one line per strategy.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} {:>5} {:>5} {:<12} {:>8} | {:>5} {:>5} {:>6} {:>5}",
        "strategy", "steps", "width", "partner", "NLL", "rate", "rank", "gap", "n"
    );
    let _ = writeln!(out, "{}", "-".repeat(76));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<9} {:>5} {:>5} {:<12} {:>8.3} | {:>5.2} {:>5.2} {:>6.2} {:>5}",
            r.strategy, r.steps, r.width, r.partner_kind, r.nll_mean, r.rate, r.rank, r.gap, r.n
        );
    }
    out
}
