//! Flicker and efficiency metrics over session traces, plus the CSV report.

use std::io::Write;

use crate::error::{Error, Result};
use crate::stream::SessionTrace;
use crate::token::{lcp, TokenSeq};

/// Tokens to delete from the previous output's suffix to reach the current
/// output: `|prev| - lcp(prev, curr)`.
pub fn erasure(prev: &TokenSeq, curr: &TokenSeq) -> usize {
    prev.len() - lcp(prev, curr)
}

/// Per-update erasures and their normalized total.
#[derive(Debug, Clone, PartialEq)]
pub struct FlickerStats {
    pub per_update_erasure: Vec<usize>,
    pub normalized_erasure: f64,
}

/// Total erasure across updates divided by the final output length. The
/// zeroth output is taken as empty, so the first update contributes nothing.
pub fn normalized_erasure(outputs: &[TokenSeq]) -> Result<f64> {
    let final_output = outputs
        .last()
        .ok_or_else(|| Error::UndefinedMetric("no outputs".into()))?;
    if final_output.is_empty() {
        return Err(Error::UndefinedMetric(
            "normalized erasure with empty final output".into(),
        ));
    }
    let mut prev = &TokenSeq::new();
    let mut total = 0usize;
    for output in outputs {
        total += erasure(prev, output);
        prev = output;
    }
    Ok(total as f64 / final_output.len() as f64)
}

pub fn flicker_stats(outputs: &[TokenSeq]) -> Result<FlickerStats> {
    let normalized = normalized_erasure(outputs)?;
    let mut prev = &TokenSeq::new();
    let mut per_update = Vec::with_capacity(outputs.len());
    for output in outputs {
        per_update.push(erasure(prev, output));
        prev = output;
    }
    Ok(FlickerStats {
        per_update_erasure: per_update,
        normalized_erasure: normalized,
    })
}

/// Draft-acceptance totals and ratios for one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceStats {
    pub accepted_total: u64,
    pub draft_total: u64,
    pub output_total: u64,
    /// Accepted over drafted; absent when no draft token was ever offered.
    pub a_over_d: Option<f64>,
    pub a_over_o: Option<f64>,
}

pub fn acceptance_stats(trace: &SessionTrace) -> AcceptanceStats {
    let mut accepted_total = 0u64;
    let mut draft_total = 0u64;
    let mut output_total = 0u64;
    for record in &trace.records {
        accepted_total += record.accepted as u64;
        draft_total += record.draft_len as u64;
        output_total += record.output_tokens.len() as u64;
    }
    AcceptanceStats {
        accepted_total,
        draft_total,
        output_total,
        a_over_d: (draft_total > 0).then(|| accepted_total as f64 / draft_total as f64),
        a_over_o: (output_total > 0).then(|| accepted_total as f64 / output_total as f64),
    }
}

/// Step-based speedup of an ssbd trace over the ar trace for the same inputs.
/// Wall-clock TPS is informational only.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyStats {
    pub ar_decode_steps: u64,
    pub ssbd_decode_steps: u64,
    pub ar_forwards: u64,
    pub ssbd_forwards: u64,
    pub step_speedup: Option<f64>,
    pub tps: Option<f64>,
}

pub fn efficiency_stats(ar: &SessionTrace, ssbd: &SessionTrace) -> Result<EfficiencyStats> {
    if ar.session_id != ssbd.session_id
        || ar.records.len() != ssbd.records.len()
        || ar
            .records
            .iter()
            .zip(&ssbd.records)
            .any(|(a, b)| a.t != b.t || a.input != b.input)
    {
        return Err(Error::Validation(format!(
            "traces for session {:?} and {:?} do not cover the same inputs",
            ar.session_id, ssbd.session_id
        )));
    }
    let sum = |t: &SessionTrace, f: fn(&crate::stream::UpdateRecord) -> u64| -> u64 {
        t.records.iter().map(f).sum()
    };
    let ar_decode_steps = sum(ar, |r| r.decode_steps);
    let ssbd_decode_steps = sum(ssbd, |r| r.decode_steps);
    let ssbd_wall: u64 = sum(ssbd, |r| r.wall_nanos);
    let emitted: u64 = ssbd
        .records
        .iter()
        .map(|r| r.output_tokens.len() as u64)
        .sum();
    Ok(EfficiencyStats {
        ar_decode_steps,
        ssbd_decode_steps,
        ar_forwards: sum(ar, |r| r.forwards),
        ssbd_forwards: sum(ssbd, |r| r.forwards),
        step_speedup: (ssbd_decode_steps > 0)
            .then(|| ar_decode_steps as f64 / ssbd_decode_steps as f64),
        tps: (ssbd_wall > 0).then(|| emitted as f64 * 1e9 / ssbd_wall as f64),
    })
}

/// Raw per-session totals; kept unreduced so the aggregate row can be exact.
#[derive(Debug, Clone, Default)]
pub struct SessionReport {
    pub session: String,
    pub beta: f64,
    pub mask_k: usize,
    pub mask_mode: String,
    pub erasure_total: u64,
    pub final_output_len: u64,
    pub accepted_total: u64,
    pub draft_total: u64,
    pub output_total: u64,
    pub ar_decode_steps: Option<u64>,
    pub ssbd_decode_steps: Option<u64>,
    pub wall_nanos: u64,
}

impl SessionReport {
    pub fn from_trace(trace: &SessionTrace, beta: f64, mask_k: usize, mask_mode: &str) -> SessionReport {
        let acc = acceptance_stats(trace);
        SessionReport {
            session: trace.session_id.clone(),
            beta,
            mask_k,
            mask_mode: mask_mode.to_string(),
            erasure_total: trace.records.iter().map(|r| r.erasure as u64).sum(),
            final_output_len: trace.final_output.len() as u64,
            accepted_total: acc.accepted_total,
            draft_total: acc.draft_total,
            output_total: acc.output_total,
            ar_decode_steps: None,
            ssbd_decode_steps: None,
            wall_nanos: trace.records.iter().map(|r| r.wall_nanos).sum(),
        }
    }

    fn ne(&self) -> Option<f64> {
        (self.final_output_len > 0).then(|| self.erasure_total as f64 / self.final_output_len as f64)
    }

    fn a_over_d(&self) -> Option<f64> {
        (self.draft_total > 0).then(|| self.accepted_total as f64 / self.draft_total as f64)
    }

    fn a_over_o(&self) -> Option<f64> {
        (self.output_total > 0).then(|| self.accepted_total as f64 / self.output_total as f64)
    }

    fn step_speedup(&self) -> Option<f64> {
        match (self.ar_decode_steps, self.ssbd_decode_steps) {
            (Some(ar), Some(ssbd)) if ssbd > 0 => Some(ar as f64 / ssbd as f64),
            _ => None,
        }
    }

    fn tps(&self) -> Option<f64> {
        (self.wall_nanos > 0).then(|| self.output_total as f64 * 1e9 / self.wall_nanos as f64)
    }
}

fn aggregate(sessions: &[&SessionReport]) -> SessionReport {
    let mut all = SessionReport {
        session: "ALL".to_string(),
        beta: sessions.first().map(|s| s.beta).unwrap_or(0.0),
        mask_k: sessions.first().map(|s| s.mask_k).unwrap_or(0),
        mask_mode: sessions
            .first()
            .map(|s| s.mask_mode.clone())
            .unwrap_or_default(),
        ..SessionReport::default()
    };
    let mut ar_steps = Some(0u64);
    let mut ssbd_steps = Some(0u64);
    for s in sessions {
        all.erasure_total += s.erasure_total;
        all.final_output_len += s.final_output_len;
        all.accepted_total += s.accepted_total;
        all.draft_total += s.draft_total;
        all.output_total += s.output_total;
        all.wall_nanos += s.wall_nanos;
        ar_steps = match (ar_steps, s.ar_decode_steps) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        ssbd_steps = match (ssbd_steps, s.ssbd_decode_steps) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
    }
    all.ar_decode_steps = ar_steps;
    all.ssbd_decode_steps = ssbd_steps;
    all
}

fn fmt_ratio(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn fmt_count(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn report_line(s: &SessionReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        s.session,
        fmt_ratio(Some(s.beta)),
        s.mask_k,
        s.mask_mode,
        fmt_ratio(s.ne()),
        fmt_ratio(s.a_over_d()),
        fmt_ratio(s.a_over_o()),
        fmt_count(s.ar_decode_steps),
        fmt_count(s.ssbd_decode_steps),
        fmt_ratio(s.step_speedup()),
        fmt_ratio(s.tps()),
    )
}

pub const REPORT_HEADER: &str =
    "session,beta,mask_k,mask_mode,NE,a_over_d,a_over_o,ar_steps,ssbd_steps,step_speedup,tps";

/// Write the CSV report: one row per session, then an aggregate row labeled
/// ALL. With several configurations in one report (a beta sweep), sessions
/// are grouped by configuration and each group gets its own aggregate.
pub fn emit_report<W: Write>(mut w: W, sessions: &[SessionReport]) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    let mut i = 0;
    while i < sessions.len() {
        let key = |s: &SessionReport| (s.beta.to_bits(), s.mask_k, s.mask_mode.clone());
        let group_key = key(&sessions[i]);
        let mut group = Vec::new();
        while i < sessions.len() && key(&sessions[i]) == group_key {
            group.push(&sessions[i]);
            i += 1;
        }
        for s in &group {
            writeln!(w, "{}", report_line(s))?;
        }
        writeln!(w, "{}", report_line(&aggregate(&group)))?;
    }
    Ok(())
}

pub fn emit_report_file(path: &std::path::Path, sessions: &[SessionReport]) -> Result<()> {
    let mut buf = Vec::new();
    emit_report(&mut buf, sessions)?;
    std::fs::write(path, buf)?;
    Ok(())
}
