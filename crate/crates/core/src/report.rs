//! Coverage and plan-quality reports built from execution summaries.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::policy::{ExecMode, Outcome, TraceSummary};
use crate::state_space::OptimalLength;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("no optimal-length entry for instance {0}")]
    MissingOracle(String),
    #[error("instance {instance} appears twice in mode {mode}")]
    DuplicateTrace { mode: ExecMode, instance: String },
    #[error("instance {0} was solved by the policy but the oracle reports it unsolvable")]
    Inconsistent(String),
}

/// `PL / OL`, undefined when nothing was solved by both.
pub fn plan_quality(pl: u64, ol: u64) -> Option<f64> {
    (ol > 0).then(|| pl as f64 / ol as f64)
}

/// Four decimals, or `---` when undefined.
pub fn format_pq(pq: Option<f64>) -> String {
    pq.map_or_else(|| "---".to_string(), |q| format!("{q:.4}"))
}

pub fn format_coverage(solved: usize, instances: usize) -> String {
    let pct = if instances == 0 { 0.0 } else { 100.0 * solved as f64 / instances as f64 };
    format!("{solved} ({pct:.0}%)")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReportRow {
    pub domain: String,
    pub instances: usize,
    pub solved: usize,
    /// Sum of plan lengths over every solved instance.
    pub total_length: u64,
    /// Policy plan lengths over instances solved by both policy and oracle.
    pub pl: u64,
    /// Optimal lengths over the same instances.
    pub ol: u64,
    /// Instances entering `pl` and `ol`.
    pub common: usize,
    /// Instances whose optimal length is known.
    pub known_ol: usize,
}

impl ReportRow {
    pub fn pq(&self) -> Option<f64> {
        plan_quality(self.pl, self.ol)
    }

    pub fn coverage(&self) -> String {
        format_coverage(self.solved, self.instances)
    }

    fn absorb(&mut self, other: &ReportRow) {
        self.instances += other.instances;
        self.solved += other.solved;
        self.total_length += other.total_length;
        self.pl += other.pl;
        self.ol += other.ol;
        self.common += other.common;
        self.known_ol += other.known_ol;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModeSection {
    pub mode: ExecMode,
    /// One row per domain, sorted by name.
    pub rows: Vec<ReportRow>,
    pub total: ReportRow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EvalReport {
    /// Cycle avoidance first, then plain, for the modes present.
    pub sections: Vec<ModeSection>,
}

/// Aggregates summaries per mode and domain. Every instance needs an oracle
/// entry; timeouts count toward coverage but not toward `PL` and `OL`.
pub fn build_report(traces: &[TraceSummary], oracle: &HashMap<String, OptimalLength>) -> Result<EvalReport, ReportError> {
    let mut seen = HashSet::new();
    let mut grouped: BTreeMap<(u8, &str), ReportRow> = BTreeMap::new();
    for t in traces {
        if !seen.insert((t.mode, t.instance.as_str())) {
            return Err(ReportError::DuplicateTrace { mode: t.mode, instance: t.instance.clone() });
        }
        let opt = *oracle.get(&t.instance).ok_or_else(|| ReportError::MissingOracle(t.instance.clone()))?;
        let order = match t.mode {
            ExecMode::CycleAvoid => 0,
            ExecMode::Plain => 1,
        };
        let row = grouped
            .entry((order, t.domain.as_str()))
            .or_insert_with(|| ReportRow { domain: t.domain.clone(), ..ReportRow::default() });
        row.instances += 1;
        if let Some(ol) = opt.length() {
            row.known_ol += 1;
            if t.outcome == Outcome::Solved {
                row.pl += t.plan_length as u64;
                row.ol += u64::from(ol);
                row.common += 1;
            }
        }
        if t.outcome == Outcome::Solved {
            if opt == OptimalLength::Unsolvable {
                return Err(ReportError::Inconsistent(t.instance.clone()));
            }
            row.solved += 1;
            row.total_length += t.plan_length as u64;
        }
    }
    let mut sections: Vec<ModeSection> = Vec::new();
    for ((order, _), row) in grouped {
        let mode = if order == 0 { ExecMode::CycleAvoid } else { ExecMode::Plain };
        if sections.last().is_none_or(|s| s.mode != mode) {
            let total = ReportRow { domain: "total".into(), ..ReportRow::default() };
            sections.push(ModeSection { mode, rows: Vec::new(), total });
        }
        let section = sections.last_mut().expect("pushed above");
        section.total.absorb(&row);
        section.rows.push(row);
    }
    Ok(EvalReport { sections })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    mode: String,
    domain: &'a str,
    instances: usize,
    solved: usize,
    coverage_pct: String,
    l: u64,
    pl: u64,
    ol: u64,
    pq: String,
    common: usize,
    known_ol: usize,
}

impl EvalReport {
    /// Aligned table, one block per mode.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.sections {
            let _ = writeln!(out, "mode: {}", s.mode);
            let _ = writeln!(
                out,
                "{:<14} {:>9} {:>12} {:>8} {:>8} {:>8} {:>8} {:>8}",
                "domain", "instances", "coverage", "L", "PL", "OL", "PQ", "known-OL"
            );
            for r in s.rows.iter().chain(std::iter::once(&s.total)) {
                let _ = writeln!(
                    out,
                    "{:<14} {:>9} {:>12} {:>8} {:>8} {:>8} {:>8} {:>8}",
                    r.domain,
                    r.instances,
                    r.coverage(),
                    r.total_length,
                    r.pl,
                    r.ol,
                    format_pq(r.pq()),
                    r.known_ol
                );
            }
            out.push('\n');
        }
        out
    }

    /// Comma-separated rows with a header, totals included.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for s in &self.sections {
            for r in s.rows.iter().chain(std::iter::once(&s.total)) {
                let pct = if r.instances == 0 { 0.0 } else { 100.0 * r.solved as f64 / r.instances as f64 };
                w.serialize(CsvRow {
                    mode: s.mode.to_string(),
                    domain: &r.domain,
                    instances: r.instances,
                    solved: r.solved,
                    coverage_pct: format!("{pct:.2}"),
                    l: r.total_length,
                    pl: r.pl,
                    ol: r.ol,
                    pq: format_pq(r.pq()),
                    common: r.common,
                    known_ol: r.known_ol,
                })
                .expect("writing to memory");
            }
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is UTF-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(domain: &str, instance: &str, mode: ExecMode, outcome: Outcome, len: usize) -> TraceSummary {
        TraceSummary { domain: domain.into(), instance: instance.into(), mode, outcome, plan_length: len }
    }

    #[test]
    fn published_ratios() {
        assert_eq!(format_pq(plan_quality(440, 422)), "1.0427");
        assert_eq!(format_pq(plan_quality(400, 400)), "1.0000");
        assert_eq!(format_pq(plan_quality(3665, 377)), "9.7215");
        assert_eq!(format_pq(plan_quality(0, 0)), "---");
        assert_eq!(format_coverage(0, 40), "0 (0%)");
        assert_eq!(format_coverage(16, 16), "16 (100%)");
    }

    #[test]
    fn aggregation_and_exclusions() {
        let oracle: HashMap<String, OptimalLength> = [
            ("a", OptimalLength::Length(3)),
            ("b", OptimalLength::Length(5)),
            ("c", OptimalLength::Timeout),
            ("d", OptimalLength::Length(2)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let traces = vec![
            summary("gripper", "a", ExecMode::Plain, Outcome::Solved, 3),
            summary("gripper", "b", ExecMode::Plain, Outcome::Solved, 7),
            summary("gripper", "c", ExecMode::Plain, Outcome::Solved, 40),
            summary("blocks", "d", ExecMode::Plain, Outcome::StepLimit, 1000),
            summary("blocks", "d", ExecMode::CycleAvoid, Outcome::Solved, 2),
        ];
        let r = build_report(&traces, &oracle).unwrap();
        assert_eq!(r.sections.len(), 2);
        assert_eq!(r.sections[0].mode, ExecMode::CycleAvoid);
        let plain = &r.sections[1];
        assert_eq!(plain.rows.iter().map(|r| r.domain.as_str()).collect::<Vec<_>>(), ["blocks", "gripper"]);
        let g = &plain.rows[1];
        assert_eq!((g.instances, g.solved, g.total_length), (3, 3, 50));
        assert_eq!((g.pl, g.ol, g.common, g.known_ol), (10, 8, 2, 2));
        assert_eq!(format_pq(g.pq()), "1.2500");
        let b = &plain.rows[0];
        assert_eq!((b.solved, b.pq()), (0, None));
        assert_eq!(b.coverage(), "0 (0%)");
        assert_eq!((plain.total.instances, plain.total.solved, plain.total.pl, plain.total.ol), (4, 3, 10, 8));

        let text = r.to_text();
        assert!(text.contains("mode: cycle-avoid") && text.contains("mode: plain"));
        assert!(text.contains("---") && text.contains("1.2500"));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 2 + 3);
        assert!(csv.starts_with("mode,domain,instances,solved,coverage_pct,l,pl,ol,pq,common,known_ol\n"));
        assert!(csv.contains("plain,gripper,3,3,100.00,50,10,8,1.2500,2,2"));
    }

    #[test]
    fn errors() {
        let oracle: HashMap<String, OptimalLength> =
            [("a".to_string(), OptimalLength::Unsolvable)].into_iter().collect();
        let t = summary("x", "a", ExecMode::Plain, Outcome::Solved, 1);
        assert_eq!(build_report(std::slice::from_ref(&t), &oracle), Err(ReportError::Inconsistent("a".into())));
        let missing = summary("x", "z", ExecMode::Plain, Outcome::Stuck, 1);
        assert_eq!(build_report(&[missing], &oracle), Err(ReportError::MissingOracle("z".into())));
        let stuck = summary("x", "a", ExecMode::Plain, Outcome::Stuck, 1);
        assert!(matches!(build_report(&[stuck.clone(), stuck], &oracle), Err(ReportError::DuplicateTrace { .. })));
        assert!(build_report(&[], &oracle).unwrap().sections.is_empty());
    }
}
