//! CSV files written by `simulate` and the table printed by `report`.

use std::fmt::Write as _;
use std::io::{Read, Write};

use capm_core::sim::{MetricsTable, TrialRecord};
use capm_core::PlannerKind;
use nalgebra::Point2;
use thiserror::Error;

pub const TRIALS_FILE: &str = "trials.csv";
pub const METRICS_FILE: &str = "metrics.csv";

pub const TRIAL_HEADER: [&str; 16] = [
    "trial_id",
    "path_length",
    "planner",
    "branch",
    "success",
    "expected_cost",
    "realized_cost",
    "troi_x",
    "troi_y",
    "r_w",
    "mpoi_x",
    "mpoi_y",
    "x1_x",
    "x1_y",
    "x3_x",
    "x3_y",
];

pub const METRICS_HEADER: [&str; 4] = ["planner", "path_length", "success_rate_pct", "avg_cost"];

/// `planner` column of the η rows in metrics.csv.
pub const ETA_ROW: &str = "eta_bc";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("metrics.csv: {0}")]
    Malformed(String),
}

/// Six significant digits, trailing zeros dropped; NaN prints as an empty field.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Round once in scientific form so the exponent reflects any carry.
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-5..=15).contains(&exp) {
        let mant = trim_zeros(mant);
        return format!("{mant}e{exp}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let value: f64 = sci.parse().expect("round trip");
    trim_zeros(&format!("{value:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_xy(p: Option<Point2<f64>>) -> [String; 2] {
    match p {
        Some(p) => [fmt6(p.x), fmt6(p.y)],
        None => [String::new(), String::new()],
    }
}

pub fn write_trials<W: Write>(out: W, records: &[TrialRecord]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER)?;
    for r in records {
        let [x1x, x1y] = opt_xy(r.x1);
        let [x3x, x3y] = opt_xy(r.x3);
        w.write_record([
            r.trial_id.to_string(),
            fmt6(r.path_length),
            r.planner.letter().to_string(),
            r.branch.map(|b| b.name()).unwrap_or("").to_string(),
            u8::from(r.success).to_string(),
            fmt6(r.expected_cost),
            fmt6(r.realized_cost),
            fmt6(r.troi.center.x),
            fmt6(r.troi.center.y),
            fmt6(r.troi.radius),
            fmt6(r.mpoi.x),
            fmt6(r.mpoi.y),
            x1x,
            x1y,
            x3x,
            x3y,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics<W: Write>(out: W, m: &MetricsTable) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for kind in PlannerKind::ALL {
        let row = m.row(kind);
        for (i, l) in m.path_lengths.iter().enumerate() {
            w.write_record([
                kind.letter().to_string(),
                fmt6(*l),
                fmt6(row.success_pct[i]),
                fmt6(row.avg_cost[i]),
            ])?;
        }
    }
    for (l, eta) in m.path_lengths.iter().zip(&m.eta_bc) {
        w.write_record([ETA_ROW.to_string(), fmt6(*l), String::new(), fmt6(*eta)])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary view of metrics.csv, kept as the printed strings.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub path_lengths: Vec<String>,
    /// Planner letter, pooled success, one cost per path length.
    pub rows: Vec<(String, String, Vec<String>)>,
    pub eta: Vec<String>,
}

fn parse_num(s: &str, what: &str) -> Result<f64, OutputError> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| OutputError::Malformed(format!("{what} `{s}` is not a number")))
}

pub fn read_report<R: Read>(input: R) -> Result<ReportTable, OutputError> {
    let mut rd = csv::Reader::from_reader(input);
    if rd.headers()?.iter().ne(METRICS_HEADER) {
        return Err(OutputError::Malformed("unexpected header".into()));
    }
    let mut lengths: Vec<String> = Vec::new();
    let mut planners: Vec<(String, Vec<f64>, Vec<String>)> = Vec::new();
    let mut eta: Vec<(String, String)> = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();
        let (planner, length) = (field(0), field(1));
        parse_num(&length, "path_length")?;
        if planner == ETA_ROW {
            eta.push((length, field(3)));
            continue;
        }
        if PlannerKind::from_letter(&planner).is_none() {
            return Err(OutputError::Malformed(format!(
                "unknown planner `{planner}`"
            )));
        }
        if !lengths.contains(&length) {
            lengths.push(length.clone());
        }
        let success = parse_num(&field(2), "success_rate_pct")?;
        parse_num(&field(3), "avg_cost")?;
        match planners.iter_mut().find(|p| p.0 == planner) {
            Some(p) => {
                p.1.push(success);
                p.2.push(field(3));
            }
            None => planners.push((planner, vec![success], vec![field(3)])),
        }
    }
    if planners.is_empty() {
        return Err(OutputError::Malformed("no planner rows".into()));
    }
    let rows = planners
        .into_iter()
        .map(|(p, succ, costs)| {
            if costs.len() != lengths.len() {
                return Err(OutputError::Malformed(format!(
                    "planner {p} misses a path length"
                )));
            }
            // Every path length holds the same number of trials, so the
            // pooled rate is the mean of the per-length rates.
            let pooled = succ.iter().sum::<f64>() / succ.len() as f64;
            Ok((p, fmt6(pooled), costs))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let eta = lengths
        .iter()
        .map(|l| {
            eta.iter()
                .find(|(el, _)| el == l)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| OutputError::Malformed(format!("no {ETA_ROW} row for {l}")))
        })
        .collect::<Result<_, _>>()?;
    Ok(ReportTable {
        path_lengths: lengths,
        rows,
        eta,
    })
}

/// The same view built directly from a metrics table.
pub fn report_of(m: &MetricsTable) -> ReportTable {
    ReportTable {
        path_lengths: m.path_lengths.iter().map(|l| fmt6(*l)).collect(),
        rows: PlannerKind::ALL
            .iter()
            .map(|k| {
                let r = m.row(*k);
                (
                    k.letter().to_string(),
                    fmt6(r.pooled_success_pct),
                    r.avg_cost.iter().map(|c| fmt6(*c)).collect(),
                )
            })
            .collect(),
        eta: m.eta_bc.iter().map(|e| fmt6(*e)).collect(),
    }
}

pub fn format_report(t: &ReportTable) -> String {
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut head = vec!["planner".to_string(), "success_%".to_string()];
    head.extend(t.path_lengths.iter().map(|l| format!("L={l}")));
    cells.push(head);
    for (p, s, costs) in &t.rows {
        let mut row = vec![p.clone(), s.clone()];
        row.extend(costs.iter().cloned());
        cells.push(row);
    }
    let mut row = vec![ETA_ROW.to_string(), "-".to_string()];
    row.extend(t.eta.iter().cloned());
    cells.push(row);
    let ncol = cells[0].len();
    let widths: Vec<usize> = (0..ncol)
        .map(|j| {
            cells
                .iter()
                .map(|r| r.get(j).map_or(0, |c| c.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in &cells {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(j, c)| match j {
                0 => format!("{c:<w$}", w = widths[j]),
                _ => format!("{c:>w$}", w = widths[j]),
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(7.0), "7");
        assert_eq!(fmt6(2.75), "2.75");
        assert_eq!(fmt6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt6(123_456.7), "123457");
        assert_eq!(fmt6(9.999_999), "10");
        assert_eq!(fmt6(-0.000_123_456_78), "-0.000123457");
        assert_eq!(fmt6(1.234_567e-9), "1.23457e-9");
        assert_eq!(fmt6(f64::NAN), "");
    }

    #[test]
    fn report_table_shape() {
        let t = ReportTable {
            path_lengths: vec!["2.75".into(), "3.25".into()],
            rows: vec![
                ("a".into(), "40".into(), vec!["7.7".into(), "8.7".into()]),
                ("b".into(), "100".into(), vec!["8.8".into(), "9.7".into()]),
            ],
            eta: vec!["0.1".into(), "0.09".into()],
        };
        let s = format_report(&t);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].contains("L=2.75") && lines[0].contains("success_%"));
        assert!(lines[3].starts_with("eta_bc"));
    }
}
