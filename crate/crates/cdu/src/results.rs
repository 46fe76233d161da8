//! Evaluation results: long-format CSV and JSON reports.

use std::path::Path;

use cdu_core::eval::{EvalReport, SweepRow};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// One `(method, instance, metric, layer)` value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub method: String,
    pub instance: usize,
    pub metric: String,
    pub layer: Option<usize>,
    pub value: f64,
    pub seed: u64,
}

/// Flatten a report: scalar metrics with an empty layer, per-layer series
/// with their index.
pub fn long_rows(report: &EvalReport, seed: u64) -> Vec<LongRow> {
    let method = report.method.as_str().to_string();
    let mut out = Vec::new();
    for m in &report.rows {
        let mut push = |metric: &str, layer: Option<usize>, value: f64| {
            out.push(LongRow {
                method: method.clone(),
                instance: m.instance,
                metric: metric.into(),
                layer,
                value,
                seed,
            })
        };
        push("objective", None, m.objective);
        push("violation_mean", None, m.violation_mean);
        push("violation_max", None, m.violation_max);
        for (name, v) in [
            ("mse_x", m.mse_x),
            ("mse_lambda", m.mse_lambda),
            ("reference_kkt", m.reference_kkt),
        ] {
            if let Some(v) = v {
                push(name, None, v);
            }
        }
        let series: [(&str, &Vec<f64>); 4] = [
            ("slackness", &m.slackness),
            ("constraint_norm", &m.constraint_norm),
            ("primal_lagrangian", &m.primal_lagrangian),
            ("primal_grad_norm", &m.primal_grad_norm),
        ];
        for (name, values) in series {
            for (l, v) in values.iter().enumerate() {
                push(name, Some(l), *v);
            }
        }
    }
    out
}

pub fn write_long_csv(path: &Path, rows: &[LongRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    if rows.is_empty() {
        w.write_record(["method", "instance", "metric", "layer", "value", "seed"])
            .map_err(|e| CliError::format(path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_long_csv(path: &Path) -> Result<Vec<LongRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::format(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable value");
    std::fs::write(path, text).map_err(CliError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::format(path, e))?;
    }
    w.flush().map_err(CliError::io(path))
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::format(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| CliError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdu_core::baselines::DaConfig;
    use cdu_core::eval::FamilyParams;
    use cdu_core::eval::{evaluate, references, Method, OodAxis, Runner};

    #[test]
    fn long_csv_round_trips_report_values() {
        let base = FamilyParams::Miqp { n: 5, m: 2, r: 1 };
        let data: Vec<_> = (0..2).map(|i| base.generate(0, i).unwrap()).collect();
        let refs = references(&data, None, 0).unwrap();
        let cfg = DaConfig::miqp(5);
        let rep = evaluate(Method::Da, &Runner::DualAscent(&cfg), &data, &refs, "h").unwrap();
        let rows = long_rows(&rep, 9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_long_csv(&p, &rows).unwrap();
        assert_eq!(read_long_csv(&p).unwrap(), rows);
        let obj: Vec<f64> = rows
            .iter()
            .filter(|r| r.metric == "objective")
            .map(|r| r.value)
            .collect();
        assert_eq!(
            obj,
            rep.rows.iter().map(|m| m.objective).collect::<Vec<_>>()
        );
    }

    #[test]
    fn sweep_csv_round_trips() {
        let rows = vec![SweepRow {
            method: Method::Cdu,
            axis: OodAxis::N,
            value: 20.0,
            in_distribution: true,
            seed: 3,
            objective: -1.5,
            mse_x: None,
            violation_mean: 0.01,
        }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_sweep_csv(&p, &rows).unwrap();
        assert_eq!(read_sweep_csv(&p).unwrap(), rows);
    }
}
