//! Ablation report: per-run results, per-row means, and their file forms.

use std::fmt::Write as _;
use std::io::{Read, Write};

use super::metrics::{auc, Confusion, Metrics, Prediction};
use super::AblationRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub row: AblationRow,
    pub seed: u64,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub auc: f64,
    /// Empty when the run was read back from a per-seed CSV.
    pub predictions: Vec<Prediction>,
}

impl RunResult {
    pub fn new(row: AblationRow, seed: u64, predictions: Vec<Prediction>, threshold: f64) -> Result<Self> {
        let confusion = Confusion::from_predictions(&predictions, threshold);
        Ok(RunResult {
            row,
            seed,
            confusion,
            metrics: confusion.metrics(),
            auc: auc(&predictions)?,
            predictions,
        })
    }
}

/// Means over seeds, as fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSummary {
    pub row: AblationRow,
    pub runs: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub auc: f64,
}

impl RowSummary {
    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.sensitivity, self.specificity, self.precision, self.auc]
    }
}

pub const COLUMNS: [&str; 5] = ["Accuracy", "Sensitivity", "Specificity", "Precision", "AUC"];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<RowSummary>,
    pub runs: Vec<RunResult>,
}

fn io_err(what: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Eval(format!("{what}: {e}"))
}

impl EvalReport {
    pub fn from_runs(runs: Vec<RunResult>) -> Self {
        let mut rows = Vec::new();
        for row in AblationRow::ALL {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.row == row).collect();
            if mine.is_empty() {
                continue;
            }
            let n = mine.len() as f64;
            let mean = |f: &dyn Fn(&RunResult) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / n;
            rows.push(RowSummary {
                row,
                runs: mine.len(),
                accuracy: mean(&|r| r.metrics.accuracy),
                sensitivity: mean(&|r| r.metrics.sensitivity),
                specificity: mean(&|r| r.metrics.specificity),
                precision: mean(&|r| r.metrics.precision),
                auc: mean(&|r| r.auc),
            });
        }
        EvalReport { rows, runs }
    }

    pub fn row(&self, row: AblationRow) -> Option<&RowSummary> {
        self.rows.iter().find(|r| r.row == row)
    }

    /// `configuration,accuracy,...,auc` with percentages to two decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = io_err("writing report CSV");
        w.write_record(["configuration", "accuracy", "sensitivity", "specificity", "precision", "auc"])
            .map_err(&err)?;
        for r in &self.rows {
            let mut rec = vec![r.row.label().to_string()];
            rec.extend(r.values().iter().map(|v| format!("{:.2}", 100.0 * v)));
            w.write_record(&rec).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::Eval(format!("writing report CSV: {e}")))?;
        Ok(())
    }

    /// Aligned text table, one line per configuration.
    pub fn render_table(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.row.label().len())
            .max()
            .unwrap_or(0)
            .max("Configuration".len());
        let mut s = String::new();
        let _ = write!(s, "{:<name_width$}", "Configuration");
        for c in COLUMNS {
            let _ = write!(s, "  {c:>11}");
        }
        s.push('\n');
        let _ = writeln!(s, "{}", "-".repeat(name_width + COLUMNS.len() * 13));
        for r in &self.rows {
            let _ = write!(s, "{:<name_width$}", r.row.label());
            for v in r.values() {
                let _ = write!(s, "  {:>11.2}", 100.0 * v);
            }
            s.push('\n');
        }
        s
    }

    /// One line per (configuration, seed) with raw counts and fractions.
    pub fn write_per_seed_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = io_err("writing per-seed CSV");
        w.write_record([
            "configuration",
            "seed",
            "tp",
            "fn",
            "tn",
            "fp",
            "accuracy",
            "sensitivity",
            "specificity",
            "precision",
            "auc",
            "precision_undefined",
        ])
        .map_err(&err)?;
        for r in &self.runs {
            let c = r.confusion;
            let m = r.metrics;
            w.write_record([
                r.row.slug().to_string(),
                r.seed.to_string(),
                c.tp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                c.fp.to_string(),
                format!("{:.9}", m.accuracy),
                format!("{:.9}", m.sensitivity),
                format!("{:.9}", m.specificity),
                format!("{:.9}", m.precision),
                format!("{:.9}", r.auc),
                m.precision_undefined.to_string(),
            ])
            .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::Eval(format!("writing per-seed CSV: {e}")))?;
        Ok(())
    }

    /// Rebuilds a report (without predictions) from a per-seed CSV.
    pub fn read_per_seed_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let err = io_err("reading per-seed CSV");
        let mut runs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(&err)?;
            let field = |i: usize| rec.get(i).unwrap_or("");
            let bad = |what: &str| Error::Eval(format!("per-seed CSV: bad {what} `{}`", rec.iter().collect::<Vec<_>>().join(",")));
            let num = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| bad(what));
            let count = |i: usize, what: &str| field(i).parse::<usize>().map_err(|_| bad(what));
            runs.push(RunResult {
                row: field(0).parse()?,
                seed: field(1).parse().map_err(|_| bad("seed"))?,
                confusion: Confusion {
                    tp: count(2, "tp")?,
                    fn_: count(3, "fn")?,
                    tn: count(4, "tn")?,
                    fp: count(5, "fp")?,
                },
                metrics: Metrics {
                    accuracy: num(6, "accuracy")?,
                    sensitivity: num(7, "sensitivity")?,
                    specificity: num(8, "specificity")?,
                    precision: num(9, "precision")?,
                    precision_undefined: field(11) == "true",
                },
                auc: num(10, "auc")?,
                predictions: Vec::new(),
            });
        }
        Ok(EvalReport::from_runs(runs))
    }
}

/// `record_id,label,probability`.
pub fn write_predictions_csv<W: Write>(out: W, predictions: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = io_err("writing predictions CSV");
    w.write_record(["record_id", "label", "probability"]).map_err(&err)?;
    for p in predictions {
        w.write_record([p.record_id.clone(), p.label.to_string(), format!("{:.9}", p.probability)])
            .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::Eval(format!("writing predictions CSV: {e}")))?;
    Ok(())
}
