use std::collections::BTreeSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::overlap::{dice, fne, fpe};
use super::surface::hd95;
use super::wilcoxon::wilcoxon_signed_rank;
use crate::error::{Error, Result};
use crate::volume::LabelMask;

/// Per-case scores. Undefined metrics are `None`, never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub study_id: String,
    pub model: String,
    pub dice: f64,
    pub hd95_mm: Option<f64>,
    pub fpe: Option<f64>,
    pub fne: Option<f64>,
}

fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyDenominator(_) | Error::EmptyMask) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Scores a predicted mask against the ground truth.
pub fn evaluate_masks(study_id: &str, model: &str, pred: &LabelMask, truth: &LabelMask) -> Result<MetricsRow> {
    Ok(MetricsRow {
        study_id: study_id.to_string(),
        model: model.to_string(),
        dice: dice(pred, truth)?,
        hd95_mm: defined(hd95(pred, truth))?,
        fpe: defined(fpe(pred, truth))?,
        fne: defined(fne(pred, truth))?,
    })
}

/// Significance label for a p-value.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "NS"
    }
}

/// Mean, population standard deviation and median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub n: usize,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let m = s.len() / 2;
        let median = if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 };
        Some(Stats {
            mean,
            std,
            median,
            n: values.len(),
        })
    }
}

/// Outcome of the paired test against the reference model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "p", rename_all = "snake_case")]
pub enum Comparison {
    Reference,
    Tested(f64),
    /// Too few non-tied pairs for the test.
    Untestable,
}

impl Comparison {
    pub fn label(&self) -> &'static str {
        match self {
            Comparison::Reference => "-",
            Comparison::Tested(p) => stars(*p),
            Comparison::Untestable => "n/a",
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            Comparison::Tested(p) => Some(*p),
            _ => None,
        }
    }
}

/// One model's row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub dice: Option<Stats>,
    pub hd95_mm: Option<Stats>,
    pub dice_test: Comparison,
    pub hd95_test: Comparison,
}

/// The rows of one model, in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelResults {
    pub model: String,
    pub rows: Vec<MetricsRow>,
}

fn paired(reference: &[MetricsRow], other: &[MetricsRow], pick: impl Fn(&MetricsRow) -> Option<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in other {
        if let Some(q) = reference.iter().find(|q| q.study_id == r.study_id) {
            if let (Some(x), Some(y)) = (pick(r), pick(q)) {
                a.push(x);
                b.push(y);
            }
        }
    }
    (a, b)
}

fn compare(a: &[f64], b: &[f64]) -> Result<Comparison> {
    match wilcoxon_signed_rank(a, b) {
        Ok(w) => Ok(Comparison::Tested(w.p_value)),
        Err(Error::TooFewPairs(_)) => Ok(Comparison::Untestable),
        Err(e) => Err(e),
    }
}

/// Aggregates every model and tests its Dice and HD95 against the reference
/// model's values on the same cases.
pub fn summarize(models: &[ModelResults], reference: &str) -> Result<Vec<SummaryRow>> {
    let ids = |m: &ModelResults| m.rows.iter().map(|r| r.study_id.clone()).collect::<BTreeSet<_>>();
    let refm = models
        .iter()
        .find(|m| m.model == reference)
        .ok_or_else(|| Error::CaseSetMismatch(format!("reference model {reference} has no results")))?;
    let ref_ids = ids(refm);
    let mut out = Vec::with_capacity(models.len());
    for m in models {
        let mine = ids(m);
        if mine != ref_ids || mine.len() != m.rows.len() {
            return Err(Error::CaseSetMismatch(format!(
                "{} was evaluated on {} cases, {reference} on {}",
                m.model,
                m.rows.len(),
                ref_ids.len()
            )));
        }
        let dice: Vec<f64> = m.rows.iter().map(|r| r.dice).collect();
        let hd: Vec<f64> = m.rows.iter().filter_map(|r| r.hd95_mm).collect();
        let (dice_test, hd95_test) = if m.model == reference {
            (Comparison::Reference, Comparison::Reference)
        } else {
            let (a, b) = paired(&refm.rows, &m.rows, |r| Some(r.dice));
            let (c, d) = paired(&refm.rows, &m.rows, |r| r.hd95_mm);
            (compare(&a, &b)?, compare(&c, &d)?)
        };
        out.push(SummaryRow {
            model: m.model.clone(),
            dice: Stats::of(&dice),
            hd95_mm: Stats::of(&hd),
            dice_test,
            hd95_test,
        });
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Writes per-case rows as CSV with header `study_id,model,dice,hd95_mm,fpe,fne`.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["study_id", "model", "dice", "hd95_mm", "fpe", "fne"]).map_err(io)?;
    for r in rows {
        w.write_record([
            r.study_id.clone(),
            r.model.clone(),
            format!("{}", r.dice),
            fmt_opt(r.hd95_mm),
            fmt_opt(r.fpe),
            fmt_opt(r.fne),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let parse = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != 6 {
            return Err(Error::Parse(format!("expected 6 fields, got {}", rec.len())));
        }
        rows.push(MetricsRow {
            study_id: rec[0].to_string(),
            model: rec[1].to_string(),
            dice: parse(&rec[2])?.ok_or_else(|| Error::Parse("missing dice".into()))?,
            hd95_mm: parse(&rec[3])?,
            fpe: parse(&rec[4])?,
            fne: parse(&rec[5])?,
        });
    }
    Ok(rows)
}

fn cell(s: Option<Stats>) -> (String, String) {
    match s {
        Some(s) => (format!("{:.4} ({:.4})", s.mean, s.std), format!("{:.4}", s.median)),
        None => ("n/a".into(), "n/a".into()),
    }
}

/// One markdown table: model, then Mean (Std) / Median / p-value for Dice and HD95.
pub fn render_table(title: &str, first_column: &str, rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    if !title.is_empty() {
        s.push_str(&format!("### {title}\n\n"));
    }
    s.push_str(&format!(
        "| {first_column} | Dice Mean (Std) | Dice Median | Dice p-value | HD95 (mm) Mean (Std) | HD95 (mm) Median | HD95 (mm) p-value |\n"
    ));
    s.push_str("|---|---|---|---|---|---|---|\n");
    for r in rows {
        let (dm, dmed) = cell(r.dice);
        let (hm, hmed) = cell(r.hd95_mm);
        s.push_str(&format!(
            "| {} | {dm} | {dmed} | {} | {hm} | {hmed} | {} |\n",
            r.model,
            r.dice_test.label(),
            r.hd95_test.label()
        ));
    }
    s
}
