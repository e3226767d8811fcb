use std::fs::File;
use std::path::Path;

use super::config::ExperimentConfig;
use super::data::Dataset;
use super::evaluate::evaluate;
use super::folds::FoldAssignment;
use super::train::{train_fold, EpochLog};
use crate::arch::{Family, ModelName};
use crate::error::{Error, Result};
use crate::metrics::{read_metrics_csv, render_table, summarize, write_metrics_csv, ModelResults, SummaryRow};

#[derive(Debug, Clone)]
pub struct AblationReport {
    pub results: Vec<ModelResults>,
    pub summary: Vec<SummaryRow>,
    pub markdown: String,
}

/// Progress notifications from a grid run.
#[derive(Debug, Clone, Copy)]
pub enum GridEvent<'a> {
    Training { model: &'a ModelName, fold: usize },
    Epoch { model: &'a ModelName, fold: usize, row: &'a EpochLog },
    Evaluated { model: &'a ModelName, fold: usize, cases: usize },
}

/// One config per model of `base.grid`.
pub fn grid_configs(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    base.grid.iter().map(|m| base.with_model(m)).collect()
}

fn family_title(f: Family) -> &'static str {
    match f {
        Family::BM => "A. Baseline models",
        Family::DM => "B. Double U-Net models",
        Family::EM => "C. Ensemble models",
    }
}

/// Summary rows against `reference` and the grouped markdown tables.
pub fn build_report(results: Vec<ModelResults>, reference: &ModelName) -> Result<AblationReport> {
    let summary = summarize(&results, &reference.to_string())?;
    let mut markdown = String::new();
    for family in [Family::BM, Family::DM, Family::EM] {
        let rows: Vec<SummaryRow> = summary
            .iter()
            .filter(|r| r.model.parse::<ModelName>().map(|m| m.family() == family).unwrap_or(false))
            .cloned()
            .collect();
        if rows.is_empty() {
            continue;
        }
        if !markdown.is_empty() {
            markdown.push('\n');
        }
        markdown.push_str(&render_table(family_title(family), "Model", &rows));
    }
    Ok(AblationReport {
        results,
        summary,
        markdown,
    })
}

/// Trains and evaluates every config on every fold, then compares each
/// model's pooled test cases with `reference`.
///
/// Configs run in order. BM and DM models are trained per fold; EM models
/// combine the BM checkpoints already present in the output directory and
/// fail with `MissingDependency` when a member has not been trained. Per-case
/// rows go to `<model>/metrics.csv` and the tables to `summary.md`.
pub fn run_ablation_grid(
    configs: &[ExperimentConfig],
    reference: &ModelName,
    data: &Dataset,
    folds: &FoldAssignment,
    on_event: &mut dyn FnMut(GridEvent),
) -> Result<AblationReport> {
    let first = configs
        .first()
        .ok_or_else(|| Error::InvalidConfig("empty ablation grid".into()))?;
    for c in configs {
        if c.manifest != first.manifest || c.seed != first.seed || c.folds != first.folds || c.output_dir != first.output_dir {
            return Err(Error::InvalidConfig(
                "grid configs must share manifest, seed, folds and output directory".into(),
            ));
        }
    }
    let mut results = Vec::with_capacity(configs.len());
    for cfg in configs {
        let model = cfg.model_name()?;
        let mut rows = Vec::new();
        for fold in 0..folds.len() {
            if model.family() != Family::EM {
                on_event(GridEvent::Training { model: &model, fold });
                train_fold(cfg, data, folds, fold, &mut |row| on_event(GridEvent::Epoch { model: &model, fold, row }))?;
            }
            let r = evaluate(cfg, data, folds, fold)?;
            on_event(GridEvent::Evaluated {
                model: &model,
                fold,
                cases: r.len(),
            });
            rows.extend(r);
        }
        let dir = cfg.model_dir(&model);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("metrics.csv");
        write_metrics_csv(File::create(&path).map_err(|e| Error::io(&path, e))?, &rows)?;
        results.push(ModelResults {
            model: model.to_string(),
            rows,
        });
    }
    let report = build_report(results, reference)?;
    let path = first.output_dir.join("summary.md");
    std::fs::write(&path, &report.markdown).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}

/// Rebuilds the report from the per-case CSVs of an earlier grid run.
pub fn report_from_dir(cfg: &ExperimentConfig, models: &[ModelName], reference: &ModelName) -> Result<AblationReport> {
    let results = models
        .iter()
        .map(|m| {
            let path = cfg.model_dir(m).join("metrics.csv");
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            Ok(ModelResults {
                model: m.to_string(),
                rows: read_metrics_csv(file)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    build_report(results, reference)
}

pub fn write_report(report: &AblationReport, path: &Path) -> Result<()> {
    std::fs::write(path, &report.markdown).map_err(|e| Error::io(path, e))
}
