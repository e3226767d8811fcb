use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use pocketseg::arch::{published_grid, ModelName};
use pocketseg::harness::{
    evaluate, grid_configs, load_dataset, make_folds, report_from_dir, run_ablation_grid, run_gradient_suite,
    train_fold, Dataset, ExperimentConfig, FoldAssignment, GridEvent, SuiteSettings,
};
use pocketseg::metrics::write_metrics_csv;
use pocketseg::phantom::generate_cohort;
use pocketseg::preprocess::prepare_study;
use pocketseg::volume::{load_manifest, load_study, save_manifest, save_mask, save_volume, DatasetManifest, ManifestEntry};

#[derive(Parser, Debug)]
#[command(name = "pocketseg", version, about = "Volumetric GTV segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Named config used when no file is given: desk or full.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Fold index; all folds when omitted.
    #[arg(long, global = true)]
    fold: Option<usize>,
    /// Seed for splitting, training and phantom generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output location (overrides the configured output directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cohort and its manifest.
    GeneratePhantoms,
    /// Resample and normalise every study into a new dataset.
    Preprocess,
    /// Write the cross-validation fold assignment.
    Split,
    /// Train the configured model.
    Train,
    /// Score the trained model on held-out studies.
    Evaluate,
    /// Train and compare every model of the grid.
    Ablate,
    /// Rebuild the comparison tables from stored per-case metrics.
    Report,
    /// Run the finite-difference gradient suite.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match (&cli.config, &cli.preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(name)) => ExperimentConfig::preset(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.cohort.spec.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn folds_for(cfg: &ExperimentConfig, manifest: &DatasetManifest) -> Result<FoldAssignment> {
    let path = cfg.folds_path();
    if path.exists() {
        let folds = FoldAssignment::load(&path)?;
        folds.verify(&manifest.study_ids())?;
        return Ok(folds);
    }
    let folds = make_folds(manifest, cfg.folds, &cfg.split_ratios, cfg.seed, cfg.patient_grouped)?;
    folds.save(&path)?;
    Ok(folds)
}

fn fold_indices(cli: &Cli, folds: &FoldAssignment) -> Vec<usize> {
    match cli.fold {
        Some(f) => vec![f],
        None => (0..folds.len()).collect(),
    }
}

fn preprocess(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let manifest = load_manifest(&cfg.manifest)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries = Vec::new();
    for e in &manifest.entries {
        let study = prepare_study(&load_study(&manifest, e)?, &cfg.preprocess)?;
        let base = PathBuf::from(&e.study_id);
        std::fs::create_dir_all(out.join(&base))?;
        let mut entry = ManifestEntry {
            study_id: e.study_id.clone(),
            patient_id: e.patient_id.clone(),
            t1: None,
            t2: None,
            t1c: None,
            fl: None,
            gtv: None,
        };
        for (seq, vol) in &study.sequences {
            let rel = base.join(seq.as_str());
            save_volume(vol, out.join(&rel))?;
            match seq {
                pocketseg::volume::Sequence::T1 => entry.t1 = Some(rel),
                pocketseg::volume::Sequence::T2 => entry.t2 = Some(rel),
                pocketseg::volume::Sequence::T1C => entry.t1c = Some(rel),
                pocketseg::volume::Sequence::FL => entry.fl = Some(rel),
            }
        }
        if let Some(m) = &study.gtv {
            let rel = base.join("gtv");
            save_mask(m, out.join(&rel))?;
            entry.gtv = Some(rel);
        }
        entries.push(entry);
    }
    let path = out.join("manifest.json");
    save_manifest(
        &DatasetManifest {
            entries,
            base_dir: out.to_path_buf(),
        },
        &path,
    )?;
    println!("{}", path.display());
    Ok(())
}

fn train(cli: &Cli, cfg: &ExperimentConfig, data: &Dataset, folds: &FoldAssignment) -> Result<()> {
    let model = cfg.model_name()?;
    for fold in fold_indices(cli, folds) {
        let r = train_fold(cfg, data, folds, fold, &mut |row| {
            let val = row.val_dice.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
            eprintln!("{model} fold {fold} epoch {} loss {:.4} val_dice {val}", row.epoch, row.train_loss);
        })?;
        println!(
            "{model} fold {fold}: {} steps, best epoch {}, checkpoint {}",
            r.steps,
            r.best_epoch,
            r.checkpoint.display()
        );
    }
    Ok(())
}

fn evaluate_cmd(cli: &Cli, cfg: &ExperimentConfig, data: &Dataset, folds: &FoldAssignment) -> Result<()> {
    let model = cfg.model_name()?;
    for fold in fold_indices(cli, folds) {
        let rows = evaluate(cfg, data, folds, fold)?;
        let dir = cfg.fold_dir(&model, fold);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join("metrics.csv");
        write_metrics_csv(File::create(&path)?, &rows)?;
        let mean = rows.iter().map(|r| r.dice).sum::<f64>() / rows.len().max(1) as f64;
        println!("{model} fold {fold}: {} cases, mean Dice {mean:.4}, {}", rows.len(), path.display());
    }
    Ok(())
}

fn grid_of(cfg: &ExperimentConfig) -> Vec<ModelName> {
    if cfg.grid.is_empty() {
        published_grid()
    } else {
        cfg.grid.clone()
    }
}

fn run(cli: &Cli) -> Result<bool> {
    if let Command::Gradcheck { seeds } = cli.command {
        let settings = SuiteSettings {
            seeds,
            ..SuiteSettings::default()
        };
        let report = run_gradient_suite(&settings, &mut |_| {})?;
        for (op, worst, ok) in report.worst_per_op() {
            println!("{} {op}: max relative error {worst:.3e}", if ok { "PASS" } else { "FAIL" });
        }
        return Ok(report.passed());
    }
    let cfg = load_config(cli)?;
    match cli.command {
        Command::GeneratePhantoms => {
            let dir = cli
                .out
                .clone()
                .or_else(|| cfg.manifest.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            let c = &cfg.cohort;
            let m = generate_cohort(&c.spec, c.n_studies, c.n_patients, &dir)?;
            println!("{} studies in {}", m.len(), dir.join("manifest.json").display());
        }
        Command::Preprocess => preprocess(&cfg, &cfg.output_dir.join("preprocessed"))?,
        Command::Split => {
            let manifest = load_manifest(&cfg.manifest)?;
            let folds = make_folds(&manifest, cfg.folds, &cfg.split_ratios, cfg.seed, cfg.patient_grouped)?;
            let path = cfg.folds_path();
            folds.save(&path)?;
            println!("{}", path.display());
        }
        Command::Train | Command::Evaluate | Command::Ablate => {
            let (manifest, data) = load_dataset(&cfg)?;
            let folds = folds_for(&cfg, &manifest)?;
            match cli.command {
                Command::Train => train(cli, &cfg, &data, &folds)?,
                Command::Evaluate => evaluate_cmd(cli, &cfg, &data, &folds)?,
                _ => {
                    let base = ExperimentConfig {
                        grid: grid_of(&cfg),
                        ..cfg.clone()
                    };
                    let report = run_ablation_grid(&grid_configs(&base), &cfg.reference, &data, &folds, &mut |ev| {
                        if let GridEvent::Evaluated { model, fold, cases } = ev {
                            eprintln!("{model} fold {fold}: {cases} cases evaluated");
                        }
                    })?;
                    print!("{}", report.markdown);
                }
            }
        }
        Command::Report => {
            let report = report_from_dir(&cfg, &grid_of(&cfg), &cfg.reference)?;
            let path = cfg.output_dir.join("summary.md");
            std::fs::write(&path, &report.markdown)?;
            print!("{}", report.markdown);
        }
        Command::Gradcheck { .. } => unreachable!(),
    }
    Ok(true)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<pocketseg::Error>() {
        Some(err) if !err.is_validation() => 2,
        Some(_) => 1,
        None if e.downcast_ref::<std::io::Error>().is_some() => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
