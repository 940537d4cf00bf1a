use std::fs;
use std::path::{Path, PathBuf};

use sidkit::bank::{read_bank, synth_bank, write_bank};
use sidkit::fusion::fuse_banks;
use sidkit::metrics::{evaluate, write_report};
use sidkit::probe::{bce_loss_with_clip, load_probe, save_probe, train_probe};
use sidkit::projection::umap_project;
use sidkit::{FusionSpec, ReportFormat, SynthSpec};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::ConfigArgs;

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    RunConfig::load(args.config.as_deref(), &args.set)
}

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

pub fn synth(spec_path: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::io(spec_path, e))?;
    let spec: SynthSpec = if is_toml(spec_path) {
        toml::from_str(&text).map_err(|e| CliError::domain(format!("spec {}: {}", spec_path.display(), e.message())))?
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::domain(format!("spec {}: {e}", spec_path.display())))?
    };
    let bank = synth_bank(&spec)?;
    write_bank(&bank, out)?;
    eprintln!("wrote {} records of dim {} to {}", bank.len(), bank.dim(), out.display());
    Ok(())
}

pub fn train(bank_path: &Path, val_path: Option<&Path>, out: &Path, args: &ConfigArgs) -> Result<(), CliError> {
    let run = load_config(args)?;
    let bank = read_bank(bank_path)?;
    let val = val_path.map(read_bank).transpose()?;
    let (probe, history) = train_probe(&bank, val.as_ref(), &run.train)?;
    let trained_on = probe.trained_on().to_string();
    let probe = probe.with_provenance(trained_on, run.digest());

    for (i, loss) in history.train_loss.iter().enumerate() {
        match history.val_loss.as_ref().map(|v| v[i]) {
            Some(v) => eprintln!("epoch {:>4}  train_loss {loss:.6}  val_loss {v:.6}", i + 1),
            None => eprintln!("epoch {:>4}  train_loss {loss:.6}", i + 1),
        }
    }
    save_probe(&probe, out)?;

    let eps = run.train.prob_clip_epsilon;
    let train_loss = match history.train_loss.last() {
        Some(l) => *l,
        None => bce_loss_with_clip(&probe, &bank, eps)?,
    };
    println!("epochs_run {}", history.epochs_run);
    println!("train_loss {train_loss}");
    if let Some(v) = &val {
        let val_loss = match history.val_loss.as_ref().and_then(|h| h.last()) {
            Some(l) => *l,
            None => bce_loss_with_clip(&probe, v, eps)?,
        };
        println!("val_loss {val_loss}");
    }
    println!("config_digest {}", probe.config_digest());
    Ok(())
}

pub fn eval(
    probe_path: &Path,
    bank_path: &Path,
    report_path: &Path,
    format: Option<ReportFormat>,
    args: &ConfigArgs,
) -> Result<(), CliError> {
    let run = load_config(args)?;
    let probe = load_probe(probe_path)?;
    let bank = read_bank(bank_path)?;
    let report = evaluate(&probe, &bank, run.eval.threshold)?;
    let format = format.unwrap_or_else(|| {
        let csv = report_path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if csv {
            ReportFormat::Csv
        } else {
            ReportFormat::Json
        }
    });
    write_report(&report, report_path, format)?;
    for g in &report.generators {
        eprintln!(
            "{:<16} ap {:.4}  acc {:.4}  (real {:.4}, fake {:.4})",
            g.generator_tag, g.ap, g.balanced_acc, g.real_acc, g.fake_acc
        );
    }
    println!("mAP {:.6} avg_acc {:.6}", report.map, report.avg_acc);
    Ok(())
}

pub fn fuse(paths: &[PathBuf], out: &Path, allow_duplicates: bool, l2_per_bank: bool) -> Result<(), CliError> {
    let banks = paths.iter().map(read_bank).collect::<Result<Vec<_>, _>>()?;
    let spec = FusionSpec::new(banks)
        .allow_duplicates(allow_duplicates)
        .l2_per_bank(l2_per_bank);
    let fused = fuse_banks(&spec)?;
    write_bank(&fused, out)?;
    eprintln!("fused {} records as {}", fused.len(), fused.backbone_id());
    println!("dim {}", fused.dim());
    Ok(())
}

pub fn project(bank_path: &Path, out: &Path, sample: Option<usize>, args: &ConfigArgs) -> Result<(), CliError> {
    let run = load_config(args)?;
    let mut bank = read_bank(bank_path)?;
    if let Some(n) = sample {
        bank = bank.stratified_sample(n, run.projection.seed)?;
    }
    eprintln!(
        "projecting {} records (k={}, metric={}, epochs={})",
        bank.len(),
        run.projection.n_neighbors,
        run.projection.metric,
        run.projection.n_epochs
    );
    let projection = umap_project(&bank, &run.projection)?;
    projection.write_csv(out)?;
    Ok(())
}
