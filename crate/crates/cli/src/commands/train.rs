use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use kgcp_core::eval::{evaluate, Directions, EvalReport, Setting};
use kgcp_core::io::{label_paths, load_dataset_dir, save_labels, save_model, DatasetBundle, UnseenPolicy};
use kgcp_core::{Precision, Real, TrainConfig, Trainer};

use crate::args::TrainArgs;
use crate::manifest::{unix_now, ArtifactRecord, DatasetRecord, Metrics, RunManifest};
use crate::{settings, CmdResult, Failure};

pub const MODEL_FILE: &str = "model.kge";
pub const LAST_FILE: &str = "last.kge";
pub const BEST_FILE: &str = "best.kge";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn run(args: TrainArgs) -> CmdResult {
    let recorded = match &args.from_manifest {
        Some(p) => Some(RunManifest::load(p).map_err(Failure::Usage)?),
        None => None,
    };
    let base = recorded.as_ref().map_or_else(TrainConfig::default, |m| m.config.clone());
    let config = settings::resolve(&args.config, base)?;
    let data_dir = match (&args.data, &recorded) {
        (Some(d), _) => d.clone(),
        (None, Some(m)) => m.dataset.dir.clone(),
        (None, None) => return Err(Failure::usage("--data is required")),
    };
    let policy: UnseenPolicy = match &recorded {
        Some(m) => m.dataset.policy.parse().map_err(Failure::usage)?,
        None => args.policy.into(),
    };
    if recorded.is_some() && !config.deterministic {
        log::warn!("reproducing a manifest in parallel mode; the artifact digest may differ");
    }
    prepare_out(&args.out, args.force)?;

    let data = load_dataset_dir(&data_dir, policy).with_context(|| format!("loading {}", data_dir.display()))?;
    if let Some(m) = &recorded {
        let now = data.provenance.clone().map(|p| p.digest);
        if now != m.dataset.digests {
            return Err(anyhow!("dataset files differ from those recorded in the manifest").into());
        }
    }
    let record = DatasetRecord::new(
        &data_dir,
        &policy.to_string(),
        &data.provenance,
        &data.stats(),
        (data.entities.digest(), data.relations.digest()),
    );
    let manifest = match config.precision {
        Precision::F32 => train_typed::<f32>(&args, config, &data, record)?,
        Precision::F64 => train_typed::<f64>(&args, config, &data, record)?,
    };
    manifest.save(&args.out.join(MANIFEST_FILE))?;

    if args.json_lines {
        println!("{}", serde_json::to_string(&manifest).context("serializing manifest")?);
    } else {
        println!("artifact: {}", manifest.artifact.path.display());
        println!("sha256: {}", manifest.artifact.sha256);
        println!("epochs: {}", manifest.epochs_completed);
        if let Some(loss) = manifest.metrics.final_mean_loss {
            println!("final_mean_loss: {loss}");
        }
        if let Some(mrr) = manifest.metrics.best_valid_mrr {
            println!("best_valid_mrr: {mrr}");
        }
    }
    if let Some(m) = &recorded {
        if m.artifact.sha256 != manifest.artifact.sha256 {
            return Err(anyhow!(
                "reproduced artifact {} does not match the manifest's {}",
                manifest.artifact.sha256,
                m.artifact.sha256
            )
            .into());
        }
        eprintln!("artifact digest matches the manifest");
    }
    Ok(ExitCode::SUCCESS)
}

/// Refuses to write into a non-empty directory unless forced.
fn prepare_out(out: &Path, force: bool) -> Result<(), Failure> {
    if out.exists() {
        let non_empty = std::fs::read_dir(out)
            .with_context(|| format!("reading {}", out.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Failure::usage(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
    }
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating {}", out.display()))
        .map_err(Failure::Runtime)
}

fn emit_eval(label: &str, epoch: usize, report: &EvalReport, json: bool) {
    if json {
        let line = serde_json::json!({ "event": label, "epoch": epoch, "report": report });
        eprintln!("{line}");
    } else {
        eprintln!(
            "{label} epoch={epoch} mrr={:.4} hits1={:.4} hits3={:.4} hits10={:.4}",
            report.mrr, report.hits1, report.hits3, report.hits10
        );
    }
}

fn train_typed<T: Real>(
    args: &TrainArgs,
    config: TrainConfig,
    data: &DatasetBundle,
    dataset: DatasetRecord,
) -> anyhow::Result<RunManifest> {
    let started = unix_now();
    let out = &args.out;
    let known = data.known();
    let mut trainer = Trainer::<T>::new(data.train.n_entities(), data.train.n_relations(), config.clone())?;
    let mut metrics = Metrics::default();
    let mut peak = 0;
    let validate = args.validate_every > 0 && !data.valid.is_empty();
    if args.validate_every > 0 && data.valid.is_empty() {
        log::warn!("validation split is empty; --validate-every ignored");
    }

    for epoch in 0..config.n_epochs {
        let telemetry = trainer.run_epoch(&data.train).map_err(|e| {
            let last = out.join(LAST_FILE);
            if last.exists() {
                anyhow!("training aborted at epoch {epoch}: {e}; last good checkpoint kept at {}", last.display())
            } else {
                anyhow!("training aborted at epoch {epoch}: {e}")
            }
        })?;
        peak = peak.max(telemetry.peak_transient_bytes);
        if args.json_lines {
            eprintln!("{}", serde_json::to_string(&telemetry)?);
        } else {
            eprintln!("{}", telemetry.to_text());
        }
        metrics.final_loss = Some(telemetry.loss);
        metrics.final_mean_loss = Some(telemetry.mean_loss);
        save_model(trainer.model(), &config, &out.join(LAST_FILE))?;

        if validate && (epoch + 1) % args.validate_every == 0 {
            let report = evaluate(trainer.model(), &data.valid, &known, Setting::Filtered, Directions::Both)?;
            emit_eval("valid", epoch, &report, args.json_lines);
            if metrics.best_valid_mrr.is_none_or(|best| report.mrr > best) {
                metrics.best_valid_mrr = Some(report.mrr);
                metrics.best_epoch = Some(epoch);
                save_model(trainer.model(), &config, &out.join(BEST_FILE))?;
            }
            metrics.valid = Some(Metrics::report(&report));
        }
    }

    let model_path = out.join(MODEL_FILE);
    let sha256 = save_model(trainer.model(), &config, &model_path)?;
    let (ent_path, rel_path) = label_paths(&model_path);
    save_labels(&data.entities, &ent_path)?;
    save_labels(&data.relations, &rel_path)?;

    if args.eval_test && !data.test.is_empty() {
        let report = evaluate(trainer.model(), &data.test, &known, Setting::Filtered, Directions::Both)?;
        emit_eval("test", trainer.epoch(), &report, args.json_lines);
        metrics.test = Some(Metrics::report(&report));
    }

    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        config_sha256: hex_digest(&config),
        seed: config.seed,
        config,
        dataset,
        started_unix: started,
        finished_unix: unix_now(),
        epochs_completed: trainer.epoch(),
        untrained: trainer.epoch() == 0,
        peak_transient_bytes: peak,
        metrics,
        artifact: ArtifactRecord { path: model_path, sha256 },
    })
}

fn hex_digest(config: &TrainConfig) -> String {
    config.digest().iter().map(|b| format!("{b:02x}")).collect()
}
