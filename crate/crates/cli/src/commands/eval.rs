use std::process::ExitCode;

use anyhow::{anyhow, Context};
use kgcp_core::eval::evaluate;
use kgcp_core::io::{label_paths, load_dataset_dir, load_labels, load_model};

use crate::args::EvalArgs;
use crate::CmdResult;

/// Ranks a split with a trained artifact. Low metrics are a result, not an
/// error: the exit code is non-zero only when something fails.
pub fn run(args: EvalArgs) -> CmdResult {
    // Widening f32 → f64 is exact and scoring runs in f64 either way.
    let loaded = load_model::<f64>(&args.model, true).with_context(|| format!("loading {}", args.model.display()))?;
    let data = load_dataset_dir(&args.data, args.policy.into())
        .with_context(|| format!("loading {}", args.data.display()))?;

    let (ent_path, rel_path) = label_paths(&args.model);
    for (kind, path, vocab) in [("entity", &ent_path, &data.entities), ("relation", &rel_path, &data.relations)] {
        let model_vocab = load_labels(path).with_context(|| format!("reading {kind} labels beside the model"))?;
        if model_vocab.digest() != vocab.digest() {
            return Err(anyhow!(
                "{kind} vocabulary mismatch: model labels {} have digest {}, dataset has {}",
                path.display(),
                model_vocab.digest(),
                vocab.digest()
            )
            .into());
        }
    }

    let split = if args.valid { &data.valid } else { &data.test };
    let known = data.known();
    let report = evaluate(&loaded.model, split, &known, args.setting(), args.directions.into())?;
    if args.json_lines {
        println!("{}", report.to_json_line());
    } else {
        print!("{}", report.to_text());
    }
    Ok(ExitCode::SUCCESS)
}
