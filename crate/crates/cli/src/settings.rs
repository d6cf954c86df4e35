//! Resolving a [`TrainConfig`] from file, `--set` pairs and flags.

use kgcp_core::trainer::ConfigErrors;
use kgcp_core::TrainConfig;

use crate::args::ConfigArgs;
use crate::Failure;

/// Layers the config sources over `base` and validates the result. Every
/// problem is reported at once.
pub fn resolve(args: &ConfigArgs, base: TrainConfig) -> Result<TrainConfig, Failure> {
    let mut cfg = base;
    let mut errors = Vec::new();
    if let Some(path) = &args.config {
        match std::fs::read_to_string(path) {
            Ok(text) => {
                if let Err(ConfigErrors(e)) = cfg.apply_text(&text) {
                    errors.extend(e.into_iter().map(|m| format!("{}: {m}", path.display())));
                }
            }
            Err(e) => errors.push(format!("{}: {e}", path.display())),
        }
    }
    for pair in &args.set {
        match pair.split_once('=') {
            Some((k, v)) => {
                if let Err(e) = cfg.set(k, v) {
                    errors.push(format!("--set {pair}: {e}"));
                }
            }
            None => errors.push(format!("--set {pair}: expected KEY=VALUE")),
        }
    }
    apply_flags(args, &mut cfg);
    if let Err(ConfigErrors(e)) = cfg.validate() {
        errors.extend(e);
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Failure::Usage(ConfigErrors(errors).into()))
    }
}

fn apply_flags(args: &ConfigArgs, cfg: &mut TrainConfig) {
    if let Some(v) = args.rank {
        cfg.rank = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.n_negatives {
        cfg.n_negatives = v;
    }
    if let Some(v) = args.l2_coeff {
        cfg.l2_coeff = v;
    }
    if let Some(v) = args.epochs {
        cfg.n_epochs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.precision {
        cfg.precision = v.into();
    }
    if args.deterministic {
        cfg.deterministic = true;
    }
    if args.parallel {
        cfg.deterministic = false;
    }
    if args.filtered_negatives {
        cfg.filtered_negatives = true;
    }
}
