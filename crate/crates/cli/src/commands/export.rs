use std::fmt::Write as _;
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use kgcp_core::io::{label_paths, load_labels, load_model, read_header, write_atomic, write_model};
use kgcp_core::{Matrix, Precision, Vocabulary};

use crate::args::{ExportArgs, ExportFormat};
use crate::{CmdResult, Failure};

pub fn run(args: ExportArgs) -> CmdResult {
    let header = read_header(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let loaded = load_model::<f64>(&args.model, true)?;
    let (ent_src, rel_src) = label_paths(&args.model);
    let labels = |p: &Path| if p.exists() { load_labels(p).map(Some) } else { Ok(None) };
    let entities = labels(&ent_src)?;
    let relations = labels(&rel_src)?;

    match args.format {
        ExportFormat::Tsv => {
            if args.precision.is_some() {
                return Err(Failure::usage("--precision applies to --format kge only"));
            }
            std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            let width = header.float_width;
            for (name, matrix, vocab) in [
                ("entities.tsv", &loaded.model.entities, &entities),
                ("relations.tsv", &loaded.model.relations, &relations),
            ] {
                let path = args.out.join(name);
                refuse_overwrite(&path, args.force)?;
                let text = tsv(matrix, vocab.as_ref(), width);
                write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
        }
        ExportFormat::Kge => {
            refuse_overwrite(&args.out, args.force)?;
            let precision = args.precision.map_or(
                if header.float_width == 4 { Precision::F32 } else { Precision::F64 },
                Precision::from,
            );
            let digest = match precision {
                Precision::F32 => write_model(
                    &loaded.model.cast::<f32>(),
                    header.seed,
                    header.config_digest,
                    &args.out,
                )?,
                Precision::F64 => write_model(&loaded.model, header.seed, header.config_digest, &args.out)?,
            };
            let (ent_dst, rel_dst) = label_paths(&args.out);
            for (src, dst) in [(&ent_src, &ent_dst), (&rel_src, &rel_dst)] {
                if src.exists() {
                    std::fs::copy(src, dst).with_context(|| format!("copying {}", src.display()))?;
                }
            }
            println!("{} sha256 {digest}", args.out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<(), Failure> {
    if path.exists() && !force {
        return Err(Failure::usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

/// One row per line: label (or id when labels are missing), then the
/// values. `f32` artifacts print at `f32` precision so the text round-trips.
fn tsv(matrix: &Matrix<f64>, vocab: Option<&Vocabulary>, width: usize) -> String {
    let mut out = String::new();
    for i in 0..matrix.rows() {
        match vocab.and_then(|v| v.label(i as u32)) {
            Some(label) => out.push_str(label),
            None => {
                let _ = write!(out, "{i}");
            }
        }
        for &v in matrix.row(i) {
            if width == 4 {
                let _ = write!(out, "\t{}", v as f32);
            } else {
                let _ = write!(out, "\t{v}");
            }
        }
        out.push('\n');
    }
    out
}

