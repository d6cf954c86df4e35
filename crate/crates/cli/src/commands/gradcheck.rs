use std::process::ExitCode;

use kgcp_core::oracle;
use kgcp_core::LossFamily;

use crate::args::GradcheckArgs;
use crate::{CmdResult, Failure, EXIT_TOLERANCE};

/// Finite differences vs. analytic gradients, relative.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Batched kernel vs. dense oracle, absolute.
pub const DENSE_TOLERANCE: f64 = 1e-10;
/// Largest tensor the check will materialize densely.
const MAX_ENTRIES: usize = 100_000;

fn parse_dims(s: &str) -> Result<(usize, usize), Failure> {
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::usage(format!("--dims `{s}`: expected ENTITIESxRELATIONSxENTITIES")))?;
    match parts[..] {
        [a, r, c] if a == c && a >= 1 && r >= 1 => Ok((a, r)),
        [a, _, c] if a != c => Err(Failure::usage(format!(
            "--dims `{s}`: subject and object axes share one entity matrix and must be equal"
        ))),
        _ => Err(Failure::usage(format!("--dims `{s}`: expected three positive sizes"))),
    }
}

pub fn run(args: GradcheckArgs) -> CmdResult {
    let (n_e, n_r) = parse_dims(&args.dims)?;
    if n_e * n_r * n_e > MAX_ENTRIES {
        return Err(Failure::usage(format!("--dims {}: more than {MAX_ENTRIES} tensor entries", args.dims)));
    }
    if args.rank < 1 {
        return Err(Failure::usage("--rank must be >= 1"));
    }
    if !(args.density > 0.0 && args.density <= 1.0) {
        return Err(Failure::usage("--density must lie in (0, 1]"));
    }
    let family: LossFamily = args.family.into();
    let inst = oracle::random_instance(n_e, n_r, args.rank, args.density, family, args.seed);
    let check = oracle::gradient_check(&inst, family);
    let mut pass = check.max_rel_fd < FD_TOLERANCE && check.max_abs_dense < DENSE_TOLERANCE && check.rows_match;

    println!("dims: {n_e}x{n_r}x{n_e}");
    println!("rank: {}", args.rank);
    println!("family: {family:?}");
    println!("observed: {}", check.n_observed);
    println!("max_rel_err_fd: {:.3e}", check.max_rel_fd);
    println!("max_abs_err_dense: {:.3e}", check.max_abs_dense);
    println!("touched_rows_match: {}", check.rows_match);
    if family == LossFamily::Gaussian {
        let rel = oracle::gaussian_reduction_error(n_e, n_r, args.rank, args.seed);
        println!("max_rel_err_cp_residual: {rel:.3e}");
        pass &= rel < DENSE_TOLERANCE;
    }
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(EXIT_TOLERANCE) })
}
