use std::process::ExitCode;

use anyhow::Context;
use kgcp_core::io::load_dataset_dir;

use crate::args::StatsArgs;
use crate::CmdResult;

pub fn run(args: StatsArgs) -> CmdResult {
    let data = load_dataset_dir(&args.data, args.policy.into())
        .with_context(|| format!("loading {}", args.data.display()))?;
    let stats = data.stats();
    if args.json_lines {
        println!("{}", serde_json::to_string(&stats).context("serializing stats")?);
    } else {
        print!("{}", stats.to_text());
    }
    Ok(ExitCode::SUCCESS)
}
