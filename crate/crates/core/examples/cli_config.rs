//! Load a JSON run configuration, validate its plan, and run two seeds into a temporary directory.

use vrpl::cli::{format_report, run_config, validate_config, Overrides, RunConfig};

fn main() -> vrpl::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/examples/configs/regression_est3.json"
        )
        .into()
    });
    let cfg = RunConfig::load(std::path::Path::new(&path))?;
    let (plan, report) = validate_config(&cfg)?;
    println!(
        "τ = {}, K = {}, batches = {:?}",
        plan.tau_schedule.tau_max(),
        plan.k,
        plan.batch_plan
    );
    print!("{}", format_report(&report));
    let out = std::env::temp_dir().join("vrpl-cli-config-example");
    let overrides = Overrides {
        seeds: vec![0, 1],
        out: Some(out.clone()),
        no_stationarity: true,
    };
    let summary = run_config(&cfg, &overrides)?;
    for r in &summary.runs {
        println!("{r:?}");
    }
    println!("outputs in {}", out.display());
    Ok(())
}
