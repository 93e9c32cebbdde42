//! Sweep theta and the insignificant-position mask probability on the smoke
//! configuration and print plot-ready rows.
//!
//! cargo run --release --example sweep

use emit::eval::{parse_grid, prepare_data, run_sweep, RunConfig};

fn main() -> emit::Result<()> {
    env_logger::init();
    let cfg = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/smoke.json"))?;
    let data = prepare_data(&cfg)?;
    let thetas = parse_grid("0.1,0.01,0.001")?;
    let alphas = parse_grid("0:1:0.25")?;
    let rows = run_sweep(&cfg, &data, &thetas, &alphas, &[0])?;
    println!("{:>7} {:>6} {:>8} {:>8} {:>10}", "theta", "alpha", "ROC-AUC", "PR-AUC", "min(Re,Pr)");
    for r in &rows {
        println!(
            "{:>7} {:>6} {:>8.4} {:>8.4} {:>10.4}",
            r.theta, r.alpha_mask, r.roc_auc, r.pr_auc, r.min_re_pr
        );
    }
    Ok(())
}
