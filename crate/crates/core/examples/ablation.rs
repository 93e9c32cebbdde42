//! Compare the six masking variants over several seeds on the smoke
//! configuration and print the summary table.
//!
//! cargo run --release --example ablation -- 3

use emit::eval::{prepare_data, run_ablation, RunConfig};
use emit::masking::MaskVariant;

fn main() -> emit::Result<()> {
    env_logger::init();
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let cfg = RunConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/smoke.json"))?;
    let data = prepare_data(&cfg)?;
    let seeds: Vec<u64> = (0..seeds).collect();
    let report = run_ablation(&cfg, &data, &MaskVariant::ALL, &seeds)?;
    print!("{}", report.table());
    Ok(())
}
