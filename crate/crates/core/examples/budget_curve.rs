//! Weighted coverage as the budget grows, greedy against random.

use calib_cover::outlier::outlier_model;
use calib_cover::{build_coverage_matrix, generate_pool, greedy_select, objective_value, select_random, PoolConfig};

fn main() -> calib_cover::Result<()> {
    let cfg = PoolConfig { seed: 5, ..PoolConfig::preset("redundant")? };
    let profile = generate_pool(&cfg)?;
    let cov = build_coverage_matrix(&profile, &outlier_model(&profile, 6.0)?)?;
    let total = cov.total_weight();

    // greedy prefixes are the smaller greedy runs; prefixes of one random
    // draw are uniform samples too, so both curves are nested
    let full = greedy_select(&cov, 256);
    let random = select_random(profile.num_samples, 256, cfg.seed).selected;
    println!("{:>5} {:>9} {:>9}", "K", "greedy", "random");
    for k in [16, 32, 64, 128, 256] {
        let g = objective_value(&full.selected[..k], &cov)?.1;
        let r = objective_value(&random[..k], &cov)?.1;
        println!("{k:>5} {:>8.2}% {:>8.2}%", 100.0 * g / total, 100.0 * r / total);
    }
    Ok(())
}
