//! Clipping-surrogate loss of a selection against the missed-weight bound,
//! in both deficit modes.

use calib_cover::outlier::outlier_model;
use calib_cover::{
    build_coverage_matrix, check_surrogate_bound, generate_pool, greedy_select, select_random, simulate_deficits,
    surrogate_loss, DeficitMode, PoolConfig,
};

fn main() -> calib_cover::Result<()> {
    let profile = generate_pool(&PoolConfig { seed: 11, ..PoolConfig::default() })?;
    let model = outlier_model(&profile, 6.0)?;
    let cov = build_coverage_matrix(&profile, &model)?;

    let selections = [
        ("greedy K=16", greedy_select(&cov, 16).selected),
        ("random K=16", select_random(profile.num_samples, 16, 11).selected),
    ];
    for (name, sel) in &selections {
        for mode in [DeficitMode::WorstCase, DeficitMode::UniformFraction] {
            let deficits = simulate_deficits(&model, &cov, sel, 42, mode)?;
            let report = surrogate_loss(&deficits, &model)?;
            let slack = check_surrogate_bound(&report, &model, &cov, sel)?;
            println!(
                "{name:<12} {mode:<16} L_sur {:>10.3} bound {:>10.3} slack {slack:.3}",
                report.l_sur, report.bound
            );
        }
    }
    Ok(())
}
