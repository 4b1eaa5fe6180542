//! Per-layer threshold refinement on a pool with one dominant layer.

use calib_cover::outlier::outlier_model;
use calib_cover::{adaptive_refine, build_coverage_matrix, generate_pool, select_random, simulate_deficits};
use calib_cover::{surrogate_loss, DeficitMode, PoolConfig};

fn main() -> calib_cover::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(2), |s| s.parse()).unwrap_or(2);
    let cfg = PoolConfig { seed, ..PoolConfig::preset("dominant")? };
    let dominant = cfg.dominant().unwrap();
    let profile = generate_pool(&cfg)?;

    let model = outlier_model(&profile, 6.0)?;
    let cov = build_coverage_matrix(&profile, &model)?;
    let random = select_random(profile.num_samples, 32, cfg.seed).selected;
    let report = surrogate_loss(&simulate_deficits(&model, &cov, &random, 0, DeficitMode::WorstCase)?, &model)?;
    println!("dominant layer {dominant}, random K=32 error shares:");
    for l in &report.per_layer {
        println!("  layer {}: {:.1}%", l.layer, 100.0 * l.share);
    }

    let out = adaptive_refine(&profile, 6.0, 4.0, 32, 0)?;
    println!("flagged {:?}, k per layer {:?}", out.flagged, out.k_sigmas);
    // each round reports against its own thresholds; compare both
    // selections under the refined ones
    let refined = &out.refined;
    let l_sur = |sel: &[usize]| -> calib_cover::Result<f64> {
        let d = simulate_deficits(&refined.model, &refined.coverage, sel, 0, DeficitMode::WorstCase)?;
        Ok(surrogate_loss(&d, &refined.model)?.l_sur)
    };
    println!(
        "worst-case L_sur under refined thresholds: initial selection {:.2}, refined selection {:.2}",
        l_sur(&out.initial.selection.selected)?,
        l_sur(&refined.selection.selected)?
    );
    Ok(())
}
