//! Greedy against the baselines on a pool where many samples repeat the
//! same outlier pattern.

use calib_cover::outlier::outlier_model;
use calib_cover::{
    build_coverage_matrix, coverage_report, generate_pool, greedy_select, select_max_actvar, select_max_ppl,
    select_random, select_stratified, ActVarScore, PoolConfig,
};

fn main() -> calib_cover::Result<()> {
    let cfg = PoolConfig { seed: 3, ..PoolConfig::preset("redundant")? };
    let profile = generate_pool(&cfg)?;
    let model = outlier_model(&profile, 6.0)?;
    let cov = build_coverage_matrix(&profile, &model)?;
    let k = 128;
    println!("N={} |C|={} K={k}", profile.num_samples, cov.num_channels());

    let runs = [
        ("greedy", greedy_select(&cov, k)),
        ("random", select_random(profile.num_samples, k, cfg.seed)),
        ("max_ppl", select_max_ppl(&profile, k)?),
        ("max_actvar", select_max_actvar(&profile, k, ActVarScore::AllChannels)),
        ("stratified", select_stratified(&profile, k, 10, cfg.seed)?),
    ];
    println!("{:<12} {:>9} {:>9} {:>8}", "method", "channels", "weighted", "jaccard");
    for (name, sel) in &runs {
        let r = coverage_report(&sel.selected, &cov)?;
        println!(
            "{name:<12} {:>8.2}% {:>8.2}% {:>8.4}",
            r.channel_coverage_pct, r.weighted_coverage_pct, r.mean_pairwise_jaccard
        );
    }
    Ok(())
}
