//! Generate a synthetic candidate pool and look at its outlier structure.
//!
//! Pass a preset name (`small`, `medium`, `redundant`, `dominant`) as the
//! first argument; the default is `small`.

use calib_cover::outlier::outlier_model;
use calib_cover::synthgen::planted_channels;
use calib_cover::{generate_pool, PoolConfig};

fn main() -> calib_cover::Result<()> {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "small".into());
    let cfg = PoolConfig { seed: 7, ..PoolConfig::preset(&preset)? };
    let profile = generate_pool(&cfg)?;
    let model = outlier_model(&profile, 6.0)?;

    println!("preset {preset}: N={} layers={:?}", profile.num_samples, profile.layer_dims);
    println!(
        "planted {} channels, detected {} at k=6 ({:.2}% of all channels)",
        planted_channels(&cfg)?.len(),
        model.channels.len(),
        100.0 * model.outlier_fraction()
    );
    for (l, (t, count)) in model.thresholds.iter().zip(model.outliers_per_layer()).enumerate() {
        println!("  layer {l}: mu {:.3} sigma {:.3} tau {:.3} outliers {count}", t.mean, t.std, t.tau);
    }
    println!("{}", serde_json::to_string_pretty(&model.summary())?);
    Ok(())
}
