//! Write a profile to CCAP bytes, read it back, and show what a truncated
//! file looks like to the reader.

use calib_cover::ccap::{decode_profile, encode_profile};
use calib_cover::{validate_profile, ActivationProfile};

fn main() -> calib_cover::Result<()> {
    // 2 samples, layers of width 3 and 2, channel-major magnitudes
    let profile = ActivationProfile::new(
        2,
        vec![3, 2],
        vec![vec![0.1, 0.2, 9.0, 0.3, 0.2, 0.1], vec![1.0, 1.5, 0.5, 7.5]],
        Some(vec![vec![1.0, 0.8, 1.2], vec![0.9, 1.1]]),
        Some(vec![12.5, 30.0]),
    )?;

    let bytes = encode_profile(&profile)?;
    println!("encoded {} bytes", bytes.len());
    let back = decode_profile(&bytes)?;
    assert_eq!(back, profile);
    println!("round trip ok, {} diagnostics", validate_profile(&back).len());

    match decode_profile(&bytes[..bytes.len() - 3]) {
        Ok(_) => println!("unexpected: truncated file decoded"),
        Err(e) => println!("truncated file: {e}"),
    }

    let bad = ActivationProfile {
        perplexities: Some(vec![12.5]),
        ..profile
    };
    for d in validate_profile(&bad) {
        println!("diagnostic: {d}");
    }
    Ok(())
}
