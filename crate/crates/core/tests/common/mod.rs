#![allow(dead_code)]

use calib_cover::coverage::CoverageMatrix;
use calib_cover::{compute_thresholds, ActivationProfile};

/// Rows of the four-channel hand example; weights [4, 3, 2, 1].
pub const T1_ROWS: [&[u32]; 5] = [&[0], &[1, 2], &[0, 3], &[2], &[]];
pub const T1_WEIGHTS: [f64; 4] = [4.0, 3.0, 2.0, 1.0];

pub fn t1_coverage() -> CoverageMatrix {
    CoverageMatrix::from_rows(
        T1_ROWS.iter().map(|r| r.to_vec()).collect(),
        T1_WEIGHTS.to_vec(),
        vec![0; 4],
        1,
    )
    .unwrap()
}

/// A one-layer profile whose outlier model at k = 6 reproduces the hand
/// example: channels 0..4 fire at 1.0 on the T1 rows, 96 quiet channels keep
/// the threshold well below 1, and column norms are set so each weight lands
/// on its target up to f32 rounding.
pub fn t1_profile() -> ActivationProfile {
    let n = T1_ROWS.len();
    let d = 100;
    let mut mags = vec![0.0f32; d * n];
    for (s, row) in T1_ROWS.iter().enumerate() {
        for &c in row.iter() {
            mags[c as usize * n + s] = 1.0;
        }
    }
    let bare = ActivationProfile::new(n, vec![d], vec![mags.clone()], None, None).unwrap();
    let tau = compute_thresholds(&bare, 6.0).unwrap()[0].tau;
    assert!(tau < 1.0);
    let mut norms = vec![1.0f32; d];
    for (c, w) in T1_WEIGHTS.iter().enumerate() {
        norms[c] = (w * tau * tau) as f32;
    }
    ActivationProfile::new(n, vec![d], vec![mags], Some(vec![norms]), None).unwrap()
}

pub fn encode(profile: &ActivationProfile) -> Vec<u8> {
    let mut buf = Vec::new();
    calib_cover::write_profile(profile, &mut buf).unwrap();
    buf
}
