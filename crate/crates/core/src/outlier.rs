//! Per-layer outlier thresholds, the outlier channel set and channel weights.
//!
//! For layer `l` the threshold is `tau = mu + k * sigma`, where `mu` and
//! `sigma` are the mean and population standard deviation of all `d_l × N`
//! magnitudes of the layer taken jointly. A channel is an outlier when its
//! pool maximum strictly exceeds `tau`, and its weight is
//! `(o_ref / tau)^2 * ||W_{:,c}||_2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::ActivationProfile;

/// Default threshold multiplier.
pub const DEFAULT_K_SIGMA: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerThreshold {
    pub k_sigma: f64,
    pub mean: f64,
    pub std: f64,
    pub tau: f64,
    /// All entries of the layer are equal, so no channel can exceed `tau`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierChannel {
    pub layer: usize,
    pub channel: usize,
    pub ref_magnitude: f64,
    pub column_norm: f64,
    pub weight: f64,
}

impl OutlierChannel {
    /// `o_ref / tau`, the worst-case normalized clipping deficit.
    pub fn normalized_magnitude(&self, tau: f64) -> f64 {
        self.ref_magnitude / tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierModel {
    pub thresholds: Vec<LayerThreshold>,
    /// Sorted by `(layer, channel)`; position is the global channel index.
    pub channels: Vec<OutlierChannel>,
    pub layer_dims: Vec<usize>,
    pub num_samples: usize,
}

/// Thresholds at a single multiplier for every layer.
pub fn compute_thresholds(profile: &ActivationProfile, k_sigma: f64) -> Result<Vec<LayerThreshold>> {
    compute_layer_thresholds(profile, &vec![k_sigma; profile.num_layers()])
}

/// Thresholds with one multiplier per layer.
pub fn compute_layer_thresholds(profile: &ActivationProfile, k_sigmas: &[f64]) -> Result<Vec<LayerThreshold>> {
    if k_sigmas.len() != profile.num_layers() {
        return Err(Error::ShapeMismatch(format!(
            "{} multipliers for {} layers",
            k_sigmas.len(),
            profile.num_layers()
        )));
    }
    if let Some(k) = k_sigmas.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
        return Err(Error::InvalidParameter(format!("k_sigma must be positive and finite, got {k}")));
    }
    Ok(profile
        .magnitudes
        .iter()
        .zip(k_sigmas)
        .map(|(block, &k_sigma)| {
            let (mean, std) = mean_and_population_std(block);
            let degenerate = block.iter().all(|&v| v == block[0]);
            LayerThreshold {
                k_sigma,
                mean,
                std,
                tau: mean + k_sigma * std,
                degenerate,
            }
        })
        .collect())
}

fn mean_and_population_std(values: &[f32]) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / count;
    let var = values
        .iter()
        .map(|&v| {
            let d = f64::from(v) - mean;
            d * d
        })
        .sum::<f64>()
        / count;
    (mean, var.sqrt())
}

/// Identifies outlier channels and their weights under the given thresholds.
pub fn build_outlier_model(profile: &ActivationProfile, thresholds: &[LayerThreshold]) -> Result<OutlierModel> {
    if thresholds.len() != profile.num_layers() {
        return Err(Error::ShapeMismatch(format!(
            "{} thresholds for {} layers",
            thresholds.len(),
            profile.num_layers()
        )));
    }
    let mut channels = Vec::new();
    for (layer, (&dim, thr)) in profile.layer_dims.iter().zip(thresholds).enumerate() {
        for channel in 0..dim {
            let peak = profile
                .channel(layer, channel)
                .iter()
                .fold(0.0f32, |acc, &v| acc.max(v));
            let ref_magnitude = f64::from(peak);
            if ref_magnitude > thr.tau {
                let column_norm = profile.column_norm(layer, channel);
                channels.push(OutlierChannel {
                    layer,
                    channel,
                    ref_magnitude,
                    column_norm,
                    weight: channel_weight(ref_magnitude, thr.tau, column_norm),
                });
            }
        }
    }
    Ok(OutlierModel {
        thresholds: thresholds.to_vec(),
        channels,
        layer_dims: profile.layer_dims.clone(),
        num_samples: profile.num_samples,
    })
}

/// `(o_ref / tau)^2 * norm`, evaluated as `(r * r) * norm`.
pub fn channel_weight(ref_magnitude: f64, tau: f64, column_norm: f64) -> f64 {
    let ratio = ref_magnitude / tau;
    (ratio * ratio) * column_norm
}

/// Convenience: thresholds at `k_sigma` followed by [`build_outlier_model`].
pub fn outlier_model(profile: &ActivationProfile, k_sigma: f64) -> Result<OutlierModel> {
    build_outlier_model(profile, &compute_thresholds(profile, k_sigma)?)
}

impl OutlierModel {
    pub fn num_layers(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.weight).collect()
    }

    pub fn total_weight(&self) -> f64 {
        crate::coverage::sum(self.channels.iter().map(|c| c.weight))
    }

    pub fn outliers_per_layer(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_layers()];
        for c in &self.channels {
            counts[c.layer] += 1;
        }
        counts
    }

    pub fn tau(&self, layer: usize) -> f64 {
        self.thresholds[layer].tau
    }

    /// Global index of `(layer, channel)` if it is an outlier.
    pub fn index_of(&self, layer: usize, channel: usize) -> Option<usize> {
        self.channels
            .binary_search_by(|c| (c.layer, c.channel).cmp(&(layer, channel)))
            .ok()
    }

    /// Fraction of all (layer, channel) pairs that are outliers.
    pub fn outlier_fraction(&self) -> f64 {
        self.channels.len() as f64 / self.layer_dims.iter().sum::<usize>() as f64
    }

    pub fn summary(&self) -> ModelSummary {
        let ks: Vec<f64> = self.thresholds.iter().map(|t| t.k_sigma).collect();
        let k_sigma = if ks.windows(2).all(|w| w[0] == w[1]) {
            serde_json::json!(ks.first().copied().unwrap_or(DEFAULT_K_SIGMA))
        } else {
            serde_json::json!(ks)
        };
        let counts = self.outliers_per_layer();
        ModelSummary {
            k_sigma,
            layers: self
                .thresholds
                .iter()
                .zip(counts)
                .map(|(t, outliers)| LayerSummary {
                    tau: t.tau,
                    mu: t.mean,
                    sigma: t.std,
                    outliers,
                })
                .collect(),
            total_channels: self.channels.len(),
            total_weight: self.total_weight(),
        }
    }
}

/// JSON report form of an [`OutlierModel`].
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    /// A number when every layer shares one multiplier, else a per-layer array.
    pub k_sigma: serde_json::Value,
    pub layers: Vec<LayerSummary>,
    pub total_channels: usize,
    pub total_weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub tau: f64,
    pub mu: f64,
    pub sigma: f64,
    pub outliers: usize,
}
