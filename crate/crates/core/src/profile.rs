//! Activation-profile data model.
//!
//! A profile holds, for every layer `l`, a dense `d_l × N` matrix of
//! per-sample activation magnitudes: entry `(c, s)` is the maximum absolute
//! activation of channel `c` over all token positions of sample `s`. Storage
//! is channel-major, so the `N` magnitudes of one channel are contiguous.
//!
//! Optional blocks carry weight-column norms (treated as `1.0` when absent)
//! and per-sample full-precision perplexities.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationProfile {
    pub num_samples: usize,
    pub layer_dims: Vec<usize>,
    /// One `layer_dims[l] * num_samples` buffer per layer, channel-major.
    pub magnitudes: Vec<Vec<f32>>,
    /// One `layer_dims[l]` buffer per layer when present.
    pub column_norms: Option<Vec<Vec<f32>>>,
    pub perplexities: Option<Vec<f32>>,
}

/// A single invariant violation found by [`validate_profile`].
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NoSamples,
    NoLayers,
    EmptyLayer { layer: usize },
    MagnitudeLayerCount { expected: usize, found: usize },
    MagnitudeShape { layer: usize, expected: usize, found: usize },
    NonFiniteMagnitude { layer: usize, channel: usize, sample: usize },
    NegativeMagnitude { layer: usize, channel: usize, sample: usize },
    ColumnNormLayerCount { expected: usize, found: usize },
    ColumnNormShape { layer: usize, expected: usize, found: usize },
    InvalidColumnNorm { layer: usize, channel: usize },
    PerplexityLength { expected: usize, found: usize },
    InvalidPerplexity { sample: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Diagnostic::*;
        match *self {
            NoSamples => write!(f, "pool has zero samples"),
            NoLayers => write!(f, "profile has no layers"),
            EmptyLayer { layer } => write!(f, "layer {layer} has zero channels"),
            MagnitudeLayerCount { expected, found } => {
                write!(f, "expected {expected} magnitude blocks, found {found}")
            }
            MagnitudeShape { layer, expected, found } => {
                write!(f, "layer {layer}: expected {expected} magnitudes, found {found}")
            }
            NonFiniteMagnitude { layer, channel, sample } => {
                write!(f, "non-finite magnitude at (layer {layer}, channel {channel}, sample {sample})")
            }
            NegativeMagnitude { layer, channel, sample } => {
                write!(f, "negative magnitude at (layer {layer}, channel {channel}, sample {sample})")
            }
            ColumnNormLayerCount { expected, found } => {
                write!(f, "expected {expected} column-norm blocks, found {found}")
            }
            ColumnNormShape { layer, expected, found } => {
                write!(f, "layer {layer}: expected {expected} column norms, found {found}")
            }
            InvalidColumnNorm { layer, channel } => {
                write!(f, "invalid column norm at (layer {layer}, channel {channel})")
            }
            PerplexityLength { expected, found } => {
                write!(f, "expected {expected} perplexities, found {found}")
            }
            InvalidPerplexity { sample } => write!(f, "invalid perplexity for sample {sample}"),
        }
    }
}

impl ActivationProfile {
    /// Builds a profile and rejects it if any invariant fails.
    pub fn new(
        num_samples: usize,
        layer_dims: Vec<usize>,
        magnitudes: Vec<Vec<f32>>,
        column_norms: Option<Vec<Vec<f32>>>,
        perplexities: Option<Vec<f32>>,
    ) -> Result<Self> {
        let profile = Self {
            num_samples,
            layer_dims,
            magnitudes,
            column_norms,
            perplexities,
        };
        profile.ensure_valid()?;
        Ok(profile)
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len()
    }

    /// Total number of (layer, channel) pairs.
    pub fn total_channels(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    /// The `N` magnitudes of channel `c` in layer `l`.
    pub fn channel(&self, layer: usize, channel: usize) -> &[f32] {
        let n = self.num_samples;
        &self.magnitudes[layer][channel * n..(channel + 1) * n]
    }

    pub fn magnitude(&self, layer: usize, channel: usize, sample: usize) -> f32 {
        self.magnitudes[layer][channel * self.num_samples + sample]
    }

    /// Weight-column norm, `1.0` when the profile carries none.
    pub fn column_norm(&self, layer: usize, channel: usize) -> f64 {
        self.column_norms
            .as_ref()
            .map_or(1.0, |norms| f64::from(norms[layer][channel]))
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let diags = validate_profile(self);
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidProfile(diags))
        }
    }
}

/// Returns one diagnostic per kind of violation, citing its first occurrence.
/// An empty list means every downstream module accepts the profile.
pub fn validate_profile(profile: &ActivationProfile) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let n = profile.num_samples;
    if n == 0 {
        diags.push(Diagnostic::NoSamples);
    }
    if profile.layer_dims.is_empty() {
        diags.push(Diagnostic::NoLayers);
    }
    if let Some(layer) = profile.layer_dims.iter().position(|&d| d == 0) {
        diags.push(Diagnostic::EmptyLayer { layer });
    }

    if profile.magnitudes.len() != profile.layer_dims.len() {
        diags.push(Diagnostic::MagnitudeLayerCount {
            expected: profile.layer_dims.len(),
            found: profile.magnitudes.len(),
        });
    } else {
        let mut shape = None;
        let mut non_finite = None;
        let mut negative = None;
        for (layer, (block, &dim)) in profile.magnitudes.iter().zip(&profile.layer_dims).enumerate() {
            let expected = dim.saturating_mul(n);
            if block.len() != expected {
                shape.get_or_insert(Diagnostic::MagnitudeShape {
                    layer,
                    expected,
                    found: block.len(),
                });
                continue;
            }
            if n == 0 || (non_finite.is_some() && negative.is_some()) {
                continue;
            }
            for (idx, &value) in block.iter().enumerate() {
                let (channel, sample) = (idx / n, idx % n);
                if !value.is_finite() {
                    non_finite.get_or_insert(Diagnostic::NonFiniteMagnitude { layer, channel, sample });
                } else if value < 0.0 {
                    negative.get_or_insert(Diagnostic::NegativeMagnitude { layer, channel, sample });
                }
            }
        }
        diags.extend(shape);
        diags.extend(non_finite);
        diags.extend(negative);
    }

    if let Some(norms) = &profile.column_norms {
        if norms.len() != profile.layer_dims.len() {
            diags.push(Diagnostic::ColumnNormLayerCount {
                expected: profile.layer_dims.len(),
                found: norms.len(),
            });
        } else {
            let mut shape = None;
            let mut invalid = None;
            for (layer, (block, &dim)) in norms.iter().zip(&profile.layer_dims).enumerate() {
                if block.len() != dim {
                    shape.get_or_insert(Diagnostic::ColumnNormShape {
                        layer,
                        expected: dim,
                        found: block.len(),
                    });
                    continue;
                }
                if invalid.is_none() {
                    if let Some(channel) = block.iter().position(|v| !v.is_finite() || *v < 0.0) {
                        invalid = Some(Diagnostic::InvalidColumnNorm { layer, channel });
                    }
                }
            }
            diags.extend(shape);
            diags.extend(invalid);
        }
    }

    if let Some(ppl) = &profile.perplexities {
        if ppl.len() != n {
            diags.push(Diagnostic::PerplexityLength {
                expected: n,
                found: ppl.len(),
            });
        }
        if let Some(sample) = ppl.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            diags.push(Diagnostic::InvalidPerplexity { sample });
        }
    }
    diags
}
