//! Synthetic activation pools with planted outlier structure.
//!
//! Every layer gets `ceil(f * d_l)` planted outlier channels. A planted
//! channel has a characteristic multiplier `m ~ U[m_lo, m_hi]` and, when it
//! fires on a sample, reaches `base_mean + m * base_std` (times a small
//! per-firing jitter). All other entries come from the half-normal body
//! `|N(base_mean, base_std)|`.
//!
//! Firing patterns: by default each sample fires each planted channel
//! independently with probability `p`. In the redundant-pool scenario a
//! sample instead copies, with probability `rho`, the firing pattern of one
//! of a few shared templates, so many samples activate exactly the same
//! channels. The dominant-layer scenario scales one layer's multipliers and
//! makes its planted channels fire far more rarely, so its missed channels
//! carry most of the clipping error.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::outlier::DEFAULT_K_SIGMA;
use crate::profile::ActivationProfile;

const PLANT_STREAM: u64 = 0;
const NORM_STREAM: u64 = 1;
const PPL_STREAM: u64 = 2;
const LAYER_STREAM_BASE: u64 = 16;

/// Per-firing jitter range applied to the planted magnitude.
const FIRING_JITTER: (f64, f64) = (0.9, 1.0);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[default]
    Uniform,
    DominantLayer,
    RedundantPool,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "dominant-layer" | "dominant_layer" => Ok(Self::DominantLayer),
            "redundant-pool" | "redundant_pool" => Ok(Self::RedundantPool),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    pub num_samples: usize,
    pub layer_dims: Vec<usize>,
    pub base_mean: f64,
    pub base_std: f64,
    pub outlier_fraction: f64,
    /// `[m_lo, m_hi]` in units of `base_std`.
    pub multiplier_range: (f64, f64),
    /// Probability a planted channel fires on a given sample.
    pub sparsity: f64,
    /// Probability a sample copies a template's firing pattern
    /// (redundant-pool scenario only).
    pub redundancy: f64,
    pub num_templates: usize,
    /// Probability a planted channel belongs to a given template.
    pub template_density: f64,
    pub scenario: Scenario,
    /// Defaults to the middle layer.
    pub dominant_layer: Option<usize>,
    pub dominant_multiplier: f64,
    /// Factor on `sparsity` for the dominant layer's planted channels.
    pub dominant_sparsity: f64,
    pub seed: u64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            num_samples: 256,
            layer_dims: vec![512; 4],
            base_mean: 0.0,
            base_std: 1.0,
            outlier_fraction: 0.03,
            multiplier_range: (8.0, 120.0),
            sparsity: 0.02,
            redundancy: 0.0,
            num_templates: 8,
            template_density: 0.06,
            scenario: Scenario::Uniform,
            dominant_layer: None,
            dominant_multiplier: 10.0,
            dominant_sparsity: 0.05,
            seed: 0,
        }
    }
}

impl PoolConfig {
    /// Named desk-scale configurations: `small`, `medium`, `redundant`, `dominant`.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        Ok(match name {
            "small" => base,
            "medium" => Self {
                num_samples: 2000,
                layer_dims: vec![4096; 4],
                outlier_fraction: 0.032,
                ..base
            },
            "redundant" => Self {
                num_samples: 2000,
                layer_dims: vec![4096; 4],
                outlier_fraction: 0.032,
                sparsity: 0.005,
                redundancy: 0.8,
                scenario: Scenario::RedundantPool,
                ..base
            },
            "dominant" => Self {
                num_samples: 1000,
                layer_dims: vec![1024; 8],
                scenario: Scenario::DominantLayer,
                ..base
            },
            other => return Err(Error::Config(format!("unknown preset {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_samples == 0 {
            return bad("num_samples must be at least 1".into());
        }
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return bad("layer_dims must be nonempty with every dimension >= 1".into());
        }
        let finite = [
            self.base_mean,
            self.base_std,
            self.outlier_fraction,
            self.multiplier_range.0,
            self.multiplier_range.1,
            self.sparsity,
            self.redundancy,
            self.template_density,
            self.dominant_multiplier,
            self.dominant_sparsity,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite".into());
        }
        if self.base_mean < 0.0 || self.base_std <= 0.0 {
            return bad("base_mean must be >= 0 and base_std > 0".into());
        }
        if !(self.outlier_fraction > 0.0 && self.outlier_fraction < 1.0) {
            return bad(format!("outlier_fraction {} not in (0, 1)", self.outlier_fraction));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return bad(format!("sparsity {} not in (0, 1]", self.sparsity));
        }
        if !(0.0..=1.0).contains(&self.redundancy) {
            return bad(format!("redundancy {} not in [0, 1]", self.redundancy));
        }
        let (lo, hi) = self.multiplier_range;
        if lo <= DEFAULT_K_SIGMA || hi < lo {
            return bad(format!("multiplier range [{lo}, {hi}] must satisfy {DEFAULT_K_SIGMA} < m_lo <= m_hi"));
        }
        if !(self.template_density > 0.0 && self.template_density <= 1.0) {
            return bad(format!("template_density {} not in (0, 1]", self.template_density));
        }
        if self.num_templates == 0 {
            return bad("num_templates must be at least 1".into());
        }
        if self.dominant_multiplier <= 0.0 || !(self.dominant_sparsity > 0.0 && self.dominant_sparsity <= 1.0) {
            return bad("dominant_multiplier must be > 0 and dominant_sparsity in (0, 1]".into());
        }
        if let Some(l) = self.dominant_layer {
            if l >= self.layer_dims.len() {
                return bad(format!("dominant_layer {l} out of range"));
            }
        }
        Ok(())
    }

    pub fn dominant(&self) -> Option<usize> {
        (self.scenario == Scenario::DominantLayer).then(|| self.dominant_layer.unwrap_or(self.layer_dims.len() / 2))
    }

    /// Reads a config from JSON (`.json`) or from `key = value` lines.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            let cfg: Self = serde_json::from_str(&text)?;
            cfg.validate()?;
            Ok(cfg)
        } else {
            Self::from_key_values(&text)
        }
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "num_samples" => self.num_samples = num(key, value)?,
            "layer_dims" => {
                self.layer_dims = value
                    .split(',')
                    .map(|d| num(key, d.trim()))
                    .collect::<Result<_>>()?
            }
            "base_mean" => self.base_mean = num(key, value)?,
            "base_std" => self.base_std = num(key, value)?,
            "outlier_fraction" => self.outlier_fraction = num(key, value)?,
            "multiplier_range" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| Error::Config("multiplier_range expects lo,hi".into()))?;
                self.multiplier_range = (num(key, lo.trim())?, num(key, hi.trim())?);
            }
            "sparsity" => self.sparsity = num(key, value)?,
            "redundancy" => self.redundancy = num(key, value)?,
            "num_templates" => self.num_templates = num(key, value)?,
            "template_density" => self.template_density = num(key, value)?,
            "scenario" => self.scenario = value.parse()?,
            "dominant_layer" => self.dominant_layer = Some(num(key, value)?),
            "dominant_multiplier" => self.dominant_multiplier = num(key, value)?,
            "dominant_sparsity" => self.dominant_sparsity = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }
}

struct Planted {
    layer: usize,
    channel: usize,
    peak: f64,
    fire_prob: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn plant_channels(cfg: &PoolConfig, rng: &mut ChaCha8Rng) -> Vec<Planted> {
    let dominant = cfg.dominant();
    let (lo, hi) = cfg.multiplier_range;
    let mut planted = Vec::new();
    for (layer, &dim) in cfg.layer_dims.iter().enumerate() {
        let count = ((cfg.outlier_fraction * dim as f64).ceil() as usize).min(dim);
        let mut channels = index::sample(rng, dim, count).into_vec();
        channels.sort_unstable();
        let (scale, fire_prob) = if dominant == Some(layer) {
            (cfg.dominant_multiplier, cfg.sparsity * cfg.dominant_sparsity)
        } else {
            (1.0, cfg.sparsity)
        };
        for channel in channels {
            let m = rng.random_range(lo..=hi) * scale;
            planted.push(Planted {
                layer,
                channel,
                peak: cfg.base_mean + m * cfg.base_std,
                fire_prob,
            });
        }
    }
    planted
}

/// For each planted channel, the sorted samples it fires on (never empty).
fn firing_sets(cfg: &PoolConfig, planted: &[Planted], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let n = cfg.num_samples;
    let mut fires: Vec<Vec<usize>> = vec![Vec::new(); planted.len()];
    let templated = cfg.scenario == Scenario::RedundantPool && cfg.redundancy > 0.0;
    let templates: Vec<Vec<usize>> = if templated {
        (0..cfg.num_templates)
            .map(|_| (0..planted.len()).filter(|_| rng.random_bool(cfg.template_density)).collect())
            .collect()
    } else {
        Vec::new()
    };
    for s in 0..n {
        if templated && rng.random_bool(cfg.redundancy) {
            let t = rng.random_range(0..templates.len());
            for &j in &templates[t] {
                fires[j].push(s);
            }
        } else {
            for (j, p) in planted.iter().enumerate() {
                if rng.random_bool(p.fire_prob) {
                    fires[j].push(s);
                }
            }
        }
    }
    for set in &mut fires {
        if set.is_empty() {
            set.push(rng.random_range(0..n));
        }
    }
    fires
}

/// Generates a pool; identical configs (seed included) give bit-identical profiles.
pub fn generate_pool(cfg: &PoolConfig) -> Result<ActivationProfile> {
    cfg.validate()?;
    let n = cfg.num_samples;
    let mut plant_rng = stream_rng(cfg.seed, PLANT_STREAM);
    let planted = plant_channels(cfg, &mut plant_rng);
    let fires = firing_sets(cfg, &planted, &mut plant_rng);

    let body = Normal::new(cfg.base_mean, cfg.base_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut magnitudes: Vec<Vec<f32>> = cfg
        .layer_dims
        .iter()
        .enumerate()
        .map(|(layer, &dim)| {
            let mut rng = stream_rng(cfg.seed, LAYER_STREAM_BASE + layer as u64);
            (0..dim * n).map(|_| body.sample(&mut rng).abs() as f32).collect()
        })
        .collect();

    let mut jitter_rng = stream_rng(cfg.seed, LAYER_STREAM_BASE + cfg.layer_dims.len() as u64);
    for (p, samples) in planted.iter().zip(&fires) {
        let row = &mut magnitudes[p.layer][p.channel * n..(p.channel + 1) * n];
        for &s in samples {
            let j = jitter_rng.random_range(FIRING_JITTER.0..=FIRING_JITTER.1);
            row[s] = (p.peak * j) as f32;
        }
    }

    let norm_law = Normal::new(1.0f64, 0.25).expect("valid normal");
    let mut norm_rng = stream_rng(cfg.seed, NORM_STREAM);
    let column_norms = cfg
        .layer_dims
        .iter()
        .map(|&d| (0..d).map(|_| norm_law.sample(&mut norm_rng).abs() as f32).collect())
        .collect();

    let ppl_law = LogNormal::new(1.5f64, 0.4).expect("valid lognormal");
    let mut ppl_rng = stream_rng(cfg.seed, PPL_STREAM);
    let perplexities = (0..n).map(|_| ppl_law.sample(&mut ppl_rng) as f32).collect();

    ActivationProfile::new(n, cfg.layer_dims.clone(), magnitudes, Some(column_norms), Some(perplexities))
}

/// The planted (layer, channel) pairs of a config, without generating magnitudes.
pub fn planted_channels(cfg: &PoolConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, PLANT_STREAM);
    Ok(plant_channels(cfg, &mut rng)
        .into_iter()
        .map(|p| (p.layer, p.channel))
        .collect())
}
