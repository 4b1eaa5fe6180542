//! Stylized clipping surrogate of quantization error.
//!
//! Each outlier channel carries a deficit `delta >= 0`: zero when the
//! selection covers it, at most `o_ref / tau` when it is missed. The
//! surrogate loss `sum ||W_{:,c}|| * delta^2` is then bounded by the weight of
//! the missed channels, with equality when every missed channel sits at its
//! worst-case deficit.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::coverage::{build_coverage_matrix, sum, CoverageMatrix};
use crate::error::{Error, Result};
use crate::outlier::{build_outlier_model, compute_layer_thresholds, OutlierModel};
use crate::profile::ActivationProfile;
use crate::selection::{greedy_select, SelectionResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeficitMode {
    /// Missed channels sit at `o_ref / tau`.
    WorstCase,
    /// Missed channels draw `u * o_ref / tau` with `u ~ U[0, 1)`.
    #[default]
    UniformFraction,
}

impl FromStr for DeficitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worst_case" => Ok(Self::WorstCase),
            "uniform_fraction" => Ok(Self::UniformFraction),
            other => Err(Error::InvalidParameter(format!("unknown deficit mode {other:?}"))),
        }
    }
}

impl fmt::Display for DeficitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Self::WorstCase => "worst_case",
            Self::UniformFraction => "uniform_fraction",
        })
    }
}

/// Per-channel deficits for one selection. Construction enforces that
/// covered channels are at zero and missed ones at most `o_ref / tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeficitVector {
    values: Vec<f64>,
    covered: Vec<bool>,
    seed: Option<u64>,
    mode: Option<DeficitMode>,
}

impl DeficitVector {
    /// Explicit deficits, checked against the model and the selection's coverage.
    pub fn from_values(model: &OutlierModel, cov: &CoverageMatrix, selection: &[usize], values: Vec<f64>) -> Result<Self> {
        check_pairing(model, cov)?;
        if values.len() != model.channels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} deficits for {} outlier channels",
                values.len(),
                model.channels.len()
            )));
        }
        let covered = cov.covered_mask(selection)?;
        for (j, ((&delta, &is_covered), ch)) in values.iter().zip(&covered).zip(&model.channels).enumerate() {
            let cap = ch.normalized_magnitude(model.tau(ch.layer));
            let ok = if is_covered { delta == 0.0 } else { delta.is_finite() && delta >= 0.0 && delta <= cap };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "deficit {delta} for channel {j} breaks the covered-zero / missed-at-most-{cap} rule"
                )));
            }
        }
        Ok(Self { values, covered, seed: None, mode: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn covered(&self) -> &[bool] {
        &self.covered
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn mode(&self) -> Option<DeficitMode> {
        self.mode
    }
}

fn check_pairing(model: &OutlierModel, cov: &CoverageMatrix) -> Result<()> {
    if cov.num_channels() != model.channels.len() || cov.num_samples() != model.num_samples {
        return Err(Error::ShapeMismatch("coverage matrix does not belong to this outlier model".into()));
    }
    Ok(())
}

/// Uniform draw in `[0, 1)` keyed by `(seed, layer, channel)`, independent
/// of iteration order.
fn keyed_uniform(seed: u64, layer: usize, channel: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((layer as u64) << 32) | channel as u64);
    rng.random::<f64>()
}

pub fn simulate_deficits(
    model: &OutlierModel,
    cov: &CoverageMatrix,
    selection: &[usize],
    seed: u64,
    mode: DeficitMode,
) -> Result<DeficitVector> {
    check_pairing(model, cov)?;
    let covered = cov.covered_mask(selection)?;
    let values = model
        .channels
        .iter()
        .zip(&covered)
        .map(|(ch, &is_covered)| {
            if is_covered {
                return 0.0;
            }
            let cap = ch.normalized_magnitude(model.tau(ch.layer));
            match mode {
                DeficitMode::WorstCase => cap,
                DeficitMode::UniformFraction => keyed_uniform(seed, ch.layer, ch.channel) * cap,
            }
        })
        .collect();
    Ok(DeficitVector { values, covered, seed: Some(seed), mode: Some(mode) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerError {
    pub layer: usize,
    pub error: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurrogateReport {
    #[serde(rename = "L_sur")]
    pub l_sur: f64,
    /// Total weight of the missed channels.
    pub bound: f64,
    pub slack: f64,
    pub per_layer: Vec<LayerError>,
}

impl SurrogateReport {
    pub fn layer_errors(&self) -> Vec<f64> {
        self.per_layer.iter().map(|l| l.error).collect()
    }
}

pub fn surrogate_loss(deficits: &DeficitVector, model: &OutlierModel) -> Result<SurrogateReport> {
    if deficits.values.len() != model.channels.len() {
        return Err(Error::ShapeMismatch("deficits were built for a different outlier model".into()));
    }
    let terms: Vec<f64> = model
        .channels
        .iter()
        .zip(&deficits.values)
        .map(|(ch, &delta)| ch.column_norm * (delta * delta))
        .collect();
    let l_sur = sum(terms.iter().copied());
    let bound = sum(
        model
            .channels
            .iter()
            .zip(&deficits.covered)
            .filter(|(_, &c)| !c)
            .map(|(ch, _)| ch.weight),
    );

    let mut errors = vec![0.0; model.num_layers()];
    for (ch, t) in model.channels.iter().zip(&terms) {
        errors[ch.layer] += t;
    }
    let total = sum(errors.iter().copied());
    let per_layer = errors
        .into_iter()
        .enumerate()
        .map(|(layer, error)| LayerError {
            layer,
            error,
            share: if total > 0.0 { error / total } else { 0.0 },
        })
        .collect();
    Ok(SurrogateReport { l_sur, bound, slack: bound - l_sur, per_layer })
}

/// Recomputes the missed-weight bound from the coverage matrix and returns
/// `bound - L_sur`. A negative slack is an internal error.
pub fn check_surrogate_bound(
    report: &SurrogateReport,
    model: &OutlierModel,
    cov: &CoverageMatrix,
    selection: &[usize],
) -> Result<f64> {
    check_pairing(model, cov)?;
    let covered = cov.covered_mask(selection)?;
    let bound = sum(
        model
            .channels
            .iter()
            .zip(&covered)
            .filter(|(_, &c)| !c)
            .map(|(ch, _)| ch.weight),
    );
    let slack = bound - report.l_sur;
    if slack < 0.0 || slack.is_nan() {
        return Err(Error::Invariant(format!(
            "surrogate loss {} exceeds missed weight {bound}",
            report.l_sur
        )));
    }
    Ok(slack)
}

/// Median and population standard deviation.
fn median_and_std(values: &[f64]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = sum(values.iter().copied()) / n as f64;
    let var = sum(values.iter().map(|v| (v - mean) * (v - mean))) / n as f64;
    (median, var.sqrt())
}

/// Layers whose error exceeds `median + 2 * std` of all layer errors.
pub fn flag_layers(layer_errors: &[f64]) -> Vec<usize> {
    if layer_errors.is_empty() {
        return Vec::new();
    }
    let (median, std) = median_and_std(layer_errors);
    let cutoff = median + 2.0 * std;
    (0..layer_errors.len()).filter(|&l| layer_errors[l] > cutoff).collect()
}

/// One selection round of the refinement loop.
#[derive(Debug, Clone)]
pub struct Round {
    pub model: OutlierModel,
    pub coverage: CoverageMatrix,
    pub selection: SelectionResult,
    pub report: SurrogateReport,
}

#[derive(Debug, Clone)]
pub struct AdaptiveOutcome {
    pub flagged: Vec<usize>,
    pub k_sigmas: Vec<f64>,
    pub initial: Round,
    pub refined: Round,
}

fn run_round(profile: &ActivationProfile, k_sigmas: &[f64], budget: usize, seed: u64) -> Result<Round> {
    let model = build_outlier_model(profile, &compute_layer_thresholds(profile, k_sigmas)?)?;
    let coverage = build_coverage_matrix(profile, &model)?;
    let selection = greedy_select(&coverage, budget);
    let deficits = simulate_deficits(&model, &coverage, &selection.selected, seed, DeficitMode::WorstCase)?;
    let report = surrogate_loss(&deficits, &model)?;
    Ok(Round { model, coverage, selection, report })
}

/// One round of threshold refinement: select at `k_init`, score each layer
/// by its worst-case surrogate error, lower the multiplier to `k_low` on the
/// layers that stand out, and select again.
pub fn adaptive_refine(
    profile: &ActivationProfile,
    k_init: f64,
    k_low: f64,
    budget: usize,
    seed: u64,
) -> Result<AdaptiveOutcome> {
    if profile.num_layers() < 2 {
        return Err(Error::InvalidParameter("adaptive refinement needs at least two layers".into()));
    }
    if !(k_low > 0.0 && k_low <= k_init) {
        return Err(Error::InvalidParameter(format!(
            "k_sigma_low ({k_low}) must lie in (0, k_sigma_init = {k_init}]"
        )));
    }
    profile.ensure_valid()?;
    let initial = run_round(profile, &vec![k_init; profile.num_layers()], budget, seed)?;
    let flagged = flag_layers(&initial.report.layer_errors());
    let mut k_sigmas = vec![k_init; profile.num_layers()];
    for &l in &flagged {
        k_sigmas[l] = k_low;
    }
    let refined = run_round(profile, &k_sigmas, budget, seed)?;
    Ok(AdaptiveOutcome { flagged, k_sigmas, initial, refined })
}

impl Serialize for AdaptiveOutcome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct RoundView<'a> {
            selected: &'a [usize],
            objective: Option<f64>,
            outlier_channels: usize,
            surrogate: &'a SurrogateReport,
        }
        #[derive(Serialize)]
        struct View<'a> {
            flagged_layers: &'a [usize],
            k_sigma: &'a [f64],
            initial: RoundView<'a>,
            refined: RoundView<'a>,
        }
        fn round(r: &Round) -> RoundView<'_> {
            RoundView {
                selected: &r.selection.selected,
                objective: r.selection.objective,
                outlier_channels: r.model.channels.len(),
                surrogate: &r.report,
            }
        }
        View {
            flagged_layers: &self.flagged,
            k_sigma: &self.k_sigmas,
            initial: round(&self.initial),
            refined: round(&self.refined),
        }
        .serialize(serializer)
    }
}
