//! Calibration-set selection: greedy weighted coverage, an exhaustive
//! oracle, and the baseline selectors.
//!
//! Every selector breaks ties by the lowest sample index, so greedy and the
//! oracle are deterministic and the seeded baselines are bit-reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coverage::{objective_value, sum, CoverageMatrix};
use crate::error::{Error, Result};
use crate::profile::ActivationProfile;

/// Default cap on the number of subsets the oracle enumerates.
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Greedy,
    Random,
    MaxPpl,
    MaxActvar,
    Stratified,
    BruteForce,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Method::Greedy => "greedy",
            Method::Random => "random",
            Method::MaxPpl => "max_ppl",
            Method::MaxActvar => "max_actvar",
            Method::Stratified => "stratified",
            Method::BruteForce => "brute_force",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "greedy" => Method::Greedy,
            "random" => Method::Random,
            "max_ppl" => Method::MaxPpl,
            "max_actvar" => Method::MaxActvar,
            "stratified" => Method::Stratified,
            "brute_force" | "oracle" => Method::BruteForce,
            other => return Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        })
    }
}

/// Outcome of one selection run.
///
/// `objective` is `None` for selectors that do not see the coverage matrix
/// until [`SelectionResult::evaluate`] fills it in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: Method,
    pub seed: Option<u64>,
    #[serde(rename = "K")]
    pub budget: usize,
    pub selected: Vec<usize>,
    pub objective: Option<f64>,
    pub step_gains: Vec<f64>,
}

impl SelectionResult {
    fn unscored(method: Method, budget: usize, selected: Vec<usize>, seed: Option<u64>) -> Self {
        Self {
            method,
            seed,
            budget,
            selected,
            objective: None,
            step_gains: Vec::new(),
        }
    }

    /// Recomputes `objective` from the coverage matrix.
    pub fn evaluate(mut self, cov: &CoverageMatrix) -> Result<Self> {
        self.objective = Some(objective_value(&self.selected, cov)?.1);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One index per line, for downstream quantization tooling.
    pub fn to_index_list(&self) -> String {
        self.selected.iter().map(|i| format!("{i}\n")).collect()
    }
}

/// Greedy weighted-coverage selection.
///
/// Each step takes the unchosen sample with the largest weighted mass of
/// still-uncovered channels. Once every remaining gain is zero the rest of
/// the budget is filled by total row mass. Worst case `O(K · nnz)`, which is
/// bounded by `O(K · N · |C|)`.
pub fn greedy_select(cov: &CoverageMatrix, budget: usize) -> SelectionResult {
    let n = cov.num_samples();
    let k = budget.min(n);
    let mut residual = cov.weights().to_vec();
    let mut chosen = vec![false; n];
    let mut selected = Vec::with_capacity(k);
    let mut step_gains = Vec::with_capacity(k);

    while selected.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| !chosen[i]) {
            let gain = residual_gain(cov.row(i), &residual);
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let (pick, gain) = best.expect("an unchosen sample remains");
        if gain <= 0.0 {
            break;
        }
        chosen[pick] = true;
        for &j in cov.row(pick) {
            residual[j as usize] = 0.0;
        }
        selected.push(pick);
        step_gains.push(gain);
    }
    fill_by_row_mass(cov, k, &mut chosen, &mut selected, &mut step_gains);
    finish_greedy(cov, budget, selected, step_gains)
}

/// Gain of a row against the still-uncovered weights. Covered channels sit
/// at `+0.0`, which leaves the running sum bit-identical to skipping them.
fn residual_gain(row: &[u32], residual: &[f64]) -> f64 {
    sum(row.iter().map(|&j| residual[j as usize]))
}

fn fill_by_row_mass(
    cov: &CoverageMatrix,
    k: usize,
    chosen: &mut [bool],
    selected: &mut Vec<usize>,
    step_gains: &mut Vec<f64>,
) {
    if selected.len() >= k {
        return;
    }
    let mut rest: Vec<(usize, f64)> = (0..cov.num_samples())
        .filter(|&i| !chosen[i])
        .map(|i| (i, cov.row_mass(i)))
        .collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, _) in rest.into_iter().take(k - selected.len()) {
        chosen[i] = true;
        selected.push(i);
        step_gains.push(0.0);
    }
}

fn finish_greedy(cov: &CoverageMatrix, budget: usize, selected: Vec<usize>, step_gains: Vec<f64>) -> SelectionResult {
    let objective = objective_value(&selected, cov).expect("greedy indices are in range").1;
    SelectionResult {
        method: Method::Greedy,
        seed: None,
        budget,
        selected,
        objective: Some(objective),
        step_gains,
    }
}

#[derive(Debug)]
struct Bound {
    gain: f64,
    sample: usize,
}

impl PartialEq for Bound {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Bound {}

impl Ord for Bound {
    // Max-heap on gain, then on lower sample index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.sample.cmp(&self.sample))
    }
}

impl PartialOrd for Bound {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lazy-evaluation greedy. Produces exactly the output of [`greedy_select`].
///
/// Stale gains are upper bounds on current gains, so a refreshed candidate
/// that still beats the heap top under the (gain, lowest index) order is the
/// plain-greedy argmax.
pub fn lazy_greedy_select(cov: &CoverageMatrix, budget: usize) -> SelectionResult {
    let n = cov.num_samples();
    let k = budget.min(n);
    let mut residual = cov.weights().to_vec();
    let mut chosen = vec![false; n];
    let mut selected = Vec::with_capacity(k);
    let mut step_gains = Vec::with_capacity(k);

    let mut heap: BinaryHeap<Bound> = (0..n)
        .map(|sample| Bound { gain: residual_gain(cov.row(sample), &residual), sample })
        .collect();

    while selected.len() < k {
        let Some(top) = heap.pop() else { break };
        let fresh = Bound { gain: residual_gain(cov.row(top.sample), &residual), sample: top.sample };
        let accept = heap.peek().is_none_or(|next| fresh >= *next);
        if !accept {
            heap.push(fresh);
            continue;
        }
        if fresh.gain <= 0.0 {
            break;
        }
        chosen[fresh.sample] = true;
        for &j in cov.row(fresh.sample) {
            residual[j as usize] = 0.0;
        }
        selected.push(fresh.sample);
        step_gains.push(fresh.gain);
    }
    fill_by_row_mass(cov, k, &mut chosen, &mut selected, &mut step_gains);
    finish_greedy(cov, budget, selected, step_gains)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exact maximizer by exhaustive enumeration of all `C(N, K)` subsets in
/// lexicographic order; the first subset with the best value wins.
pub fn brute_force_optimal(cov: &CoverageMatrix, budget: usize, cap: u128) -> Result<SelectionResult> {
    let n = cov.num_samples();
    let k = budget.min(n);
    let subsets = binomial(n, k);
    if subsets > cap {
        return Err(Error::EnumerationCap { subsets, cap });
    }
    let weights = cov.weights();
    let mut combo: Vec<usize> = (0..k).collect();
    let mut best_value = f64::NEG_INFINITY;
    let mut best = combo.clone();
    let mut covered = vec![false; cov.num_channels()];
    loop {
        covered.fill(false);
        for &s in &combo {
            for &j in cov.row(s) {
                covered[j as usize] = true;
            }
        }
        let value = sum(covered.iter().zip(weights).filter(|(c, _)| **c).map(|(_, w)| *w));
        if value > best_value {
            best_value = value;
            best.clone_from(&combo);
        }
        // advance to the next combination
        let Some(pos) = (0..k).rev().find(|&i| combo[i] < n - k + i) else { break };
        combo[pos] += 1;
        for i in pos + 1..k {
            combo[i] = combo[i - 1] + 1;
        }
    }
    SelectionResult::unscored(Method::BruteForce, budget, best, None).evaluate(cov)
}

/// Uniform sampling without replacement.
pub fn select_random(num_samples: usize, budget: usize, seed: u64) -> SelectionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = budget.min(num_samples);
    let selected = index::sample(&mut rng, num_samples, k).into_vec();
    SelectionResult::unscored(Method::Random, budget, selected, Some(seed))
}

fn top_k_by(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Highest full-precision perplexity first.
pub fn select_max_ppl(profile: &ActivationProfile, budget: usize) -> Result<SelectionResult> {
    let ppl = profile
        .perplexities
        .as_ref()
        .ok_or(Error::MissingBlock("perplexities"))?;
    let scores: Vec<f64> = ppl.iter().map(|&p| f64::from(p)).collect();
    let k = budget.min(profile.num_samples);
    Ok(SelectionResult::unscored(Method::MaxPpl, budget, top_k_by(&scores, k), None))
}

/// How a sample's activation variance is scored for the Max-ActVar baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActVarScore {
    /// Population variance over every (layer, channel) magnitude of the sample.
    #[default]
    AllChannels,
    /// Population variance of the sample's per-layer mean magnitudes.
    LayerMeans,
}

impl FromStr for ActVarScore {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_channels" => Ok(Self::AllChannels),
            "layer_means" => Ok(Self::LayerMeans),
            other => Err(Error::InvalidParameter(format!("unknown activation-variance score {other:?}"))),
        }
    }
}

pub fn activation_variance_scores(profile: &ActivationProfile, score: ActVarScore) -> Vec<f64> {
    let n = profile.num_samples;
    match score {
        ActVarScore::AllChannels => {
            let count = profile.total_channels() as f64;
            let mut sum = vec![0.0f64; n];
            for block in &profile.magnitudes {
                for row in block.chunks_exact(n) {
                    for (acc, &v) in sum.iter_mut().zip(row) {
                        *acc += f64::from(v);
                    }
                }
            }
            let mean: Vec<f64> = sum.iter().map(|s| s / count).collect();
            let mut sq = vec![0.0f64; n];
            for block in &profile.magnitudes {
                for row in block.chunks_exact(n) {
                    for ((acc, &v), &m) in sq.iter_mut().zip(row).zip(&mean) {
                        let d = f64::from(v) - m;
                        *acc += d * d;
                    }
                }
            }
            sq.into_iter().map(|s| s / count).collect()
        }
        ActVarScore::LayerMeans => {
            let layer_means: Vec<Vec<f64>> = profile
                .magnitudes
                .iter()
                .zip(&profile.layer_dims)
                .map(|(block, &d)| {
                    let mut acc = vec![0.0f64; n];
                    for row in block.chunks_exact(n) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += f64::from(v);
                        }
                    }
                    acc.into_iter().map(|a| a / d as f64).collect()
                })
                .collect();
            let l = layer_means.len() as f64;
            (0..n)
                .map(|s| {
                    let mean = layer_means.iter().map(|m| m[s]).sum::<f64>() / l;
                    layer_means.iter().map(|m| (m[s] - mean).powi(2)).sum::<f64>() / l
                })
                .collect()
        }
    }
}

/// Highest activation variance first.
pub fn select_max_actvar(profile: &ActivationProfile, budget: usize, score: ActVarScore) -> SelectionResult {
    let scores = activation_variance_scores(profile, score);
    let k = budget.min(profile.num_samples);
    SelectionResult::unscored(Method::MaxActvar, budget, top_k_by(&scores, k), None)
}

/// Mean magnitude over all (layer, channel) entries, per sample.
pub fn mean_magnitudes(profile: &ActivationProfile) -> Vec<f64> {
    let n = profile.num_samples;
    let count = profile.total_channels() as f64;
    let mut sum = vec![0.0f64; n];
    for block in &profile.magnitudes {
        for row in block.chunks_exact(n) {
            for (acc, &v) in sum.iter_mut().zip(row) {
                *acc += f64::from(v);
            }
        }
    }
    sum.into_iter().map(|s| s / count).collect()
}

/// Largest-remainder apportionment of `k` over bins of the given sizes.
fn apportion(sizes: &[usize], k: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * k / total).collect();
    let mut remainders: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(b, &s)| (b, s * k % total))
        .collect();
    remainders.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let short = k - quotas.iter().sum::<usize>();
    for &(b, _) in remainders.iter().take(short) {
        quotas[b] += 1;
    }
    quotas
}

/// Equal-count quantile bins over the mean per-sample magnitude, with
/// proportional quotas and seeded uniform sampling inside each bin.
pub fn select_stratified(
    profile: &ActivationProfile,
    budget: usize,
    num_bins: usize,
    seed: u64,
) -> Result<SelectionResult> {
    stratify(&mean_magnitudes(profile), budget, num_bins, seed)
}

pub(crate) fn stratify(summary: &[f64], budget: usize, num_bins: usize, seed: u64) -> Result<SelectionResult> {
    if num_bins == 0 {
        return Err(Error::InvalidParameter("stratification needs at least one bin".into()));
    }
    let n = summary.len();
    let k = budget.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| summary[a].total_cmp(&summary[b]).then(a.cmp(&b)));
    let bins: Vec<&[usize]> = (0..num_bins)
        .map(|b| &order[b * n / num_bins..(b + 1) * n / num_bins])
        .collect();
    let quotas = apportion(&bins.iter().map(|b| b.len()).collect::<Vec<_>>(), k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected = Vec::with_capacity(k);
    for (bin, &quota) in bins.iter().zip(&quotas) {
        for pos in index::sample(&mut rng, bin.len(), quota) {
            selected.push(bin[pos]);
        }
    }
    Ok(SelectionResult::unscored(Method::Stratified, budget, selected, Some(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverage::tests::{arb_coverage, t1};
    use proptest::prelude::*;

    #[test]
    fn greedy_on_t1() {
        let cov = t1();
        let r = greedy_select(&cov, 2);
        assert_eq!(r.selected, vec![1, 2]);
        assert_eq!(r.step_gains, vec![5.0, 5.0]);
        assert_eq!(r.objective, Some(10.0));

        let r = greedy_select(&cov, 0);
        assert!(r.selected.is_empty());
        assert_eq!(r.objective, Some(0.0));

        let r = greedy_select(&cov, 5);
        assert_eq!(r.selected, vec![1, 2, 0, 3, 4]);
        assert_eq!(r.step_gains, vec![5.0, 5.0, 0.0, 0.0, 0.0]);

        assert_eq!(greedy_select(&cov, 50).selected.len(), 5);
    }

    #[test]
    fn lazy_matches_plain_on_t1() {
        let cov = t1();
        for k in 0..7 {
            assert_eq!(lazy_greedy_select(&cov, k), greedy_select(&cov, k));
        }
    }

    #[test]
    fn oracle_on_t1() {
        let cov = t1();
        let r = brute_force_optimal(&cov, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((r.selected, r.objective), (vec![1, 2], Some(10.0)));
        let r = brute_force_optimal(&cov, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((r.selected, r.objective), (vec![1], Some(5.0)));
        let r = brute_force_optimal(&cov, 5, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((r.selected, r.objective), (vec![0, 1, 2, 3, 4], Some(10.0)));
        assert!(matches!(
            brute_force_optimal(&cov, 2, 9),
            Err(Error::EnumerationCap { subsets: 10, cap: 9 })
        ));
    }

    #[test]
    fn binomial_counts() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(15, 5), 3003);
        assert_eq!(binomial(10, 0), 1);
        assert_eq!(binomial(10, 10), 1);
    }

    #[test]
    fn random_is_deterministic_and_complete() {
        assert_eq!(select_random(100, 10, 3), select_random(100, 10, 3));
        assert_ne!(select_random(100, 10, 3).selected, select_random(100, 10, 4).selected);
        let mut all = select_random(7, 7, 11).selected;
        all.sort_unstable();
        assert_eq!(all, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn random_singletons_are_uniform() {
        let draws = 10_000;
        let mut counts = [0usize; 5];
        for seed in 0..draws {
            counts[select_random(5, 1, seed).selected[0]] += 1;
        }
        // 3 sigma of Binomial(10^4, 0.2)
        let sigma = (draws as f64 * 0.2 * 0.8).sqrt();
        for c in counts {
            assert!((c as f64 - 2000.0).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    fn samples_profile(n: usize, channels: Vec<Vec<f32>>, ppl: Option<Vec<f32>>) -> ActivationProfile {
        let d = channels.len();
        ActivationProfile::new(n, vec![d], vec![channels.concat()], None, ppl).unwrap()
    }

    #[test]
    fn max_ppl_selection() {
        let p = samples_profile(3, vec![vec![0.0; 3]], Some(vec![3.0, 9.0, 5.0]));
        assert_eq!(select_max_ppl(&p, 2).unwrap().selected, vec![1, 2]);
        assert!(select_max_ppl(&p, 0).unwrap().selected.is_empty());
        let p = samples_profile(3, vec![vec![0.0; 3]], Some(vec![2.0; 3]));
        assert_eq!(select_max_ppl(&p, 2).unwrap().selected, vec![0, 1]);
        let p = samples_profile(3, vec![vec![0.0; 3]], None);
        assert!(matches!(select_max_ppl(&p, 2), Err(Error::MissingBlock("perplexities"))));
    }

    #[test]
    fn max_actvar_selection() {
        // sample A = (0, 10), sample B = (4, 6)
        let p = samples_profile(2, vec![vec![0.0, 4.0], vec![10.0, 6.0]], None);
        let scores = activation_variance_scores(&p, ActVarScore::AllChannels);
        assert_eq!(scores, vec![25.0, 1.0]);
        assert_eq!(select_max_actvar(&p, 1, ActVarScore::AllChannels).selected, vec![0]);
        assert_eq!(select_max_actvar(&p, 2, ActVarScore::AllChannels).selected.len(), 2);

        let flat = samples_profile(1, vec![vec![3.0], vec![3.0], vec![3.0]], None);
        assert_eq!(activation_variance_scores(&flat, ActVarScore::AllChannels), vec![0.0]);
    }

    #[test]
    fn layer_mean_variance() {
        // two layers of one channel: sample 0 = (2, 6), sample 1 = (4, 4)
        let p = ActivationProfile::new(2, vec![1, 1], vec![vec![2.0, 4.0], vec![6.0, 4.0]], None, None).unwrap();
        assert_eq!(activation_variance_scores(&p, ActVarScore::LayerMeans), vec![4.0, 0.0]);
    }

    #[test]
    fn stratified_quota_arithmetic() {
        let summary = [1.0, 2.0, 3.0, 4.0];
        for seed in 0..50 {
            let r = stratify(&summary, 2, 2, seed).unwrap();
            assert_eq!(r.selected.len(), 2);
            assert_eq!(r.selected.iter().filter(|&&i| i < 2).count(), 1);
            assert_eq!(r.selected.iter().filter(|&&i| i >= 2).count(), 1);
        }
        let mut all = stratify(&summary, 4, 3, 1).unwrap().selected;
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert!(stratify(&summary, 2, 0, 1).is_err());
        // more bins than samples leaves empty bins with no quota
        assert_eq!(stratify(&summary, 3, 9, 1).unwrap().selected.len(), 3);
    }

    #[test]
    fn apportionment() {
        assert_eq!(apportion(&[2, 2], 2), vec![1, 1]);
        assert_eq!(apportion(&[3, 3, 4], 5), vec![2, 1, 2]);
        assert_eq!(apportion(&[0, 5], 3), vec![0, 3]);
        assert_eq!(apportion(&[1, 1, 1], 2), vec![1, 1, 0]);
    }

    #[test]
    fn selection_json_schema() {
        let r = greedy_select(&t1(), 2);
        let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["method"], "greedy");
        assert_eq!(v["K"], 2);
        assert_eq!(v["selected"], serde_json::json!([1, 2]));
        assert_eq!(v["objective"], 10.0);
        assert_eq!(v["step_gains"], serde_json::json!([5.0, 5.0]));
        assert!(v["seed"].is_null());
        assert_eq!(r.to_index_list(), "1\n2\n");
        let back: SelectionResult = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn lazy_equals_plain(cov in arb_coverage(14, 16), k in 0usize..16) {
            prop_assert_eq!(lazy_greedy_select(&cov, k), greedy_select(&cov, k));
        }

        #[test]
        fn greedy_invariants(cov in arb_coverage(12, 12), k in 0usize..14) {
            let r = greedy_select(&cov, k);
            prop_assert_eq!(r.selected.len(), k.min(cov.num_samples()));
            let mut sorted = r.selected.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), r.selected.len());
            prop_assert!(r.step_gains.windows(2).all(|w| w[0] >= w[1]));
            prop_assert_eq!(r.objective, Some(objective_value(&r.selected, &cov).unwrap().1));
            // greedy at K is a prefix of greedy at K + 1
            let next = greedy_select(&cov, k + 1);
            prop_assert_eq!(&next.selected[..r.selected.len()], &r.selected[..]);
            prop_assert!(next.objective >= r.objective);
        }
    }
}
