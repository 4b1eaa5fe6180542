//! Coverage profiles and redundancy of a selection.

use std::fmt;

use serde::Serialize;

use crate::coverage::{objective_value, sum, CoverageMatrix};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCoverage {
    pub layer: usize,
    pub covered: usize,
    pub total: usize,
    pub covered_weight: f64,
    pub total_weight: f64,
}

impl LayerCoverage {
    /// Weighted coverage restricted to this layer, in percent.
    pub fn weighted_pct(&self) -> f64 {
        pct(self.covered_weight, self.total_weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub num_selected: usize,
    pub channel_coverage_pct: f64,
    pub weighted_coverage_pct: f64,
    pub mean_pairwise_jaccard: f64,
    pub per_layer_coverage: Vec<LayerCoverage>,
}

fn pct(part: f64, whole: f64) -> f64 {
    if whole > 0.0 {
        (part / whole * 100.0).clamp(0.0, 100.0)
    } else {
        0.0
    }
}

/// |A ∩ B| / |A ∪ B| over sorted index lists; two empty sets score 0.
pub fn jaccard(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean Jaccard similarity over unordered pairs of the selection's
/// per-sample coverage sets; 0 for fewer than two samples.
pub fn mean_pairwise_jaccard(selection: &[usize], cov: &CoverageMatrix) -> Result<f64> {
    cov.check_samples(selection)?;
    let pairs = selection.len() * selection.len().saturating_sub(1) / 2;
    if pairs == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, &sa) in selection.iter().enumerate() {
        for &sb in &selection[a + 1..] {
            total += jaccard(cov.row(sa), cov.row(sb));
        }
    }
    Ok(total / pairs as f64)
}

pub fn coverage_report(selection: &[usize], cov: &CoverageMatrix) -> Result<CoverageReport> {
    let (covered, value) = objective_value(selection, cov)?;
    let m = cov.num_channels();
    let mut per_layer: Vec<LayerCoverage> = (0..cov.num_layers())
        .map(|layer| LayerCoverage {
            layer,
            covered: 0,
            total: 0,
            covered_weight: 0.0,
            total_weight: 0.0,
        })
        .collect();
    for (j, &w) in cov.weights().iter().enumerate() {
        let entry = &mut per_layer[cov.channel_layer(j)];
        entry.total += 1;
        entry.total_weight += w;
    }
    for &j in &covered {
        let entry = &mut per_layer[cov.channel_layer(j as usize)];
        entry.covered += 1;
        entry.covered_weight += cov.weights()[j as usize];
    }
    Ok(CoverageReport {
        num_selected: selection.len(),
        channel_coverage_pct: pct(covered.len() as f64, m as f64),
        weighted_coverage_pct: pct(value, sum(cov.weights().iter().copied())),
        mean_pairwise_jaccard: mean_pairwise_jaccard(selection, cov)?,
        per_layer_coverage: per_layer,
    })
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "selected samples      {}", self.num_selected)?;
        writeln!(f, "channel coverage      {:.2}%", self.channel_coverage_pct)?;
        writeln!(f, "weighted coverage     {:.2}%", self.weighted_coverage_pct)?;
        writeln!(f, "mean pairwise Jaccard {:.4}", self.mean_pairwise_jaccard)?;
        writeln!(f, "layer  covered/total  weighted")?;
        for l in &self.per_layer_coverage {
            writeln!(f, "{:>5}  {:>7}/{:<5}  {:>7.2}%", l.layer, l.covered, l.total, l.weighted_pct())?;
        }
        Ok(())
    }
}
