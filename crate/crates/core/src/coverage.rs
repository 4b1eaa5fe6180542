//! Sparse sample × outlier-channel incidence.
//!
//! Row `i` lists, in ascending order, the global indices of the outlier
//! channels that sample `i` activates strictly above its layer threshold.
//! The weighted matrix is implicit: entry `(i, j)` weighs `weights[j]`.

use crate::error::{Error, Result};
use crate::outlier::OutlierModel;
use crate::profile::ActivationProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMatrix {
    num_samples: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    weights: Vec<f64>,
    channel_layers: Vec<usize>,
    num_layers: usize,
}

pub fn build_coverage_matrix(profile: &ActivationProfile, model: &OutlierModel) -> Result<CoverageMatrix> {
    if profile.layer_dims != model.layer_dims || profile.num_samples != model.num_samples {
        return Err(Error::ShapeMismatch(
            "outlier model was built from a profile of a different shape".into(),
        ));
    }
    let n = profile.num_samples;
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
    for (j, ch) in model.channels.iter().enumerate() {
        let tau = model.tau(ch.layer);
        for (s, &v) in profile.channel(ch.layer, ch.channel).iter().enumerate() {
            if f64::from(v) > tau {
                rows[s].push(j as u32);
            }
        }
    }
    CoverageMatrix::from_rows(
        rows,
        model.weights(),
        model.channels.iter().map(|c| c.layer).collect(),
        model.num_layers(),
    )
}

impl CoverageMatrix {
    /// Builds a matrix from explicit rows. Rows must be sorted and
    /// duplicate-free, and every channel must be covered by some row.
    pub fn from_rows(
        rows: Vec<Vec<u32>>,
        weights: Vec<f64>,
        channel_layers: Vec<usize>,
        num_layers: usize,
    ) -> Result<Self> {
        let m = weights.len();
        if channel_layers.len() != m {
            return Err(Error::InvalidCoverage(format!(
                "{} channel layers for {} weights",
                channel_layers.len(),
                m
            )));
        }
        if let Some(l) = channel_layers.iter().find(|&&l| l >= num_layers) {
            return Err(Error::InvalidCoverage(format!("channel layer {l} >= {num_layers}")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidCoverage(format!("channel weight {w} is not finite and nonnegative")));
        }
        if u32::try_from(m).is_err() {
            return Err(Error::DimensionOverflow("more than u32::MAX outlier channels"));
        }
        let mut seen = vec![false; m];
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        for (i, row) in rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidCoverage(format!("row {i} is not strictly increasing")));
            }
            if let Some(&j) = row.last() {
                if j as usize >= m {
                    return Err(Error::InvalidCoverage(format!("row {i} references channel {j} >= {m}")));
                }
            }
            for &j in row {
                seen[j as usize] = true;
            }
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        if let Some(j) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidCoverage(format!("channel {j} is not covered by any sample")));
        }
        Ok(Self {
            num_samples: rows.len(),
            row_offsets,
            col_indices,
            weights,
            channel_layers,
            num_layers,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn num_channels(&self) -> usize {
        self.weights.len()
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, sample: usize) -> &[u32] {
        &self.col_indices[self.row_offsets[sample]..self.row_offsets[sample + 1]]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn channel_layer(&self, channel: usize) -> usize {
        self.channel_layers[channel]
    }

    pub fn total_weight(&self) -> f64 {
        sum(self.weights.iter().copied())
    }

    /// Total weighted mass of one row.
    pub fn row_mass(&self, sample: usize) -> f64 {
        sum(self.row(sample).iter().map(|&j| self.weights[j as usize]))
    }

    pub fn check_samples(&self, selection: &[usize]) -> Result<()> {
        match selection.iter().find(|&&s| s >= self.num_samples) {
            Some(&index) => Err(Error::SampleOutOfRange {
                index,
                num_samples: self.num_samples,
            }),
            None => Ok(()),
        }
    }

    /// Coverage mask of a selection.
    pub fn covered_mask(&self, selection: &[usize]) -> Result<Vec<bool>> {
        self.check_samples(selection)?;
        let mut covered = vec![false; self.num_channels()];
        for &s in selection {
            for &j in self.row(s) {
                covered[j as usize] = true;
            }
        }
        Ok(covered)
    }
}

/// Objective value of a selection: the covered channel set (ascending) and
/// its total weight.
pub fn objective_value(selection: &[usize], cov: &CoverageMatrix) -> Result<(Vec<u32>, f64)> {
    let mask = cov.covered_mask(selection)?;
    let covered: Vec<u32> = (0..mask.len() as u32).filter(|&j| mask[j as usize]).collect();
    let value = sum(covered.iter().map(|&j| cov.weights[j as usize]));
    Ok((covered, value))
}

/// Left-to-right sum starting from `+0.0`, so empty sums print as `0`.
pub(crate) fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc + v)
}
