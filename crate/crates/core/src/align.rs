//! Warping every training sample of a class onto its median-length sample so
//! per-frame one-class models can be fitted on equal-length sequences.

use crate::dtw::{dtw_align_euclidean, WarpingPath};
use crate::{Error, Result, Sequence};

/// `N` warped samples of one class, all exactly as long as the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedClassSet {
    class_name: String,
    reference_id: String,
    warped: Vec<Sequence>,
}

impl WarpedClassSet {
    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn reference_id(&self) -> &str {
        &self.reference_id
    }

    /// `L_med`, the reference length.
    pub fn length(&self) -> usize {
        self.warped[0].len()
    }

    pub fn dim(&self) -> usize {
        self.warped[0].dim()
    }

    pub fn warped(&self) -> &[Sequence] {
        &self.warped
    }

    /// The `N` frames at reference position `t`, one per warped sample.
    pub fn column(&self, t: usize) -> Vec<&[f64]> {
        self.warped.iter().map(|s| s.frame(t)).collect()
    }

    /// Frame-wise mean of the warped samples.
    pub fn mean_sequence(&self, id: impl Into<String>) -> Result<Sequence> {
        let n = self.warped.len() as f64;
        let mut data = vec![0.0; self.length() * self.dim()];
        for s in &self.warped {
            for (acc, v) in data.iter_mut().zip(s.as_flat()) {
                *acc += v;
            }
        }
        data.iter_mut().for_each(|v| *v /= n);
        Sequence::from_flat(id, self.dim(), data)
    }
}

/// Index (into `samples`) of the reference: position `floor(N/2)` of the
/// samples stably sorted by ascending length.
pub fn select_reference(samples: &[Sequence]) -> Result<usize> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to choose a reference from"));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by_key(|&i| samples[i].len());
    Ok(order[samples.len() / 2])
}

/// Maps `sample` onto the time axis of `reference`.
///
/// Each reference position takes the mean of the sample frames the Euclidean
/// DTW path assigns to it; a sample frame assigned to several positions is
/// repeated.
pub fn warp_to_reference(sample: &Sequence, reference: &Sequence) -> Result<Sequence> {
    let alignment = dtw_align_euclidean(reference, sample)?;
    Ok(materialize(sample, reference.len(), &alignment.path).with_id(sample.id().to_string()))
}

fn materialize(sample: &Sequence, length: usize, path: &WarpingPath) -> Sequence {
    let dim = sample.dim();
    let mut sums = vec![0.0; length * dim];
    let mut counts = vec![0usize; length];
    for &(i, j) in path.steps() {
        let (t, s) = (i - 1, j - 1);
        counts[t] += 1;
        for (acc, v) in sums[t * dim..(t + 1) * dim].iter_mut().zip(sample.frame(s)) {
            *acc += v;
        }
    }
    for (t, &c) in counts.iter().enumerate() {
        debug_assert!(c > 0, "warping path skips reference row {t}");
        sums[t * dim..(t + 1) * dim].iter_mut().for_each(|v| *v /= c as f64);
    }
    Sequence::from_flat(sample.id(), dim, sums).expect("warped frames are finite")
}

/// Warps all samples of one class onto the reference chosen by [`select_reference`].
pub fn build_warped_set(class_name: impl Into<String>, samples: &[Sequence]) -> Result<WarpedClassSet> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 samples to model a class, got {}",
            samples.len()
        )));
    }
    let dim = samples[0].dim();
    if let Some(bad) = samples.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    let reference = &samples[select_reference(samples)?];
    let warped = samples
        .iter()
        .map(|s| warp_to_reference(s, reference))
        .collect::<Result<Vec<_>>>()?;
    Ok(WarpedClassSet {
        class_name: class_name.into(),
        reference_id: reference.id().to_string(),
        warped,
    })
}
