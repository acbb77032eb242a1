//! Seeded low-rank test data.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Entry, SparseTensor, TensorShape};
use crate::error::{Error, Result};
use crate::model::{Model, ParamGroup};
use crate::rng::SplitMix64;

/// Ground-truth factor entries are uniform on this range.
pub const TRUTH_FACTOR_RANGE: (f64, f64) = (0.2, 1.0);
/// Ground-truth bias entries are uniform on this range.
pub const TRUTH_BIAS_RANGE: (f64, f64) = (-0.5, 0.5);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub shape: TensorShape,
    pub rank: usize,
    pub density: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

pub fn synth_lowrank(
    shape: TensorShape,
    rank: usize,
    density: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<SparseTensor> {
    let spec = SynthSpec {
        shape,
        rank,
        density,
        noise_sd,
        seed,
    };
    synth_lowrank_with_truth(&spec).map(|(t, _)| t)
}

/// Generates a tensor together with the model that produced it.
///
/// One [`SplitMix64`] stream seeded with `seed` is consumed in this order:
/// S, M, T row-major from [`TRUTH_FACTOR_RANGE`]; a, b, c from
/// [`TRUTH_BIAS_RANGE`]; then `⌊density·|I||J||K|⌋` cells are drawn without
/// replacement by a partial Fisher–Yates over flat indices and sorted
/// ascending; finally, when `noise_sd > 0`, one Gaussian draw per entry in
/// that order. With `noise_sd == 0` every value is exactly
/// `truth.predict(i, j, k)`.
pub fn synth_lowrank_with_truth(spec: &SynthSpec) -> Result<(SparseTensor, Model)> {
    let SynthSpec {
        shape,
        rank,
        density,
        noise_sd,
        seed,
    } = *spec;
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!(
            "density must lie in (0,1], got {density}"
        )));
    }
    if !(noise_sd.is_finite() && noise_sd >= 0.0) {
        return Err(Error::invalid(format!(
            "noise_sd must be >= 0, got {noise_sd}"
        )));
    }
    let cells = shape.cells();
    let count = (density * cells as f64).floor() as usize;
    if count == 0 {
        return Err(Error::invalid(format!(
            "density {density} selects no cells of shape {shape}"
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let mut truth = Model::zeros(shape, rank)?;
    for group in ParamGroup::ALL {
        let (low, high) = match group {
            ParamGroup::StationFactors | ParamGroup::MetricFactors | ParamGroup::SlotFactors => {
                TRUTH_FACTOR_RANGE
            }
            _ => TRUTH_BIAS_RANGE,
        };
        for v in truth.group_mut(group) {
            *v = rng.random_range(low..high);
        }
    }

    let mut flat: Vec<usize> = (0..cells).collect();
    for x in 0..count {
        let pick = x + rng.below(cells - x);
        flat.swap(x, pick);
    }
    let mut chosen = flat[..count].to_vec();
    chosen.sort_unstable();

    let noise = if noise_sd > 0.0 {
        Some(Normal::new(0.0, noise_sd).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let entries = chosen
        .into_iter()
        .map(|f| {
            let (i, j, k) = shape.unflatten(f);
            let mut value = truth.predict_unchecked(i, j, k);
            if let Some(dist) = &noise {
                value += dist.sample(&mut rng);
            }
            Entry::new(i, j, k, value)
        })
        .collect();
    Ok((SparseTensor::new(shape, entries)?, truth))
}
