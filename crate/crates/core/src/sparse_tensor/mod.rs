//! Sparse observations of a three-mode (station × metric × slot) tensor.
//!
//! A [`SparseTensor`] is an immutable coordinate (COO) list of observed
//! cells. Indices are 0-based everywhere: in files, in APIs, and in the
//! flat arrays of the model.

mod io;
mod synth;

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::rng::{self, SplitMix64};

pub use io::{load_coo, load_coo_path, save, save_path, COO_HEADER};
pub use synth::{synth_lowrank, synth_lowrank_with_truth, SynthSpec};

/// Dimensions of the index space: stations × metrics × time slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorShape {
    pub n_stations: usize,
    pub n_metrics: usize,
    pub n_slots: usize,
}

impl TensorShape {
    pub fn new(n_stations: usize, n_metrics: usize, n_slots: usize) -> Result<Self> {
        if n_stations == 0 || n_metrics == 0 || n_slots == 0 {
            return Err(Error::InvalidShape(format!(
                "dimensions must be >= 1, got ({n_stations},{n_metrics},{n_slots})"
            )));
        }
        Ok(Self {
            n_stations,
            n_metrics,
            n_slots,
        })
    }

    /// Total number of cells, |I|·|J|·|K|.
    pub fn cells(&self) -> usize {
        self.n_stations * self.n_metrics * self.n_slots
    }

    pub fn contains(&self, i: usize, j: usize, k: usize) -> bool {
        i < self.n_stations && j < self.n_metrics && k < self.n_slots
    }

    /// Row-major flat index of a cell (slot index varies fastest).
    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n_metrics + j) * self.n_slots + k
    }

    pub fn unflatten(&self, flat: usize) -> (usize, usize, usize) {
        let k = flat % self.n_slots;
        let rest = flat / self.n_slots;
        (rest / self.n_metrics, rest % self.n_metrics, k)
    }

    pub(crate) fn check(&self, i: usize, j: usize, k: usize) -> Result<()> {
        if self.contains(i, j, k) {
            Ok(())
        } else {
            Err(Error::IndexOutOfBounds {
                i,
                j,
                k,
                shape: self.to_string(),
            })
        }
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({},{},{})",
            self.n_stations, self.n_metrics, self.n_slots
        )
    }
}

/// One observed cell `y_ijk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

impl Entry {
    pub fn new(i: usize, j: usize, k: usize, value: f64) -> Self {
        Self { i, j, k, value }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    shape: TensorShape,
    entries: Vec<Entry>,
}

impl SparseTensor {
    /// Builds a tensor, rejecting empty input, out-of-shape indices,
    /// non-finite values and repeated coordinates.
    pub fn new(shape: TensorShape, entries: Vec<Entry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::NoEntries);
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            shape.check(e.i, e.j, e.k)?;
            if !e.value.is_finite() {
                return Err(Error::NonFinite {
                    i: e.i,
                    j: e.j,
                    k: e.k,
                });
            }
            if !seen.insert(shape.flat_index(e.i, e.j, e.k)) {
                return Err(Error::DuplicateEntry {
                    i: e.i,
                    j: e.j,
                    k: e.k,
                });
            }
        }
        Ok(Self { shape, entries })
    }

    /// Builds a tensor whose shape is the bounding box of the entries.
    pub fn with_inferred_shape(entries: Vec<Entry>) -> Result<Self> {
        let shape = bounding_shape(&entries)?;
        Self::new(shape, entries)
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same entries viewed in a (possibly larger) index space.
    pub fn reshaped(&self, shape: TensorShape) -> Result<Self> {
        for e in &self.entries {
            shape.check(e.i, e.j, e.k)?;
        }
        Ok(Self {
            shape,
            entries: self.entries.clone(),
        })
    }

    /// Fraction of observed cells, |entries| / (|I|·|J|·|K|).
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / self.shape.cells() as f64
    }

    /// Seeded partition into (train, validation, test).
    ///
    /// Entries are permuted by [`rng::shuffle`] with a [`SplitMix64`]
    /// seeded by `seed`, then cut into blocks of `⌊r_train·n/Σr⌋` and
    /// `⌊r_val·n/Σr⌋` entries; the remainder is the test block.
    pub fn split(&self, ratios: (f64, f64, f64), seed: u64) -> Result<(Self, Self, Self)> {
        let (r_train, r_val, r_test) = ratios;
        for r in [r_train, r_val, r_test] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!(
                    "split ratios must be positive, got {r}"
                )));
            }
        }
        let n = self.entries.len();
        if n < 3 {
            return Err(Error::invalid(format!(
                "split needs at least 3 entries, got {n}"
            )));
        }
        let total = r_train + r_val + r_test;
        let n_train = (r_train * n as f64 / total).floor() as usize;
        let n_val = (r_val * n as f64 / total).floor() as usize;
        let n_test = n - n_train - n_val;
        if n_train == 0 || n_val == 0 || n_test == 0 {
            return Err(Error::invalid(format!(
                "ratios {r_train}:{r_val}:{r_test} leave an empty block for {n} entries"
            )));
        }

        let mut shuffled = self.entries.clone();
        rng::shuffle(&mut shuffled, &mut SplitMix64::new(seed));
        let test = shuffled.split_off(n_train + n_val);
        let val = shuffled.split_off(n_train);
        let part = |entries| Self {
            shape: self.shape,
            entries,
        };
        Ok((part(shuffled), part(val), part(test)))
    }
}

/// Smallest shape containing every entry: (max_i+1, max_j+1, max_k+1).
pub fn bounding_shape(entries: &[Entry]) -> Result<TensorShape> {
    if entries.is_empty() {
        return Err(Error::NoEntries);
    }
    let (mut i, mut j, mut k) = (0, 0, 0);
    for e in entries {
        i = i.max(e.i);
        j = j.max(e.j);
        k = k.max(e.k);
    }
    TensorShape::new(i + 1, j + 1, k + 1)
}
