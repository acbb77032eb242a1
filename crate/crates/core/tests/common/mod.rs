//! Reference implementations used as test oracles. They work on plain
//! nested vectors and share no numeric code with the library.

#![allow(dead_code)]

use lft::{Entry, Model, ParamGroup, SparseTensor, TensorShape};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub s: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

fn rows(flat: &[f64], rank: usize) -> Vec<Vec<f64>> {
    flat.chunks(rank).map(<[f64]>::to_vec).collect()
}

impl Params {
    pub fn from_model(model: &Model) -> Self {
        let r = model.rank();
        Params {
            s: rows(model.group(ParamGroup::StationFactors), r),
            m: rows(model.group(ParamGroup::MetricFactors), r),
            t: rows(model.group(ParamGroup::SlotFactors), r),
            a: model.group(ParamGroup::StationBias).to_vec(),
            b: model.group(ParamGroup::MetricBias).to_vec(),
            c: model.group(ParamGroup::SlotBias).to_vec(),
        }
    }

    pub fn rank(&self) -> usize {
        self.s[0].len()
    }

    pub fn predict(&self, i: usize, j: usize, k: usize) -> f64 {
        let mut y = 0.0;
        for r in 0..self.rank() {
            y += self.s[i][r] * self.m[j][r] * self.t[k][r];
        }
        y + self.a[i] + self.b[j] + self.c[k]
    }

    /// Half the sum of squared residuals plus ridge terms. With
    /// `bias_inside_rank` the bias squares are counted once per rank
    /// component, otherwise once.
    pub fn loss(&self, entries: &[Entry], lambda: f64, bias_inside_rank: bool) -> f64 {
        let rank = self.rank() as f64;
        let bias_weight = if bias_inside_rank { rank } else { 1.0 };
        let mut total = 0.0;
        for e in entries {
            let resid = e.value - self.predict(e.i, e.j, e.k);
            let mut ridge = 0.0;
            for r in 0..self.rank() {
                ridge += self.s[e.i][r].powi(2) + self.m[e.j][r].powi(2) + self.t[e.k][r].powi(2);
            }
            ridge +=
                bias_weight * (self.a[e.i].powi(2) + self.b[e.j].powi(2) + self.c[e.k].powi(2));
            total += resid * resid + lambda * ridge;
        }
        0.5 * total
    }

    pub fn rmse(&self, entries: &[Entry]) -> f64 {
        let sq: f64 = entries
            .iter()
            .map(|e| (e.value - self.predict(e.i, e.j, e.k)).powi(2))
            .sum();
        (sq / entries.len() as f64).sqrt()
    }

    pub fn max_abs_diff(&self, model: &Model) -> f64 {
        let other = Params::from_model(model);
        let flat = |p: &Params| -> Vec<f64> {
            let mut v: Vec<f64> =
                p.s.iter()
                    .chain(&p.m)
                    .chain(&p.t)
                    .flatten()
                    .copied()
                    .collect();
            v.extend(&p.a);
            v.extend(&p.b);
            v.extend(&p.c);
            v
        };
        flat(self)
            .iter()
            .zip(flat(&other))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

pub fn signed_power(x: f64, alpha: f64) -> f64 {
    x.abs().powf(alpha) * x.signum()
}

/// Gains as (k_p, k_i, k_d, alpha_i, alpha_d).
pub type Gains = (f64, f64, f64, f64, f64);

/// Per-entry PID memory for the transcript oracle.
pub struct PidMemory {
    pub sum: Vec<f64>,
    pub last: Vec<f64>,
}

impl PidMemory {
    pub fn new(n: usize) -> Self {
        PidMemory {
            sum: vec![0.0; n],
            last: vec![0.0; n],
        }
    }
}

/// One PID-refined step on the entry at position `slot`.
pub fn pid_step(
    p: &mut Params,
    mem: &mut PidMemory,
    slot: usize,
    e: &Entry,
    eta: f64,
    lambda: f64,
    g: Gains,
) {
    let (kp, ki, kd, ai, ad) = g;
    let err = e.value - p.predict(e.i, e.j, e.k);
    mem.sum[slot] += err;
    let diff = err - mem.last[slot];
    mem.last[slot] = err;
    let refined = kp * err + ki * signed_power(mem.sum[slot], ai) + kd * signed_power(diff, ad);

    let (i, j, k) = (e.i, e.j, e.k);
    let s0 = p.s[i].clone();
    let m0 = p.m[j].clone();
    let t0 = p.t[k].clone();
    for r in 0..p.rank() {
        p.s[i][r] = s0[r] + eta * (refined * m0[r] * t0[r] - lambda * s0[r]);
        p.m[j][r] = m0[r] + eta * (refined * s0[r] * t0[r] - lambda * m0[r]);
        p.t[k][r] = t0[r] + eta * (refined * s0[r] * m0[r] - lambda * t0[r]);
    }
    p.a[i] += eta * (refined - lambda * p.a[i]);
    p.b[j] += eta * (refined - lambda * p.b[j]);
    p.c[k] += eta * (refined - lambda * p.c[k]);
}

/// Runs `epochs` passes in stored order and returns per-epoch
/// (train RMSE, val RMSE).
pub fn pid_transcript(
    p: &mut Params,
    train: &[Entry],
    val: &[Entry],
    epochs: usize,
    eta: f64,
    lambda: f64,
    g: Gains,
) -> Vec<(f64, f64)> {
    let mut mem = PidMemory::new(train.len());
    let mut curve = Vec::new();
    for _ in 0..epochs {
        for (slot, e) in train.iter().enumerate() {
            pid_step(p, &mut mem, slot, e, eta, lambda, g);
        }
        curve.push((p.rmse(train), p.rmse(val)));
    }
    curve
}

/// Random tensor with distinct cells and values in [-2, 2).
pub fn random_tensor(rng: &mut StdRng, shape: TensorShape, n: usize) -> SparseTensor {
    let cells = shape.cells();
    let mut picked = std::collections::BTreeSet::new();
    while picked.len() < n.min(cells) {
        picked.insert(rng.random_range(0..cells));
    }
    let entries = picked
        .into_iter()
        .map(|flat| {
            let (i, j, k) = shape.unflatten(flat);
            Entry::new(i, j, k, rng.random_range(-2.0..2.0))
        })
        .collect();
    SparseTensor::new(shape, entries).unwrap()
}

/// Model with every parameter drawn from [-1, 1).
pub fn random_model(rng: &mut StdRng, shape: TensorShape, rank: usize) -> Model {
    let mut draw = |n: usize| {
        (0..n)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let s = draw(shape.n_stations * rank);
    let m = draw(shape.n_metrics * rank);
    let t = draw(shape.n_slots * rank);
    let a = draw(shape.n_stations);
    let b = draw(shape.n_metrics);
    let c = draw(shape.n_slots);
    Model::from_parts(shape, rank, s, m, t, a, b, c).unwrap()
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
