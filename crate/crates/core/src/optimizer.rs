//! Per-entry parameter updates.
//!
//! [`sgd_step`] is the plain biased-LFT rule. [`pid_sgd_step`] runs the
//! same update with the instant error replaced by a PID-refined error whose
//! integral and derivative terms pass through [`nonlinear_map`]. With both
//! nonlinearity exponents at 1 this is the linear PID controller; with
//! gains `(1, 0, 0)` it is exactly plain SGD.

use crate::error::{Error, Result};
use crate::model::Model;
use crate::sparse_tensor::Entry;

/// Default bound on each integral accumulator.
pub const DEFAULT_INTEGRAL_CLAMP: f64 = 1e4;

/// `|x|^alpha · sign(x)`.
pub fn nonlinear_map(x: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha, "alpha")?;
    Ok(power_sign(x, alpha))
}

#[inline]
fn power_sign(x: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        x
    } else if x == 0.0 {
        0.0
    } else {
        x.abs().powf(alpha).copysign(x)
    }
}

fn check_alpha(alpha: f64, name: &str) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{name} must lie in (0,1], got {alpha}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    pub alpha_i: f64,
    pub alpha_d: f64,
}

impl PidGains {
    pub fn new(k_p: f64, k_i: f64, k_d: f64, alpha_i: f64, alpha_d: f64) -> Result<Self> {
        let gains = Self {
            k_p,
            k_i,
            k_d,
            alpha_i,
            alpha_d,
        };
        gains.validate()?;
        Ok(gains)
    }

    /// Linear controller (both exponents 1).
    pub fn linear(k_p: f64, k_i: f64, k_d: f64) -> Self {
        Self {
            k_p,
            k_i,
            k_d,
            alpha_i: 1.0,
            alpha_d: 1.0,
        }
    }

    /// `(1, 0, 0)`: the refined error is the instant error.
    pub fn proportional_only() -> Self {
        Self::linear(1.0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("k_p", self.k_p), ("k_i", self.k_i), ("k_d", self.k_d)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be finite, got {v}")));
            }
        }
        check_alpha(self.alpha_i, "alpha_i")?;
        check_alpha(self.alpha_d, "alpha_d")
    }
}

impl Default for PidGains {
    fn default() -> Self {
        Self::proportional_only()
    }
}

/// Error history for each training entry, indexed by its slot (position
/// in the training set).
#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    integral: Vec<f64>,
    prev_error: Vec<f64>,
    visits: Vec<u64>,
    clamp: Option<f64>,
}

impl PidState {
    /// Unclamped state with `slots` zeroed accumulators.
    pub fn new(slots: usize) -> Self {
        Self {
            integral: vec![0.0; slots],
            prev_error: vec![0.0; slots],
            visits: vec![0; slots],
            clamp: None,
        }
    }

    /// Clamp every integral accumulator to `[-bound, bound]`.
    pub fn with_integral_clamp(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(b) = bound {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::invalid(format!(
                    "integral clamp must be > 0, got {b}"
                )));
            }
        }
        self.clamp = bound;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.integral.len()
    }

    pub fn is_empty(&self) -> bool {
        self.integral.is_empty()
    }

    pub fn integral(&self, slot: usize) -> f64 {
        self.integral[slot]
    }

    pub fn prev_error(&self, slot: usize) -> f64 {
        self.prev_error[slot]
    }

    pub fn visits(&self, slot: usize) -> u64 {
        self.visits[slot]
    }

    /// Records `e_now` for `slot` and returns the refined error
    /// `K_P·e + K_I·f(Σe, α_i) + K_D·f(e − e_prev, α_d)`.
    ///
    /// The previous error is 0 before the first visit.
    pub fn refine(&mut self, slot: usize, e_now: f64, gains: &PidGains) -> Result<f64> {
        if slot >= self.integral.len() {
            return Err(Error::InvalidSlot {
                slot,
                len: self.integral.len(),
            });
        }
        let mut integral = self.integral[slot] + e_now;
        if let Some(bound) = self.clamp {
            integral = integral.clamp(-bound, bound);
        }
        let delta = e_now - self.prev_error[slot];
        self.integral[slot] = integral;
        self.prev_error[slot] = e_now;
        self.visits[slot] += 1;
        Ok(gains.k_p * e_now
            + gains.k_i * power_sign(integral, gains.alpha_i)
            + gains.k_d * power_sign(delta, gains.alpha_d))
    }
}

/// `y − ŷ` for one observed entry.
pub fn instant_error(model: &Model, e: &Entry) -> Result<f64> {
    Ok(e.value - model.predict(e.i, e.j, e.k)?)
}

/// One plain SGD update on `e`.
pub fn sgd_step(model: &mut Model, e: &Entry, eta: f64, lambda: f64) -> Result<()> {
    let err = instant_error(model, e)?;
    apply_update(model, e, err, eta, lambda)
}

/// One PID-refined update on the training entry stored at `slot`.
#[allow(clippy::too_many_arguments)]
pub fn pid_sgd_step(
    model: &mut Model,
    state: &mut PidState,
    slot: usize,
    e: &Entry,
    eta: f64,
    lambda: f64,
    gains: &PidGains,
) -> Result<()> {
    let raw = instant_error(model, e)?;
    let refined = state.refine(slot, raw, gains)?;
    apply_update(model, e, refined, eta, lambda)
}

/// Moves every parameter touched by `e` along `err`, all reads taken from
/// the pre-update values.
fn apply_update(model: &mut Model, e: &Entry, err: f64, eta: f64, lambda: f64) -> Result<()> {
    let r = model.rank();
    let (i, j, k) = (e.i, e.j, e.k);
    let p = model.parts_mut();
    let mut diverged = false;

    let s = &mut p.s[i * r..(i + 1) * r];
    let m = &mut p.m[j * r..(j + 1) * r];
    let t = &mut p.t[k * r..(k + 1) * r];
    for ((sv, mv), tv) in s.iter_mut().zip(m.iter_mut()).zip(t.iter_mut()) {
        let (s0, m0, t0) = (*sv, *mv, *tv);
        *sv = s0 + eta * (err * m0 * t0 - lambda * s0);
        *mv = m0 + eta * (err * s0 * t0 - lambda * m0);
        *tv = t0 + eta * (err * s0 * m0 - lambda * t0);
        diverged |= !(sv.is_finite() && mv.is_finite() && tv.is_finite());
    }
    for v in [&mut p.a[i], &mut p.b[j], &mut p.c[k]] {
        *v += eta * (err - lambda * *v);
        diverged |= !v.is_finite();
    }

    if diverged {
        Err(Error::Divergence { i, j, k })
    } else {
        Ok(())
    }
}
