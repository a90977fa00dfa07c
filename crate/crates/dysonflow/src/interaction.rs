//! Pairwise-interaction kernels: the symmetric-pairing particle drift, the
//! per-gap drift written through the screening function `psi`, and the
//! resummation of gap drifts over an index interval into boundary terms.
//!
//! All window sums use compensated accumulation; distances between
//! non-adjacent indices are built by outward running sums of gaps.

use serde::{Deserialize, Serialize};

use crate::configspace::{GapConfig, KahanSum, ParticleConfig};
use crate::{DysonError, Result};

/// Interaction strength; the constructions here require `beta >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub beta: f64,
}

impl InteractionParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta >= 1.0) || !beta.is_finite() {
            return Err(DysonError::Config(format!("beta must be finite and >= 1, got {beta}")));
        }
        Ok(Self { beta })
    }
}

/// Result of a symmetric-pairing drift evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiReport {
    /// Partial sum over rings `d = 1..=rings`.
    pub value: f64,
    /// Number of rings actually summed (after clipping to the window).
    pub rings: usize,
    /// Absolute value of the final ring's contribution; a remainder proxy.
    pub last_ring: f64,
}

/// Symmetric-pairing partial sum of the repulsion drift at particle `i`:
/// rings `d = 1..=k` contribute `(1/(x_i - x_{i-d}) + 1/(x_i - x_{i+d}))/2`,
/// with a ring's missing side dropped at the window edge. `k` is clipped to
/// the window, so any large `k` (e.g. `usize::MAX`) gives the full-window
/// drift.
pub fn phi_sym(x: &ParticleConfig, i: i64, k: usize) -> Result<PhiReport> {
    let (lo, hi) = x.index_range();
    if !x.contains_index(i) {
        return Err(DysonError::OutOfWindow(format!(
            "particle {i} not in window [{lo},{hi}]"
        )));
    }
    let k_max = ((i - lo).max(hi - i)) as usize;
    let k_eff = k.min(k_max);
    let xi = x.get(i).unwrap();
    let mut acc = KahanSum::new();
    let mut last_ring = 0.0f64;
    for d in 1..=k_eff as i64 {
        let mut ring = 0.0f64;
        if let Some(xl) = x.get(i - d) {
            let dist = xi - xl;
            if dist <= 0.0 {
                return Err(DysonError::SingularDrift(i));
            }
            ring += 0.5 / dist;
        }
        if let Some(xr) = x.get(i + d) {
            let dist = xr - xi;
            if dist <= 0.0 {
                return Err(DysonError::SingularDrift(i));
            }
            ring -= 0.5 / dist;
        }
        acc.add(ring);
        last_ring = ring.abs();
    }
    Ok(PhiReport { value: acc.value(), rings: k_eff, last_ring })
}

/// Full-window symmetric drift at particle `i`.
pub fn phi_full(x: &ParticleConfig, i: i64) -> Result<f64> {
    Ok(phi_sym(x, i, usize::MAX)?.value)
}

/// Full-window drift at a particle of a gap window, computed from gap sums.
///
/// The particles of a gap window with keys `lo..=hi` are `lo..=hi+1`; the
/// distance from particle `i` to `i±d` is the running sum of the intervening
/// gaps. Rings are paired symmetrically exactly as in [`phi_sym`]. Infinite
/// distances contribute zero.
pub fn phi_from_gaps(y: &GapConfig, i: i64) -> Result<f64> {
    let (klo, khi) = y.key_range();
    let (plo, phi_) = (klo, khi + 1);
    if !(plo <= i && i <= phi_) {
        return Err(DysonError::OutOfWindow(format!(
            "particle {i} not in gap-window particle range [{plo},{phi_}]"
        )));
    }
    let k_max = (i - plo).max(phi_ - i);
    let mut acc = KahanSum::new();
    let mut dist_l = 0.0f64; // distance to particle i - d
    let mut dist_r = 0.0f64; // distance to particle i + d
    for d in 1..=k_max {
        let mut ring = 0.0f64;
        if i - d >= plo {
            dist_l += y.get_ext(i - d).expect("in range");
            if dist_l.is_finite() {
                ring += 0.5 / dist_l;
            }
        }
        if i + d <= phi_ {
            dist_r += y.get_ext(i + d - 1).expect("in range");
            if dist_r.is_finite() {
                ring -= 0.5 / dist_r;
            }
        }
        acc.add(ring);
    }
    Ok(acc.value())
}

/// Screening function for the gap at `key` (half-integer `a = key + 1/2`):
/// half the sum over window particles `i` with `|i - a| > 1` of
/// `y / (z_i (y + z_i))`, where `z_i` is the distance from the near endpoint
/// of the gap to particle `i`, measured in the configuration `z`.
///
/// `psi_a(0, ..) = 0` identically, and the function is increasing in `y` and
/// decreasing in every gap of `z`. Infinite distances contribute zero, which
/// embeds restricted windows via `+inf` boundary gaps.
pub fn psi_a(y: f64, z: &GapConfig, key: i64) -> Result<f64> {
    debug_assert!(y.is_finite() && y >= 0.0, "psi_a needs finite y >= 0, got {y}");
    if y == 0.0 {
        return Ok(0.0);
    }
    let (klo, khi) = z.key_range();
    if !(klo <= key && key <= khi) {
        return Err(DysonError::OutOfWindow(format!(
            "gap key {key} not in window [{klo},{khi}]"
        )));
    }
    let (plo, phi_) = (klo, khi + 1);
    let mut acc = KahanSum::new();
    // Left particles i <= key - 1, distances from the left endpoint (particle
    // `key`) accumulated outward.
    let mut dist = 0.0f64;
    let mut i = key - 1;
    while i >= plo {
        dist += z.get_ext(i).expect("in range");
        if dist.is_finite() {
            acc.add(y / (dist * (y + dist)));
        } else {
            break; // all further distances are +inf as well
        }
        i -= 1;
    }
    // Right particles i >= key + 2, distances from the right endpoint
    // (particle `key + 1`).
    let mut dist = 0.0f64;
    let mut i = key + 2;
    while i <= phi_ {
        dist += z.get_ext(i - 1).expect("in range");
        if dist.is_finite() {
            acc.add(y / (dist * (y + dist)));
        } else {
            break;
        }
        i += 1;
    }
    Ok(0.5 * acc.value())
}

/// Drift of the gap at `key` over its stored window:
/// `eta_a(y) = 1/y_a - psi_a(y_a, y)`, which equals the difference of the
/// full-window particle drifts at the gap's two endpoints.
pub fn eta_a(y: &GapConfig, key: i64) -> Result<f64> {
    let ya = y
        .get_ext(key)
        .ok_or_else(|| DysonError::OutOfWindow(format!("gap key {key}")))?;
    if !ya.is_finite() {
        // An infinite gap feels no drift at this truncation.
        return Ok(0.0);
    }
    if ya <= 0.0 {
        return Err(DysonError::SingularDrift(key));
    }
    Ok(1.0 / ya - psi_a(ya, y, key)?)
}

/// The two external tail pieces of the resummed lower boundary term for the
/// interval `(i1, i2)`: sums over window particles strictly outside the
/// interval of `z / (2 (z + d) d)`, with `z` the interval width and `d` the
/// distance from the interval's near endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaLwTails {
    pub plus: f64,
    pub minus: f64,
}

pub fn eta_lw_external(y: &GapConfig, i1: i64, i2: i64) -> Result<EtaLwTails> {
    if i2 <= i1 {
        return Err(DysonError::Config(format!("need i1 < i2, got ({i1},{i2})")));
    }
    let (klo, khi) = y.key_range();
    let (plo, phi_) = (klo, khi + 1);
    if i1 < plo || i2 > phi_ {
        return Err(DysonError::OutOfWindow(format!(
            "interval ({i1},{i2}) exceeds particle range [{plo},{phi_}]"
        )));
    }
    let z = y.gap_sum(i1, i2)?;
    if !z.is_finite() {
        return Ok(EtaLwTails { plus: 0.0, minus: 0.0 });
    }
    let mut plus = KahanSum::new();
    let mut dist = 0.0f64;
    let mut i = i2 + 1;
    while i <= phi_ {
        dist += y.get_ext(i - 1).expect("in range");
        if dist.is_finite() {
            plus.add(z / (2.0 * (z + dist) * dist));
        } else {
            break;
        }
        i += 1;
    }
    let mut minus = KahanSum::new();
    let mut dist = 0.0f64;
    let mut i = i1 - 1;
    while i >= plo {
        dist += y.get_ext(i).expect("in range");
        if dist.is_finite() {
            minus.add(z / (2.0 * (z + dist) * dist));
        } else {
            break;
        }
        i -= 1;
    }
    Ok(EtaLwTails { plus: plus.value(), minus: minus.value() })
}

/// Resummation of gap drifts over an interval into boundary terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaSumReport {
    /// Direct sum of `eta_a` over half-integers `a` in `(i1, i2)`.
    pub lhs: f64,
    /// Upper boundary term: nearest-distance reciprocals to both endpoints.
    pub up: f64,
    /// Lower boundary term: the two external tails of [`eta_lw_external`].
    pub lw: f64,
}

/// Evaluate both sides of the interval resummation identity
/// `sum_a eta_a = up - lw` on the stored window. The two sides are computed
/// by structurally different summations; they agree to rounding error.
pub fn eta_window_sum(y: &GapConfig, i1: i64, i2: i64) -> Result<EtaSumReport> {
    if i2 <= i1 {
        return Err(DysonError::Config(format!("need i1 < i2, got ({i1},{i2})")));
    }
    let mut lhs = KahanSum::new();
    for key in i1..i2 {
        lhs.add(eta_a(y, key)?);
    }

    // Upper term: sum over particles i in (i1, i2] of 1/(2 y_(i1,i)) plus
    // sum over i in [i1, i2) of 1/(2 y_(i,i2)), accumulated outward from the
    // near endpoint so each distance is a fresh running sum.
    let mut up = KahanSum::new();
    let mut dist = 0.0f64;
    for i in (i1 + 1)..=i2 {
        dist += y
            .get_ext(i - 1)
            .ok_or_else(|| DysonError::OutOfWindow(format!("gap key {} in eta_window_sum", i - 1)))?;
        if dist.is_finite() {
            up.add(0.5 / dist);
        }
    }
    let mut dist = 0.0f64;
    for i in ((i1)..i2).rev() {
        dist += y
            .get_ext(i)
            .ok_or_else(|| DysonError::OutOfWindow(format!("gap key {i} in eta_window_sum")))?;
        if dist.is_finite() {
            up.add(0.5 / dist);
        }
    }

    let tails = eta_lw_external(y, i1, i2)?;
    Ok(EtaSumReport { lhs: lhs.value(), up: up.value(), lw: tails.plus + tails.minus })
}
