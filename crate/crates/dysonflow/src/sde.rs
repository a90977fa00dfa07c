//! Positivity-preserving integrators for the interacting particle window, the
//! gap window with external forces, scalar repulsion SDEs, and the Bessel
//! process — all driven by a deterministic counter-based noise source so that
//! separate runs can be coupled pathwise.
//!
//! The scheme is a Lie splitting: noise and all non-singular drift enter
//! explicitly, then the `beta/y` repulsion is resolved implicitly per
//! coordinate through the positive root of `y^2 - b*y - beta*h = 0`, which is
//! unconditionally positive. If any gap lands below `substep_floor`, the step
//! is redone as two half steps (recursively, up to `max_substep_depth`) using
//! Brownian-bridge refinements of the same increments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configspace::{GapConfig, ParticleConfig};
use crate::interaction::{phi_from_gaps, psi_a, InteractionParams};
use crate::{DysonError, Result};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_SUBSTEP_FLOOR: f64 = 1e-4;
pub const DEFAULT_MAX_SUBSTEP_DEPTH: u32 = 12;

/// Keys per explicit-phase batch below this length are processed serially.
const PAR_THRESHOLD: usize = 64;

const TAG_PARTICLE: u64 = 0xD15C_0001;
const TAG_BRIDGE: u64 = 0xD15C_0002;
/// Tag for caller-defined auxiliary streams (oracle sampling etc.).
pub const TAG_GENERIC: u64 = 0xD15C_0003;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn combine(h: u64, v: u64) -> u64 {
    mix64(h.rotate_left(23) ^ v.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Deterministic Gaussian increment streams keyed by `(seed, index, step)`.
///
/// Every value is a pure function of the key — independent of window size,
/// thread count, and evaluation order — so coupled runs that share a seed
/// see identical driving noise on common indices. Gap noise is always the
/// difference of the two adjacent particle streams, never sampled fresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSource {
    pub seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Standard normal keyed by `(seed, tag, a, b, c)`.
    pub fn normal(&self, tag: u64, a: u64, b: u64, c: u64) -> f64 {
        let mut h = mix64(self.seed ^ tag.wrapping_mul(0x2545_f491_4f6c_dd1d));
        h = combine(h, a);
        h = combine(h, b);
        h = combine(h, c);
        let h2 = mix64(h ^ 0x5851_f42d_4c95_7f2d);
        let u1 = ((h >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0);
        let u2 = (h2 >> 11) as f64 * (1.0 / 9007199254740992.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Brownian increment of particle `i` over step `n` of length `dt`.
    pub fn particle_increment(&self, i: i64, step: u64, dt: f64) -> f64 {
        dt.sqrt() * self.normal(TAG_PARTICLE, i as u64, step, 0)
    }
}

/// Increment provider used by the steppers. `(depth, node)` addresses the
/// dyadic subinterval `[node, node+1] * dt/2^depth` of step `n`; refinements
/// are Brownian-bridge conditioned so the two halves of any subinterval sum
/// back to it (up to rounding).
pub trait Noise: Sync {
    fn particle(&self, i: i64, step: u64, depth: u32, node: u64, dt_step: f64) -> f64;

    fn gap(&self, key: i64, step: u64, depth: u32, node: u64, dt_step: f64) -> f64 {
        self.particle(key + 1, step, depth, node, dt_step)
            - self.particle(key, step, depth, node, dt_step)
    }
}

impl Noise for NoiseSource {
    fn particle(&self, i: i64, step: u64, depth: u32, node: u64, dt_step: f64) -> f64 {
        if depth == 0 {
            return self.particle_increment(i, step, dt_step);
        }
        let parent = self.particle(i, step, depth - 1, node >> 1, dt_step);
        let h_parent = dt_step / (1u64 << (depth - 1)) as f64;
        let z = self.normal(
            TAG_BRIDGE,
            i as u64,
            step,
            ((depth as u64) << 56) | (node >> 1),
        );
        let w = 0.5 * h_parent.sqrt() * z;
        if node & 1 == 0 {
            0.5 * parent + w
        } else {
            0.5 * parent - w
        }
    }
}

/// Identically-zero noise, for deterministic ODE cross-checks.
pub struct ZeroNoise;

impl Noise for ZeroNoise {
    fn particle(&self, _i: i64, _step: u64, _depth: u32, _node: u64, _dt: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    ImplicitRepulsionSplitting,
    TamedExplicit,
}

/// Time-stepping parameters shared by all integrators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub dt: f64,
    pub scheme: SchemeKind,
    /// A step leaving any gap below this triggers a redo as two half steps.
    pub substep_floor: f64,
    pub max_substep_depth: u32,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            scheme: SchemeKind::ImplicitRepulsionSplitting,
            substep_floor: DEFAULT_SUBSTEP_FLOOR,
            max_substep_depth: DEFAULT_MAX_SUBSTEP_DEPTH,
        }
    }
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            bad.push(format!("dt must be a positive real, got {}", self.dt));
        }
        if !(self.substep_floor >= 0.0) || !self.substep_floor.is_finite() {
            bad.push(format!("substep_floor must be >= 0, got {}", self.substep_floor));
        }
        if self.max_substep_depth > 40 {
            bad.push(format!("max_substep_depth must be <= 40, got {}", self.max_substep_depth));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DysonError::Validation(bad))
        }
    }
}

/// Positive root of `y^2 - b*y - c = 0` for `c > 0`, evaluated stably for
/// either sign of `b`.
#[inline]
fn positive_root(b: f64, c: f64) -> f64 {
    debug_assert!(c > 0.0);
    let disc = (b * b + 4.0 * c).sqrt();
    if b >= 0.0 {
        0.5 * (b + disc)
    } else {
        2.0 * c / (disc - b)
    }
}

#[derive(Clone, Copy)]
struct StepCtx<'a> {
    beta: f64,
    spec: &'a SchemeSpec,
    noise: &'a dyn Noise,
    step: u64,
    /// Refinement depth forced regardless of the floor rule (self-convergence
    /// studies); 0 in normal operation.
    min_depth: u32,
}

fn min_finite_gap(g: &[f64]) -> f64 {
    g.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min)
}

/// One explicit+implicit attempt of length `h` for the whole gap window.
fn gap_candidate(y: &GapConfig, z_ext: &[f64], dw: &[f64], h: f64, ctx: &StepCtx) -> Result<Vec<f64>> {
    let one = |k: usize| -> Result<f64> {
        let ya = y.gaps[k];
        if !ya.is_finite() {
            return Ok(f64::INFINITY);
        }
        let key = y.offset + k as i64;
        let psi = psi_a(ya, y, key)?;
        match ctx.spec.scheme {
            SchemeKind::ImplicitRepulsionSplitting => {
                let b = ya + dw[k] + h * ctx.beta * (ya * z_ext[k] - psi);
                Ok(positive_root(b, ctx.beta * h))
            }
            SchemeKind::TamedExplicit => {
                let d = ctx.beta * (1.0 / ya - psi + ya * z_ext[k]);
                let tamed = d / (1.0 + h * d.abs());
                Ok(ya + dw[k] + h * tamed)
            }
        }
    };
    if y.gaps.len() >= PAR_THRESHOLD {
        (0..y.gaps.len()).into_par_iter().map(one).collect()
    } else {
        (0..y.gaps.len()).map(one).collect()
    }
}

fn candidate_needs_refinement(cand: &[f64], ctx: &StepCtx) -> bool {
    let broken = cand.iter().any(|v| v.is_nan() || *v <= 0.0);
    broken || min_finite_gap(cand) < ctx.spec.substep_floor
}

fn candidate_is_broken(cand: &[f64]) -> bool {
    cand.iter().any(|v| v.is_nan() || *v <= 0.0)
}

fn advance_gap_window(
    y: &GapConfig,
    z_ext: &[f64],
    depth: u32,
    node: u64,
    h: f64,
    ctx: &StepCtx,
) -> Result<GapConfig> {
    let candidate = if depth < ctx.min_depth {
        None
    } else {
        let dw: Vec<f64> = (0..y.gaps.len())
            .map(|k| ctx.noise.gap(y.offset + k as i64, ctx.step, depth, node, ctx.spec.dt))
            .collect();
        Some(gap_candidate(y, z_ext, &dw, h, ctx)?)
    };
    let refine = match &candidate {
        None => true,
        Some(c) => candidate_needs_refinement(c, ctx),
    };
    if refine {
        if depth >= ctx.spec.max_substep_depth {
            // Implicit output is positive even below the floor: accept it.
            match candidate {
                Some(c) if !candidate_is_broken(&c) => {
                    return Ok(GapConfig {
                        offset: y.offset,
                        gaps: c,
                        infinite_outside: y.infinite_outside,
                    })
                }
                _ => {
                    return Err(DysonError::Stability {
                        step: ctx.step,
                        detail: format!(
                            "gap window not positive at substep depth {depth} (min gap {:.3e})",
                            min_finite_gap(&y.gaps)
                        ),
                    })
                }
            }
        }
        let half = advance_gap_window(y, z_ext, depth + 1, 2 * node, h / 2.0, ctx)?;
        return advance_gap_window(&half, z_ext, depth + 1, 2 * node + 1, h / 2.0, ctx);
    }
    Ok(GapConfig {
        offset: y.offset,
        gaps: candidate.unwrap(),
        infinite_outside: y.infinite_outside,
    })
}

/// Anchored window: one tracked particle position plus the gap window, the
/// internal representation used to step a particle configuration.
#[derive(Debug, Clone)]
struct Anchored {
    idx: i64,
    pos: f64,
    gaps: GapConfig,
}

fn advance_anchored(
    a: &Anchored,
    z_zero: &[f64],
    depth: u32,
    node: u64,
    h: f64,
    ctx: &StepCtx,
) -> Result<Anchored> {
    let candidate = if depth < ctx.min_depth {
        None
    } else {
        let dw: Vec<f64> = (0..a.gaps.gaps.len())
            .map(|k| ctx.noise.gap(a.gaps.offset + k as i64, ctx.step, depth, node, ctx.spec.dt))
            .collect();
        let gaps = gap_candidate(&a.gaps, z_zero, &dw, h, ctx)?;
        let db = ctx.noise.particle(a.idx, ctx.step, depth, node, ctx.spec.dt);
        let drift = phi_from_gaps(&a.gaps, a.idx)?;
        let pos = a.pos + db + h * ctx.beta * drift;
        Some((pos, gaps))
    };
    let refine = match &candidate {
        None => true,
        Some((_, c)) => candidate_needs_refinement(c, ctx),
    };
    if refine {
        if depth >= ctx.spec.max_substep_depth {
            match candidate {
                Some((pos, c)) if !candidate_is_broken(&c) => {
                    return Ok(Anchored {
                        idx: a.idx,
                        pos,
                        gaps: GapConfig {
                            offset: a.gaps.offset,
                            gaps: c,
                            infinite_outside: a.gaps.infinite_outside,
                        },
                    })
                }
                _ => {
                    return Err(DysonError::Stability {
                        step: ctx.step,
                        detail: format!("particle ordering lost at substep depth {depth}"),
                    })
                }
            }
        }
        let half = advance_anchored(a, z_zero, depth + 1, 2 * node, h / 2.0, ctx)?;
        return advance_anchored(&half, z_zero, depth + 1, 2 * node + 1, h / 2.0, ctx);
    }
    let (pos, gaps) = candidate.unwrap();
    Ok(Anchored {
        idx: a.idx,
        pos,
        gaps: GapConfig {
            offset: a.gaps.offset,
            gaps,
            infinite_outside: a.gaps.infinite_outside,
        },
    })
}

fn anchored_from_particles(x: &ParticleConfig) -> Anchored {
    let (lo, hi) = x.index_range();
    let idx = if lo <= 0 && 0 <= hi {
        0
    } else if hi < 0 {
        hi
    } else {
        lo
    };
    let gaps: Vec<f64> = x.positions.windows(2).map(|w| w[1] - w[0]).collect();
    Anchored {
        idx,
        pos: x.get(idx).unwrap(),
        gaps: GapConfig { offset: lo, gaps, infinite_outside: false },
    }
}

fn particles_from_anchored(a: &Anchored) -> ParticleConfig {
    let n = a.gaps.gaps.len() + 1;
    let lo = a.gaps.offset;
    let mut positions = vec![0.0; n];
    let pivot = (a.idx - lo) as usize;
    positions[pivot] = a.pos;
    for k in pivot..n - 1 {
        positions[k + 1] = positions[k] + a.gaps.gaps[k];
    }
    for k in (0..pivot).rev() {
        positions[k] = positions[k + 1] - a.gaps.gaps[k];
    }
    ParticleConfig { offset: lo, positions }
}

/// One time step of the interacting particle window: every particle moves by
/// its own Brownian increment plus `beta` times the symmetric window drift.
/// Internally the gaps are advanced by the splitting scheme and re-anchored
/// through the tracked particle's own explicit equation, so particle and gap
/// simulations are algebraically consistent.
pub fn step_particles(
    x: &ParticleConfig,
    params: &InteractionParams,
    spec: &SchemeSpec,
    noise: &dyn Noise,
    n: u64,
) -> Result<ParticleConfig> {
    spec.validate()?;
    if x.len() == 1 {
        let pos = x.positions[0] + noise.particle(x.offset, n, 0, 0, spec.dt);
        return Ok(ParticleConfig { offset: x.offset, positions: vec![pos] });
    }
    let a = anchored_from_particles(x);
    let z_zero = vec![0.0; a.gaps.gaps.len()];
    let ctx = StepCtx { beta: params.beta, spec, noise, step: n, min_depth: 0 };
    let out = advance_anchored(&a, &z_zero, 0, 0, spec.dt, &ctx)?;
    Ok(particles_from_anchored(&out))
}

/// One time step of the gap window with external forces:
/// `Y_a <- Y_a + dW_a + beta (eta_a(Y) + Y_a Z*_a) dt`, `Z*` held at its
/// step-start value. Output gaps are strictly positive.
pub fn step_gaps(
    y: &GapConfig,
    z_ext: &[f64],
    params: &InteractionParams,
    spec: &SchemeSpec,
    noise: &dyn Noise,
    n: u64,
) -> Result<GapConfig> {
    spec.validate()?;
    if z_ext.len() != y.gaps.len() {
        return Err(DysonError::Config(format!(
            "external force vector has {} entries for {} gaps",
            z_ext.len(),
            y.gaps.len()
        )));
    }
    if z_ext.iter().any(|z| !z.is_finite()) {
        return Err(DysonError::Config("external forces must be finite".into()));
    }
    let ctx = StepCtx { beta: params.beta, spec, noise, step: n, min_depth: 0 };
    advance_gap_window(y, z_ext, 0, 0, spec.dt, &ctx)
}

fn advance_scalar(
    y: f64,
    force: &dyn Fn(f64) -> f64,
    stream: i64,
    depth: u32,
    node: u64,
    h: f64,
    ctx: &StepCtx,
) -> Result<f64> {
    let candidate = if depth < ctx.min_depth {
        None
    } else {
        let dw = ctx.noise.gap(stream, ctx.step, depth, node, ctx.spec.dt);
        let cand = match ctx.spec.scheme {
            SchemeKind::ImplicitRepulsionSplitting => {
                let b = y + dw + h * force(y);
                positive_root(b, ctx.beta * h)
            }
            SchemeKind::TamedExplicit => {
                if y <= 0.0 {
                    return Err(DysonError::Config(
                        "tamed-explicit scheme needs a strictly positive state".into(),
                    ));
                }
                let d = ctx.beta / y + force(y);
                let tamed = d / (1.0 + h * d.abs());
                y + dw + h * tamed
            }
        };
        Some(cand)
    };
    let refine = match candidate {
        None => true,
        Some(c) => c.is_nan() || c <= 0.0 || c < ctx.spec.substep_floor,
    };
    if refine {
        if depth >= ctx.spec.max_substep_depth {
            match candidate {
                Some(c) if c > 0.0 => return Ok(c),
                _ => {
                    return Err(DysonError::Stability {
                        step: ctx.step,
                        detail: format!("scalar state not positive at substep depth {depth}"),
                    })
                }
            }
        }
        let half = advance_scalar(y, force, stream, depth + 1, 2 * node, h / 2.0, ctx)?;
        return advance_scalar(half, force, stream, depth + 1, 2 * node + 1, h / 2.0, ctx);
    }
    Ok(candidate.unwrap())
}

/// One time step of the scalar SDE `Y <- Y + dW_a + (beta/Y + F(Y)) dt`,
/// where `dW_a` is the gap noise of stream `a`. `F` must vanish at 0 and be
/// locally Lipschitz (caller contract); time dependence is expressed by
/// passing a fresh closure each step. Positivity is preserved by the
/// implicit repulsion root.
pub fn step_one_d(
    yval: f64,
    force: &dyn Fn(f64) -> f64,
    params: &InteractionParams,
    spec: &SchemeSpec,
    noise: &dyn Noise,
    stream: i64,
    n: u64,
) -> Result<f64> {
    spec.validate()?;
    if !(yval > 0.0) || !yval.is_finite() {
        return Err(DysonError::Config(format!("step_one_d needs yval > 0, got {yval}")));
    }
    let ctx = StepCtx { beta: params.beta, spec, noise, step: n, min_depth: 0 };
    advance_scalar(yval, force, stream, 0, 0, spec.dt, &ctx)
}

/// One time step of the Bessel-type process `Q <- Q + dW_a + (beta/Q) dt`,
/// allowing `q = 0` (the implicit root is positive from the first step on).
pub fn step_bessel(
    q: f64,
    params: &InteractionParams,
    spec: &SchemeSpec,
    noise: &dyn Noise,
    stream: i64,
    n: u64,
) -> Result<f64> {
    spec.validate()?;
    if !(q >= 0.0) || !q.is_finite() {
        return Err(DysonError::Config(format!("step_bessel needs q >= 0, got {q}")));
    }
    let ctx = StepCtx { beta: params.beta, spec, noise, step: n, min_depth: 0 };
    advance_scalar_allow_zero(q, stream, &ctx, spec.dt)
}

fn advance_scalar_allow_zero(q: f64, stream: i64, ctx: &StepCtx, h: f64) -> Result<f64> {
    match ctx.spec.scheme {
        SchemeKind::ImplicitRepulsionSplitting => {
            // No explicit force: a single implicit resolution is always
            // positive, so the floor rule applies as in advance_scalar but a
            // zero start is allowed.
            advance_scalar_from(q, stream, 0, 0, h, ctx)
        }
        SchemeKind::TamedExplicit => {
            if q == 0.0 {
                return Err(DysonError::Config(
                    "tamed-explicit scheme cannot start a Bessel step at 0".into(),
                ));
            }
            advance_scalar(q, &|_| 0.0, stream, 0, 0, h, ctx)
        }
    }
}

fn advance_scalar_from(q: f64, stream: i64, depth: u32, node: u64, h: f64, ctx: &StepCtx) -> Result<f64> {
    let dw = ctx.noise.gap(stream, ctx.step, depth, node, ctx.spec.dt);
    let cand = positive_root(q + dw, ctx.beta * h);
    let refine = cand < ctx.spec.substep_floor && depth < ctx.spec.max_substep_depth;
    if refine {
        let half = advance_scalar_from(q, stream, depth + 1, 2 * node, h / 2.0, ctx)?;
        return advance_scalar_from(half, stream, depth + 1, 2 * node + 1, h / 2.0, ctx);
    }
    Ok(cand)
}

/// Resolved simulation plan (the CLI translates its run specification into
/// this before calling [`simulate`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimPlan {
    pub params: InteractionParams,
    pub scheme: SchemeSpec,
    pub seed: u64,
    pub t_end: f64,
    /// Record every this-many steps (initial and final states always kept).
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Constant external force applied to every gap (gap runs only).
    #[serde(default)]
    pub z_const: f64,
}

fn default_stride() -> usize {
    1
}

/// Number of whole steps covering `t_end`; errors unless `t_end` is an
/// integer multiple of `dt` (up to 1e-9 relative slack).
pub fn steps_for(t_end: f64, dt: f64) -> Result<u64> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(DysonError::Config(format!("t_end must be positive, got {t_end}")));
    }
    let n = (t_end / dt).round();
    if n < 1.0 || (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(DysonError::Config(format!(
            "t_end = {t_end} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(n as u64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PathStates {
    Particles(Vec<ParticleConfig>),
    Gaps(Vec<GapConfig>),
}

/// A time-gridded trajectory together with its noise provenance, sufficient
/// to re-derive the driving increments of any index it covers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub states: PathStates,
    pub seed: u64,
    /// Index range covered: particle indices, or gap keys for gap bundles.
    pub window: (i64, i64),
}

impl PathBundle {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn gaps_at(&self, t_idx: usize) -> Result<&GapConfig> {
        match &self.states {
            PathStates::Gaps(v) => v.get(t_idx).ok_or_else(|| {
                DysonError::Config(format!("time index {t_idx} beyond grid of {}", v.len()))
            }),
            PathStates::Particles(_) => {
                Err(DysonError::Config("bundle holds particle states, not gaps".into()))
            }
        }
    }

    pub fn particles_at(&self, t_idx: usize) -> Result<&ParticleConfig> {
        match &self.states {
            PathStates::Particles(v) => v.get(t_idx).ok_or_else(|| {
                DysonError::Config(format!("time index {t_idx} beyond grid of {}", v.len()))
            }),
            PathStates::Gaps(_) => {
                Err(DysonError::Config("bundle holds gap states, not particles".into()))
            }
        }
    }

    pub fn final_gaps(&self) -> Result<&GapConfig> {
        self.gaps_at(self.times.len() - 1)
    }

    pub fn final_particles(&self) -> Result<&ParticleConfig> {
        self.particles_at(self.times.len() - 1)
    }

    /// Long-form CSV: one `time,index,value` row per stored coordinate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,index,value\n");
        for (ti, t) in self.times.iter().enumerate() {
            match &self.states {
                PathStates::Particles(v) => {
                    let s = &v[ti];
                    for (k, x) in s.positions.iter().enumerate() {
                        out.push_str(&format!("{},{},{}\n", t, s.offset + k as i64, x));
                    }
                }
                PathStates::Gaps(v) => {
                    let s = &v[ti];
                    for (k, y) in s.gaps.iter().enumerate() {
                        let val = if y.is_finite() { format!("{y}") } else { "inf".into() };
                        out.push_str(&format!("{},{},{}\n", t, s.offset + k as i64, val));
                    }
                }
            }
        }
        out
    }
}

/// Initial state for [`simulate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum WindowInit {
    Particles(ParticleConfig),
    Gaps(GapConfig),
}

/// Advance the initial window to `t_end` on the plan's grid, recording states
/// every `record_stride` steps. Deterministic given `(seed, plan, initial)`.
pub fn simulate(plan: &SimPlan, init: &WindowInit) -> Result<PathBundle> {
    plan.scheme.validate()?;
    let n_steps = steps_for(plan.t_end, plan.scheme.dt)?;
    let noise = NoiseSource::new(plan.seed);
    let stride = plan.record_stride.max(1);
    match init {
        WindowInit::Particles(x0) => {
            let mut state = x0.clone();
            let mut times = vec![0.0];
            let mut states = vec![state.clone()];
            for n in 0..n_steps {
                state = step_particles(&state, &plan.params, &plan.scheme, &noise, n)?;
                if (n + 1) % stride as u64 == 0 || n + 1 == n_steps {
                    times.push((n + 1) as f64 * plan.scheme.dt);
                    states.push(state.clone());
                }
            }
            let window = x0.index_range();
            Ok(PathBundle { times, states: PathStates::Particles(states), seed: plan.seed, window })
        }
        WindowInit::Gaps(y0) => {
            let z = vec![plan.z_const; y0.gaps.len()];
            let mut state = y0.clone();
            let mut times = vec![0.0];
            let mut states = vec![state.clone()];
            for n in 0..n_steps {
                state = step_gaps(&state, &z, &plan.params, &plan.scheme, &noise, n)?;
                if (n + 1) % stride as u64 == 0 || n + 1 == n_steps {
                    times.push((n + 1) as f64 * plan.scheme.dt);
                    states.push(state.clone());
                }
            }
            let window = y0.key_range();
            Ok(PathBundle { times, states: PathStates::Gaps(states), seed: plan.seed, window })
        }
    }
}

/// Endpoint discrepancies between runs at forced refinement depths and a
/// deeper reference run, for the strong self-convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub h_values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Least-squares slope of log2(error) against log2(h).
    pub slope: f64,
}

pub fn self_convergence_study(
    init: &GapConfig,
    params: &InteractionParams,
    spec: &SchemeSpec,
    noise: &NoiseSource,
    n_steps: u64,
    depths: &[u32],
    ref_depth: u32,
) -> Result<ConvergenceStudy> {
    spec.validate()?;
    let run = |depth: u32| -> Result<GapConfig> {
        let ctx = StepCtx { beta: params.beta, spec, noise, step: 0, min_depth: depth };
        let z = vec![0.0; init.gaps.len()];
        let mut state = init.clone();
        for n in 0..n_steps {
            let ctx = StepCtx { step: n, ..ctx };
            state = advance_gap_window(&state, &z, 0, 0, spec.dt, &ctx)?;
        }
        Ok(state)
    };
    let reference = run(ref_depth)?;
    let mut h_values = Vec::new();
    let mut errors = Vec::new();
    for &d in depths {
        let end = run(d)?;
        let err = end
            .gaps
            .iter()
            .zip(&reference.gaps)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        h_values.push(spec.dt / (1u64 << d) as f64);
        errors.push(err);
    }
    let logs: Vec<(f64, f64)> = h_values
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > 0.0)
        .map(|(h, e)| (h.log2(), e.log2()))
        .collect();
    let slope = if logs.len() >= 2 {
        let n = logs.len() as f64;
        let mx = logs.iter().map(|(x, _)| x).sum::<f64>() / n;
        let my = logs.iter().map(|(_, y)| y).sum::<f64>() / n;
        let num: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
        let den: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
        num / den
    } else {
        f64::NAN
    };
    Ok(ConvergenceStudy { h_values, errors, slope })
}
