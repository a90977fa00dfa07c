//! Constructive monotone iteration for the gap system: a Bessel seed stage,
//! then successive stages solving per-gap scalar SDEs screened by the frozen
//! previous stage, producing a decreasing ladder whose pointwise limit is
//! approximated by a Cauchy stopping rule. Initial data can be truncated from
//! below at a level `gamma` to study the truncation ladder.

use rayon::prelude::*;
use serde::Serialize;

use crate::configspace::GapConfig;
use crate::interaction::{psi_a, InteractionParams};
use crate::sde::{
    step_bessel, step_one_d, steps_for, NoiseSource, PathBundle, PathStates, SchemeSpec,
};
use crate::{DysonError, Result};

/// Comparison slack granted to discrete trajectories, in units of `dt`.
pub const TOL_CMP_STEPS: f64 = 10.0;

/// Default convergence threshold for the stage ladder's sup-norm differences.
pub const DEFAULT_EPS: f64 = 1e-3;

/// State of the stage ladder: all computed stage paths share one seed, one
/// grid, and one window, and are decreasing in the stage index up to the
/// scheme tolerance.
#[derive(Debug, Clone)]
pub struct IterationState {
    /// Index of the newest completed stage (`paths.len() - 1`).
    pub stage: u32,
    /// One bundle per stage, each recorded at every grid step.
    pub paths: Vec<PathBundle>,
    /// Truncation level applied to the initial data (`y ∨ gamma`).
    pub gamma: f64,
    /// Truncated initial data shared by every stage.
    pub y_in: GapConfig,
    pub seed: u64,
    pub t_end: f64,
}

fn truncate_initial(y_in: &GapConfig, gamma: f64) -> GapConfig {
    let gaps = y_in
        .gaps
        .iter()
        .map(|y| if y.is_finite() { y.max(gamma) } else { *y })
        .collect();
    GapConfig { offset: y_in.offset, gaps, infinite_outside: y_in.infinite_outside }
}

impl IterationState {
    /// Fresh ladder with no stages computed yet; the initial data is
    /// truncated to `y ∨ gamma` entrywise.
    pub fn new(y_in: &GapConfig, gamma: f64, seed: u64, t_end: f64) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(DysonError::Config(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(t_end > 0.0) {
            return Err(DysonError::Config(format!("t_end must be positive, got {t_end}")));
        }
        Ok(Self {
            stage: 0,
            paths: Vec::new(),
            gamma,
            y_in: truncate_initial(y_in, gamma),
            seed,
            t_end,
        })
    }
}

/// Compute the next stage of the ladder. With no stages present this builds
/// the seed stage: per gap, a Bessel path started at the (truncated) initial
/// value, using the gap's own noise stream. Later stages solve, per gap `a`,
/// the scalar SDE with force `-beta * psi_a(y, Y_prev(t))`, the previous
/// stage entering as a piecewise-constant left-point field on the same grid
/// and noise.
pub fn iterate_stage(
    state: &IterationState,
    params: &InteractionParams,
    spec: &SchemeSpec,
) -> Result<IterationState> {
    spec.validate()?;
    let n_steps = steps_for(state.t_end, spec.dt)? as usize;
    let (klo, khi) = state.y_in.key_range();
    let nk = state.y_in.len();
    let noise = NoiseSource::new(state.seed);
    let prev = state.paths.last();
    if let Some(p) = prev {
        if p.times.len() != n_steps + 1 {
            return Err(DysonError::Config(format!(
                "previous stage grid has {} points, expected {}",
                p.times.len(),
                n_steps + 1
            )));
        }
    }

    let series: Result<Vec<Vec<f64>>> = (0..nk)
        .into_par_iter()
        .map(|k| {
            let key = klo + k as i64;
            let y0 = state.y_in.gaps[k];
            let mut out = Vec::with_capacity(n_steps + 1);
            out.push(y0);
            if !y0.is_finite() {
                out.resize(n_steps + 1, f64::INFINITY);
                return Ok(out);
            }
            let mut y = y0;
            for n in 0..n_steps {
                y = match prev {
                    None => step_bessel(y, params, spec, &noise, key, n as u64)?,
                    Some(p) => {
                        let zcfg = p.gaps_at(n)?;
                        let force = |yv: f64| {
                            -params.beta * psi_a(yv, zcfg, key).expect("stage windows align")
                        };
                        step_one_d(y, &force, params, spec, &noise, key, n as u64)?
                    }
                };
                out.push(y);
            }
            Ok(out)
        })
        .collect();
    let series = series?;

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    for t_idx in 0..=n_steps {
        times.push(t_idx as f64 * spec.dt);
        let gaps: Vec<f64> = (0..nk).map(|k| series[k][t_idx]).collect();
        states.push(GapConfig {
            offset: klo,
            gaps,
            infinite_outside: state.y_in.infinite_outside,
        });
    }
    let bundle = PathBundle {
        times,
        states: PathStates::Gaps(states),
        seed: state.seed,
        window: (klo, khi),
    };

    let mut next = state.clone();
    next.paths.push(bundle);
    next.stage = (next.paths.len() - 1) as u32;
    Ok(next)
}

/// Report on the decreasing-ladder invariant.
#[derive(Debug, Clone, Serialize)]
pub struct DecreasingReport {
    /// Largest positive excess of a stage over its predecessor.
    pub max_violation: f64,
    pub worst_stage_pair: (u32, u32),
    pub worst_key: i64,
    pub worst_time: f64,
    pub pass: bool,
}

/// Maximal violation of `Y^(k+1) <= Y^(k)` over all consecutive stage pairs,
/// gaps, and grid times; passes iff it is at most `tol`.
pub fn check_decreasing(state: &IterationState, tol: f64) -> Result<DecreasingReport> {
    if state.paths.len() < 2 {
        return Err(DysonError::Config("need at least two stages to compare".into()));
    }
    let mut rep = DecreasingReport {
        max_violation: 0.0,
        worst_stage_pair: (0, 1),
        worst_key: 0,
        worst_time: 0.0,
        pass: true,
    };
    for s in 0..state.paths.len() - 1 {
        let (a, b) = (&state.paths[s], &state.paths[s + 1]);
        for t_idx in 0..a.times.len() {
            let (ga, gb) = (a.gaps_at(t_idx)?, b.gaps_at(t_idx)?);
            for k in 0..ga.gaps.len() {
                let (va, vb) = (ga.gaps[k], gb.gaps[k]);
                if !va.is_finite() || !vb.is_finite() {
                    continue;
                }
                let excess = vb - va;
                if excess > rep.max_violation {
                    rep.max_violation = excess;
                    rep.worst_stage_pair = (s as u32, s as u32 + 1);
                    rep.worst_key = ga.offset + k as i64;
                    rep.worst_time = a.times[t_idx];
                }
            }
        }
    }
    rep.pass = rep.max_violation <= tol;
    Ok(rep)
}

/// Sup-norm over the shared grid of the (finite) entrywise difference of two
/// stage bundles.
pub fn stage_sup_diff(a: &PathBundle, b: &PathBundle) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(DysonError::Config("stage grids differ".into()));
    }
    let mut sup = 0.0f64;
    for t_idx in 0..a.times.len() {
        let (ga, gb) = (a.gaps_at(t_idx)?, b.gaps_at(t_idx)?);
        for k in 0..ga.gaps.len() {
            let (va, vb) = (ga.gaps[k], gb.gaps[k]);
            if va.is_finite() && vb.is_finite() {
                sup = sup.max((va - vb).abs());
            }
        }
    }
    Ok(sup)
}

/// Result of running the ladder to its stopping rule.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    /// The newest stage path: the limit surrogate.
    pub path: PathBundle,
    /// Index of the newest computed stage.
    pub stages_used: u32,
    /// Sup-norm gap between the last two stages (distance to convergence).
    pub final_diff: f64,
    /// The whole sequence of consecutive-stage sup differences.
    pub diffs: Vec<f64>,
    pub converged: bool,
}

/// Run stages until the consecutive sup-norm difference drops to `eps` or
/// `n_max` stages have been computed. A stage rising above its predecessor
/// by more than the scheme tolerance `10*dt` aborts with an
/// invariant-violation error (that indicates a bug or far-too-coarse dt, not
/// a data problem).
#[allow(clippy::too_many_arguments)]
pub fn iterate_to_tolerance(
    y_in: &GapConfig,
    gamma: f64,
    n_max: u32,
    eps: f64,
    params: &InteractionParams,
    spec: &SchemeSpec,
    seed: u64,
    t_end: f64,
) -> Result<IterationOutcome> {
    if !(eps > 0.0) {
        return Err(DysonError::Config(format!("eps must be positive, got {eps}")));
    }
    if n_max < 1 {
        return Err(DysonError::Config("n_max must be at least 1".into()));
    }
    let tol_cmp = TOL_CMP_STEPS * spec.dt;
    let mut state = IterationState::new(y_in, gamma, seed, t_end)?;
    state = iterate_stage(&state, params, spec)?;
    let mut diffs = Vec::new();
    let mut converged = false;
    for _n in 1..=n_max {
        state = iterate_stage(&state, params, spec)?;
        let m = state.paths.len();
        let (prev, last) = (&state.paths[m - 2], &state.paths[m - 1]);
        let diff = stage_sup_diff(prev, last)?;
        diffs.push(diff);
        let rep = check_decreasing(&state, tol_cmp)?;
        if !rep.pass {
            return Err(DysonError::InvariantViolation(format!(
                "stage {} exceeds stage {} by {:.3e} (> {:.1e}) at key {} t={}",
                rep.worst_stage_pair.1,
                rep.worst_stage_pair.0,
                rep.max_violation,
                tol_cmp,
                rep.worst_key,
                rep.worst_time
            )));
        }
        if diff <= eps {
            converged = true;
            break;
        }
        // Only the newest two stages are needed from here on; drop older
        // bundles to keep long ladders lean (the report already captured
        // their ordering).
        if state.paths.len() > 2 {
            state.paths.drain(0..state.paths.len() - 2);
        }
    }
    let path = state.paths.last().unwrap().clone();
    Ok(IterationOutcome {
        path,
        stages_used: state.stage,
        final_diff: *diffs.last().unwrap(),
        diffs,
        converged,
    })
}

/// The standard truncation ladder `gamma_k = 2^{-k}`, `k = 1..=k_max`.
pub fn gamma_ladder(k_max: u32) -> Vec<f64> {
    (1..=k_max).map(|k| 2f64.powi(-(k as i32))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::SchemeSpec;

    fn spec(dt: f64) -> SchemeSpec {
        SchemeSpec { dt, ..SchemeSpec::default() }
    }

    fn lattice(klo: i64, khi: i64, v: f64) -> GapConfig {
        GapConfig::constant(klo, khi, v)
    }

    #[test]
    fn stage_zero_is_offset_bessel_per_gap() {
        let y_in = GapConfig::new(-2, vec![0.6, 1.1, 0.9, 1.4, 0.7], false).unwrap();
        let params = InteractionParams::new(1.5).unwrap();
        let sp = spec(1e-3);
        let st = IterationState::new(&y_in, 0.0, 77, 0.05).unwrap();
        let st = iterate_stage(&st, &params, &sp).unwrap();
        assert_eq!(st.stage, 0);
        let noise = NoiseSource::new(77);
        for (k, y0) in y_in.gaps.iter().enumerate() {
            let key = y_in.offset + k as i64;
            let mut q = *y0;
            for n in 0..50u64 {
                q = step_bessel(q, &params, &sp, &noise, key, n).unwrap();
            }
            let path_end = st.paths[0].final_gaps().unwrap().gaps[k];
            assert_eq!(path_end.to_bits(), q.to_bits(), "gap {key}");
        }
    }

    #[test]
    fn degenerate_window_makes_stage_one_identical() {
        // A single gap has no screening particles at all, so stage 1's force
        // vanishes identically and the code reduces to the Bessel stage.
        let y_in = GapConfig::new(3, vec![0.8], false).unwrap();
        let params = InteractionParams::new(2.0).unwrap();
        let sp = spec(1e-3);
        let mut st = IterationState::new(&y_in, 0.0, 5, 0.1).unwrap();
        st = iterate_stage(&st, &params, &sp).unwrap();
        st = iterate_stage(&st, &params, &sp).unwrap();
        let d = stage_sup_diff(&st.paths[0], &st.paths[1]).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn ladder_is_decreasing_on_the_lattice() {
        let y_in = lattice(-16, 16, 1.0);
        let params = InteractionParams::new(1.0).unwrap();
        let sp = spec(1e-3);
        let mut st = IterationState::new(&y_in, 0.0, 2024, 0.25).unwrap();
        for _ in 0..3 {
            st = iterate_stage(&st, &params, &sp).unwrap();
        }
        let rep = check_decreasing(&st, TOL_CMP_STEPS * sp.dt).unwrap();
        assert!(rep.pass, "violation {rep:?}");
        // The ladder genuinely moves: stage 1 sits strictly below stage 0
        // somewhere (screening only reduces gaps).
        let d01 = stage_sup_diff(&st.paths[0], &st.paths[1]).unwrap();
        assert!(d01 > 1e-4, "screening had no effect ({d01})");
    }

    #[test]
    fn initial_data_monotonicity_propagates_stagewise() {
        let hi_in = lattice(-8, 8, 1.0);
        let lo_in = lattice(-8, 8, 0.8);
        let params = InteractionParams::new(1.0).unwrap();
        let sp = spec(1e-3);
        let tol = TOL_CMP_STEPS * sp.dt;
        let mut hi = IterationState::new(&hi_in, 0.0, 31, 0.1).unwrap();
        let mut lo = IterationState::new(&lo_in, 0.0, 31, 0.1).unwrap();
        for _ in 0..2 {
            hi = iterate_stage(&hi, &params, &sp).unwrap();
            lo = iterate_stage(&lo, &params, &sp).unwrap();
        }
        for s in 0..2 {
            for t_idx in 0..hi.paths[s].times.len() {
                let gh = hi.paths[s].gaps_at(t_idx).unwrap();
                let gl = lo.paths[s].gaps_at(t_idx).unwrap();
                for k in 0..gh.gaps.len() {
                    assert!(
                        gl.gaps[k] <= gh.gaps[k] + tol,
                        "stage {s} t {t_idx} gap {k}: {} > {}",
                        gl.gaps[k],
                        gh.gaps[k]
                    );
                }
            }
        }
    }

    #[test]
    fn huge_eps_returns_after_stage_one() {
        let y_in = lattice(-4, 4, 1.0);
        let params = InteractionParams::new(1.0).unwrap();
        let sp = spec(1e-3);
        let out = iterate_to_tolerance(&y_in, 0.0, 5, 1e9, &params, &sp, 9, 0.02).unwrap();
        assert_eq!(out.stages_used, 1);
        assert!(out.converged);
        assert_eq!(out.diffs.len(), 1);
    }

    #[test]
    fn consecutive_diffs_decrease_at_desk_scale() {
        let y_in = lattice(-10, 10, 1.0);
        let params = InteractionParams::new(1.0).unwrap();
        let sp = spec(1e-3);
        let out = iterate_to_tolerance(&y_in, 0.0, 4, 1e-12, &params, &sp, 500, 0.1).unwrap();
        assert_eq!(out.diffs.len(), 4);
        for w in out.diffs.windows(2) {
            assert!(w[1] <= w[0] * 1.05 + 1e-12, "diffs not decreasing: {:?}", out.diffs);
        }
        assert!(out.diffs.last().unwrap() < &out.diffs[0]);
        // Positivity of the limit surrogate across the whole grid.
        for t_idx in 0..out.path.times.len() {
            let g = out.path.gaps_at(t_idx).unwrap();
            assert!(g.gaps.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn gamma_ladder_orders_limit_surrogates() {
        let y_in = GapConfig::new(-5, vec![0.1, 0.9, 0.3, 1.2, 0.2, 0.7, 0.4, 1.0, 0.15, 0.6], false)
            .unwrap();
        let params = InteractionParams::new(1.0).unwrap();
        let sp = spec(1e-3);
        let tol = TOL_CMP_STEPS * sp.dt;
        let hi = iterate_to_tolerance(&y_in, 0.5, 2, 1e-12, &params, &sp, 88, 0.05).unwrap();
        let lo = iterate_to_tolerance(&y_in, 0.25, 2, 1e-12, &params, &sp, 88, 0.05).unwrap();
        for t_idx in 0..hi.path.times.len() {
            let gh = hi.path.gaps_at(t_idx).unwrap();
            let gl = lo.path.gaps_at(t_idx).unwrap();
            for k in 0..gh.gaps.len() {
                assert!(gl.gaps[k] <= gh.gaps[k] + tol);
            }
        }
    }

    #[test]
    fn gamma_ladder_values() {
        assert_eq!(gamma_ladder(3), vec![0.5, 0.25, 0.125]);
    }

    #[test]
    fn decoupled_seeds_flagged_by_the_report() {
        // Stages computed under different seeds are not coupled; splice such
        // a pair into one state and the report must fail it.
        let y_in = lattice(-6, 6, 0.5);
        let params = InteractionParams::new(1.0).unwrap();
        let sp = spec(1e-3);
        let a = iterate_stage(&IterationState::new(&y_in, 0.0, 1, 0.05).unwrap(), &params, &sp)
            .unwrap();
        let b = iterate_stage(&IterationState::new(&y_in, 0.0, 2, 0.05).unwrap(), &params, &sp)
            .unwrap();
        let mut spliced = a.clone();
        spliced.paths.push(b.paths[0].clone());
        let rep = check_decreasing(&spliced, TOL_CMP_STEPS * sp.dt).unwrap();
        assert!(!rep.pass, "decoupled stages slipped through: {rep:?}");
    }

    #[test]
    fn truncation_applies_to_initial_data() {
        let y_in = GapConfig::new(0, vec![0.01, 2.0, f64::INFINITY], true).unwrap();
        let st = IterationState::new(&y_in, 0.5, 1, 0.01).unwrap();
        assert_eq!(st.y_in.gaps, vec![0.5, 2.0, f64::INFINITY]);
    }
}
