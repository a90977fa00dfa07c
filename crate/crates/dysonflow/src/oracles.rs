//! Independent ground truths for the simulators: eigenvalue dynamics of
//! symmetric/Hermitian matrix diffusions (beta = 1, 2), Monte Carlo moments
//! of the running maximum of the Bessel process, a bulk-spectrum surrogate
//! sampler normalized to unit density, and membership statistics for
//! decay/regularity hypotheses.
//!
//! Everything here is derived by routes independent of the gap integrators:
//! matrix marginals are exact in law at any step size (Gaussian entries add),
//! eigenvalues come from a cyclic Jacobi solver or Sturm bisection on
//! tridiagonals, and all randomness flows through the same counter-based
//! source as the simulators but under distinct stream tags.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::configspace::{ParticleConfig, SpaceParams};
use crate::interaction::InteractionParams;
use crate::sde::{step_bessel, steps_for, NoiseSource, SchemeKind, SchemeSpec};
use crate::{DysonError, Result};

const TAG_MATRIX: u64 = 0xD15C_2001;
const TAG_TRIDIAG: u64 = 0xD15C_2002;
const TAG_CHI: u64 = 0xD15C_2003;
const TAG_CHI3: u64 = 0xD15C_2004;

/// Specification of a matrix-diffusion run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixEnsembleSpec {
    /// 1 = real symmetric class, 2 = Hermitian class.
    pub beta: u8,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl MatrixEnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.beta != 1 && self.beta != 2 {
            bad.push(format!("matrix class needs beta in {{1,2}}, got {}", self.beta));
        }
        if self.n == 0 || self.n > 64 {
            bad.push(format!("matrix size must be in 1..=64, got {}", self.n));
        }
        if !(self.dt > 0.0) {
            bad.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0) {
            bad.push(format!("t_end must be positive, got {}", self.t_end));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(DysonError::Validation(bad))
        }
    }
}

/// Sorted eigenvalues per grid time of one matrix-diffusion replica.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixTrajectory {
    pub times: Vec<f64>,
    pub spectra: Vec<Vec<f64>>,
    pub n: usize,
    pub beta: u8,
}

impl MatrixTrajectory {
    /// Same long-form schema as simulator paths: `time,index,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,index,value\n");
        for (ti, t) in self.times.iter().enumerate() {
            for (k, v) in self.spectra[ti].iter().enumerate() {
                out.push_str(&format!("{t},{k},{v}\n"));
            }
        }
        out
    }
}

/// Counter-based stream with a private draw counter, so normal and uniform
/// variates never reuse a key.
struct CounterRng<'a> {
    ns: &'a NoiseSource,
    tag: u64,
    a: u64,
    b: u64,
    ctr: u64,
}

impl<'a> CounterRng<'a> {
    fn new(ns: &'a NoiseSource, tag: u64, a: u64, b: u64) -> Self {
        Self { ns, tag, a, b, ctr: 0 }
    }

    fn normal(&mut self) -> f64 {
        let c = self.ctr;
        self.ctr += 1;
        self.ns.normal(self.tag, self.a, self.b, c)
    }

    fn uniform(&mut self) -> f64 {
        let c = self.ctr;
        self.ctr += 1;
        self.ns.uniform(self.tag, self.a, self.b, c)
    }
}

/// Marsaglia–Tsang sampler for Gamma(shape, 1), shape >= 1.
fn gamma_sample(rng: &mut CounterRng, shape: f64) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u = rng.uniform();
        if u.ln() < 0.5 * x * x + d - d * v3 + d * v3.ln() {
            return d * v3;
        }
    }
}

/// Cyclic Jacobi diagonalization of a symmetric matrix. Returns ascending
/// eigenvalues and, on request, the matching orthonormal eigenvectors as
/// columns.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>, want_vectors: bool) -> (Vec<f64>, Option<Vec<Vec<f64>>>) {
    let n = a.len();
    let mut v = if want_vectors {
        let mut id = vec![vec![0.0; n]; n];
        for (i, row) in id.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Some(id)
    } else {
        None
    };
    let frob: f64 = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    if frob > 0.0 {
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
                .map(|(p, q)| a[p][q] * a[p][q])
                .sum::<f64>()
                .sqrt();
            if off <= 1e-14 * frob {
                break;
            }
            for p in 0..n - 1 {
                for q in p + 1..n {
                    let apq = a[p][q];
                    if apq.abs() <= 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                    let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                    let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    let tau = s / (1.0 + c);
                    a[p][p] -= t * apq;
                    a[q][q] += t * apq;
                    a[p][q] = 0.0;
                    a[q][p] = 0.0;
                    for k in 0..n {
                        if k != p && k != q {
                            let akp = a[k][p];
                            let akq = a[k][q];
                            a[k][p] = akp - s * (akq + tau * akp);
                            a[p][k] = a[k][p];
                            a[k][q] = akq + s * (akp - tau * akq);
                            a[q][k] = a[k][q];
                        }
                    }
                    if let Some(vm) = v.as_mut() {
                        for row in vm.iter_mut() {
                            let vkp = row[p];
                            let vkq = row[q];
                            row[p] = vkp - s * (vkq + tau * vkp);
                            row[q] = vkq + s * (vkp - tau * vkq);
                        }
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let eigs: Vec<f64> = order.iter().map(|&i| a[i][i]).collect();
    let vecs = v.map(|vm| {
        let mut out = vec![vec![0.0; n]; n];
        for (new_col, &old_col) in order.iter().enumerate() {
            for k in 0..n {
                out[k][new_col] = vm[k][old_col];
            }
        }
        out
    });
    (eigs, vecs)
}

fn embed_hermitian(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = a[i][j];
            m[i + n][j + n] = a[i][j];
            m[i][j + n] = -b[i][j];
            m[i + n][j] = b[i][j];
        }
    }
    m
}

/// Evolve a matrix diffusion from the given initial spectrum (as a diagonal
/// matrix; zero when absent) and return its sorted eigenvalues at every grid
/// time. Entry increments are independent Gaussians with diagonal variance
/// `dt` and off-diagonal variance `dt/2` per real component, which makes the
/// eigenvalue dynamics match the particle SDE at the corresponding beta.
/// The time-t marginal is exact in law for any dt (Gaussian increments add).
pub fn matrix_dbm_sample(
    spec: &MatrixEnsembleSpec,
    replica: u64,
    init_diag: Option<&[f64]>,
) -> Result<MatrixTrajectory> {
    spec.validate()?;
    let n = spec.n;
    if let Some(d) = init_diag {
        if d.len() != n {
            return Err(DysonError::Config(format!(
                "initial spectrum has {} entries for size {n}",
                d.len()
            )));
        }
    }
    let n_steps = steps_for(spec.t_end, spec.dt)?;
    let ns = NoiseSource::new(spec.seed);
    let mut a = vec![vec![0.0f64; n]; n];
    if let Some(d) = init_diag {
        for (i, x) in d.iter().enumerate() {
            a[i][i] = *x;
        }
    }
    let mut bm = vec![vec![0.0f64; n]; n]; // imaginary part (beta = 2 only)
    let sdt = spec.dt.sqrt();
    let off = (spec.dt / 2.0).sqrt();

    let eigs_of = |a: &Vec<Vec<f64>>, bm: &Vec<Vec<f64>>| -> Vec<f64> {
        if spec.beta == 1 {
            jacobi_eigen(a.clone(), false).0
        } else {
            let m = embed_hermitian(a, bm);
            let doubled = jacobi_eigen(m, false).0;
            (0..n).map(|k| 0.5 * (doubled[2 * k] + doubled[2 * k + 1])).collect()
        }
    };

    let mut times = vec![0.0];
    let mut spectra = vec![eigs_of(&a, &bm)];
    for step in 0..n_steps {
        for i in 0..n {
            let g = ns.normal(TAG_MATRIX, replica, step, (i as u64) << 20 | (i as u64) << 8);
            a[i][i] += sdt * g;
            for j in (i + 1)..n {
                let key = (i as u64) << 20 | (j as u64) << 8;
                let gr = ns.normal(TAG_MATRIX, replica, step, key);
                a[i][j] += off * gr;
                a[j][i] = a[i][j];
                if spec.beta == 2 {
                    let gi = ns.normal(TAG_MATRIX, replica, step, key | 1);
                    bm[i][j] += off * gi;
                    bm[j][i] = -bm[i][j];
                }
            }
        }
        times.push((step + 1) as f64 * spec.dt);
        let e = eigs_of(&a, &bm);
        debug_assert!(e.windows(2).all(|w| w[0] <= w[1]));
        spectra.push(e);
    }
    Ok(MatrixTrajectory { times, spectra, n, beta: spec.beta })
}

/// One Monte Carlo entry of the running-max moment table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselMomentEntry {
    pub t: f64,
    pub p: f64,
    pub estimate: f64,
    pub ci_half_width: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BesselMomentTable {
    pub entries: Vec<BesselMomentEntry>,
}

impl BesselMomentTable {
    /// Check that estimates increase along t for fixed p and along p for
    /// fixed t, within the combined confidence slack.
    pub fn is_monotone(&self) -> bool {
        for x in &self.entries {
            for y in &self.entries {
                let slack = x.ci_half_width + y.ci_half_width;
                if x.p == y.p && x.t < y.t && x.estimate > y.estimate + slack {
                    return false;
                }
                if x.t == y.t && x.p < y.p && x.estimate > y.estimate + slack {
                    return false;
                }
            }
        }
        true
    }
}

/// Number of grid steps used per Bessel oracle path. Fixed so that horizons
/// t and 4t are simulated on scaled copies of the same grid, under which the
/// implicit scheme is exactly covariant (no discretization bias in ratios).
pub const BESSEL_ORACLE_STEPS: u64 = 512;

fn bessel_sup_samples(
    t: f64,
    samples: u64,
    params: &InteractionParams,
    seed: u64,
) -> Result<Vec<f64>> {
    let dt = t / BESSEL_ORACLE_STEPS as f64;
    let spec = SchemeSpec {
        dt,
        scheme: SchemeKind::ImplicitRepulsionSplitting,
        substep_floor: 0.0,
        max_substep_depth: 0,
    };
    let ns = NoiseSource::new(seed);
    (0..samples)
        .into_par_iter()
        .map(|r| {
            // Gap stream 2r uses particle streams 2r and 2r+1: replicas are
            // independent because the particle streams never overlap.
            let stream = (2 * r) as i64;
            let mut q = 0.0f64;
            let mut sup = 0.0f64;
            for n in 0..BESSEL_ORACLE_STEPS {
                q = step_bessel(q, params, &spec, &ns, stream, n)?;
                if q > sup {
                    sup = q;
                }
            }
            Ok(sup)
        })
        .collect()
}

/// Monte Carlo estimate of the p-th moment of the running maximum of the
/// Bessel process started at 0, over the horizon `[0, t]`, with a normal
/// 95% confidence half-width.
pub fn q_estimate(
    t: f64,
    p: f64,
    samples: u64,
    params: &InteractionParams,
    seed: u64,
) -> Result<BesselMomentEntry> {
    if !(t > 0.0) {
        return Err(DysonError::Config(format!("q_estimate needs t > 0, got {t}")));
    }
    if samples < 1000 {
        return Err(DysonError::Config(format!(
            "q_estimate needs at least 1000 samples, got {samples}"
        )));
    }
    let sups = bessel_sup_samples(t, samples, params, seed)?;
    let vals: Vec<f64> = sups.iter().map(|s| s.powf(p)).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(BesselMomentEntry {
        t,
        p,
        estimate: mean,
        ci_half_width: 1.96 * (var / n).sqrt(),
        samples,
    })
}

/// Result of inverting `t -> q(t, p)` at a target level.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauSolve {
    pub tau: f64,
    pub value: f64,
    pub target: f64,
    pub residual: f64,
    pub ci_half_width: f64,
    pub iterations: u32,
}

/// Bisection solve of `q(tau, p) = target` using common random numbers (one
/// seed for every trial horizon), under which the Monte Carlo map t -> q̂(t,p)
/// is exactly increasing and the bisection residual shrinks below the CI.
pub fn solve_tau(
    target: f64,
    p: f64,
    samples: u64,
    params: &InteractionParams,
    seed: u64,
) -> Result<TauSolve> {
    if !(target > 0.0) {
        return Err(DysonError::Config(format!("target must be positive, got {target}")));
    }
    let q_at = |t: f64| q_estimate(t, p, samples, params, seed);
    let mut lo = 1e-9f64;
    let mut hi = 1.0f64;
    let mut iterations = 0u32;
    while q_at(hi)?.estimate < target {
        hi *= 4.0;
        iterations += 1;
        if hi > 1e12 {
            return Err(DysonError::Config(format!(
                "target {target} unreachable below horizon 1e12"
            )));
        }
    }
    for _ in 0..48 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if q_at(mid)?.estimate < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let entry = q_at(tau)?;
    Ok(TauSolve {
        tau,
        value: entry.estimate,
        target,
        residual: (entry.estimate - target).abs(),
        ci_half_width: entry.ci_half_width,
        iterations,
    })
}

fn sturm_count(d: &[f64], b: &[f64], x: f64) -> usize {
    let mut count = 0usize;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for k in 1..d.len() {
        let denom = if q == 0.0 { 1e-300 } else { q };
        q = d[k] - x - b[k - 1] * b[k - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn tridiag_eigenvalue(d: &[f64], b: &[f64], k: usize, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(d, b, mid) >= k + 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Bulk-spectrum surrogate sample with unit mean density: eigenvalues of a
/// tridiagonal representative of the Hermitian-class ensemble, restricted to
/// a central spectral window, rescaled by the center semicircle density, and
/// re-indexed so that particle 0 is the first at a nonnegative position.
///
/// This is a surrogate for the translation-invariant bulk point process, not
/// an exact kernel sampler; the statistics probed here only need bulk
/// behavior at desk scale.
pub fn sine_like_sample(n: usize, window: f64, seed: u64, replica: u64) -> Result<ParticleConfig> {
    if !(window > 0.0) || !window.is_finite() {
        return Err(DysonError::Config(format!("window must be positive, got {window}")));
    }
    if n > 1 << 14 {
        return Err(DysonError::Config(format!("matrix size {n} beyond desk scale")));
    }
    if (n as f64) < 16.0 * window {
        return Err(DysonError::Coverage(format!(
            "need n >= 16*window to stay in the bulk (n = {n}, window = {window})"
        )));
    }
    let ns = NoiseSource::new(seed);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        d.push(ns.normal(TAG_TRIDIAG, replica, i as u64, 0));
    }
    let mut b = Vec::with_capacity(n - 1);
    for k in 1..n {
        let mut rng = CounterRng::new(&ns, TAG_CHI, replica, k as u64);
        b.push(gamma_sample(&mut rng, (n - k) as f64).sqrt());
    }
    // Center density of the size-n semicircle is sqrt(n)/pi; positions are
    // eigenvalues rescaled to unit density, kept while |pos| <= window/2.
    let density = (n as f64).sqrt() / std::f64::consts::PI;
    let lam_w = 0.5 * window / density;
    let k_lo = sturm_count(&d, &b, -lam_w);
    let k_hi = sturm_count(&d, &b, lam_w);
    if k_hi <= k_lo {
        return Err(DysonError::Coverage(format!(
            "no eigenvalues inside the window (replica {replica})"
        )));
    }
    let mut positions = Vec::with_capacity(k_hi - k_lo);
    for k in k_lo..k_hi {
        let lam = tridiag_eigenvalue(&d, &b, k, -lam_w, lam_w);
        positions.push(lam * density);
    }
    positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
    positions.dedup_by(|a, b| a == b);
    let negatives = positions.iter().filter(|x| **x < 0.0).count() as i64;
    ParticleConfig::new(-negatives, positions)
}

/// The two finite-window membership statistics of a point sample.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SineMembership {
    /// sup over r of |N([0,r]) - |r|| * |r|^(alpha-1), both signs of r,
    /// evaluated at the jump points where the supremum is attained.
    pub xsp: f64,
    /// sup over integer m <= m_used of the average p-th power of the gaps
    /// lying entirely inside [0, m].
    pub rsp: f64,
    pub m_used: i64,
    pub n_particles: usize,
}

fn one_sided_xsp(sorted_abs: &[f64], alpha: f64) -> f64 {
    let mut sup = 0.0f64;
    for (k, &x) in sorted_abs.iter().enumerate() {
        if x == 0.0 {
            // A particle exactly at the origin makes the statistic infinite
            // by definition (the counting jump sits where the weight blows
            // up); samplers hit this with probability zero.
            return f64::INFINITY;
        }
        let w = x.powf(alpha - 1.0);
        let left = (k as f64 - x).abs() * w;
        let right = ((k + 1) as f64 - x).abs() * w;
        sup = sup.max(left).max(right);
    }
    sup
}

pub fn membership_stats_sine(
    sample: &ParticleConfig,
    params: &SpaceParams,
    m_max: i64,
) -> Result<SineMembership> {
    if !(params.alpha > 0.0 && params.alpha < 0.5) {
        return Err(DysonError::Config(format!(
            "this statistic requires alpha in (0, 1/2), got {}",
            params.alpha
        )));
    }
    if m_max < 1 {
        return Err(DysonError::Config(format!("m_max must be >= 1, got {m_max}")));
    }
    let mut nonneg: Vec<f64> = sample.positions.iter().copied().filter(|x| *x >= 0.0).collect();
    let mut neg_abs: Vec<f64> =
        sample.positions.iter().copied().filter(|x| *x < 0.0).map(f64::abs).collect();
    nonneg.sort_by(|a, b| a.partial_cmp(b).unwrap());
    neg_abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let xsp = one_sided_xsp(&nonneg, params.alpha).max(one_sided_xsp(&neg_abs, params.alpha));

    let covered = nonneg.last().copied().unwrap_or(0.0).floor() as i64;
    let m_used = m_max.min(covered);
    let mut rsp = 0.0f64;
    for m in 1..=m_used {
        let mf = m as f64;
        let mut sum = 0.0;
        let mut count = 0usize;
        for w in nonneg.windows(2) {
            if w[1] <= mf {
                sum += (w[1] - w[0]).powf(params.p);
                count += 1;
            }
        }
        if count > 0 {
            rsp = rsp.max(sum / count as f64);
        }
    }
    Ok(SineMembership { xsp, rsp, m_used, n_particles: sample.positions.len() })
}

/// Empirical variance of the count N([0, L]) across replicas, per L.
pub fn sine_number_variance(
    n: usize,
    window: f64,
    l_values: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let counts: Result<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = sine_like_sample(n, window, seed, r)?;
            Ok(l_values
                .iter()
                .map(|l| s.positions.iter().filter(|x| **x >= 0.0 && **x <= *l).count() as f64)
                .collect())
        })
        .collect();
    let counts = counts?;
    let m = replicas as f64;
    let mut out = Vec::with_capacity(l_values.len());
    for (j, l) in l_values.iter().enumerate() {
        let mean = counts.iter().map(|c| c[j]).sum::<f64>() / m;
        let var = counts.iter().map(|c| (c[j] - mean) * (c[j] - mean)).sum::<f64>() / (m - 1.0);
        out.push((*l, var));
    }
    Ok(out)
}

/// Empirical exponential moment of the gap straddling the origin.
pub fn sine_gap_exp_moment(
    n: usize,
    window: f64,
    gamma: f64,
    replicas: u64,
    seed: u64,
) -> Result<f64> {
    let vals: Result<Vec<f64>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = sine_like_sample(n, window, seed, r)?;
            let right = s.positions.iter().copied().find(|x| *x >= 0.0);
            let left = s.positions.iter().rev().copied().find(|x| *x < 0.0);
            match (left, right) {
                (Some(l), Some(rr)) => Ok((gamma * (rr - l)).exp()),
                _ => Err(DysonError::Coverage(format!(
                    "origin gap not covered in replica {r}"
                ))),
            }
        })
        .collect();
    let vals = vals?;
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    xb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xa.len() && j < xb.len() {
        if xa[i] <= xb[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Result of comparing simulator spectra against the matrix oracle.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CrossValidation {
    pub ks: f64,
    pub sde_samples: usize,
    pub matrix_samples: usize,
}

/// Pool the time-t particle positions of `replicas` simulator runs against
/// the time-t eigenvalues of `replicas` matrix-diffusion runs started from
/// the same (lattice) spectrum, and return the KS distance between the two
/// pooled empirical distributions.
pub fn matrix_sde_cross_validation(
    beta: u8,
    n: usize,
    t: f64,
    dt_sde: f64,
    replicas: u64,
    seed: u64,
    spacing: f64,
) -> Result<CrossValidation> {
    use crate::sde::{simulate, SimPlan, WindowInit};
    if !(spacing > 0.0) {
        return Err(DysonError::Config(format!("spacing must be positive, got {spacing}")));
    }
    let offset = -(n as i64 / 2);
    let positions: Vec<f64> =
        (0..n).map(|i| (i as f64 - (n as f64 - 1.0) / 2.0) * spacing).collect();
    let init = ParticleConfig::new(offset, positions.clone())?;

    let sde_pool: Result<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let plan = SimPlan {
                params: InteractionParams::new(beta as f64)?,
                scheme: SchemeSpec { dt: dt_sde, ..SchemeSpec::default() },
                seed: seed.wrapping_add(1 + r),
                t_end: t,
                record_stride: usize::MAX,
                z_const: 0.0,
            };
            let bundle = simulate(&plan, &WindowInit::Particles(init.clone()))?;
            Ok(bundle.final_particles()?.positions.clone())
        })
        .collect();
    let sde_pool: Vec<f64> = sde_pool?.into_iter().flatten().collect();

    let matrix_pool: Result<Vec<Vec<f64>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            // The matrix marginal is exact in law at any step count, so a
            // single step to time t suffices.
            let mspec = MatrixEnsembleSpec { beta, n, dt: t, t_end: t, seed };
            let traj = matrix_dbm_sample(&mspec, r, Some(&positions))?;
            Ok(traj.spectra.last().unwrap().clone())
        })
        .collect();
    let matrix_pool: Vec<f64> = matrix_pool?.into_iter().flatten().collect();

    Ok(CrossValidation {
        ks: ks_statistic(&sde_pool, &matrix_pool),
        sde_samples: sde_pool.len(),
        matrix_samples: matrix_pool.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_solves_random_symmetric_matrices() {
        let ns = NoiseSource::new(1);
        let n = 12;
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let g = ns.normal(TAG_GENERIC_TEST, i as u64, j as u64, 0);
                a[i][j] = g;
                a[j][i] = g;
            }
        }
        let frob: f64 = a.iter().flat_map(|r| r.iter()).map(|x| x * x).sum::<f64>().sqrt();
        let (eigs, vecs) = jacobi_eigen(a.clone(), true);
        let v = vecs.unwrap();
        assert!(eigs.windows(2).all(|w| w[0] <= w[1]));
        // Residual ||A v_k - lambda_k v_k|| per column.
        for k in 0..n {
            let mut res = 0.0f64;
            for i in 0..n {
                let av: f64 = (0..n).map(|j| a[i][j] * v[j][k]).sum();
                res += (av - eigs[k] * v[i][k]).powi(2);
            }
            assert!(res.sqrt() <= 1e-10 * frob, "column {k}: residual {}", res.sqrt());
        }
        // Trace preserved.
        let tr: f64 = (0..n).map(|i| a[i][i]).sum();
        assert!((eigs.iter().sum::<f64>() - tr).abs() < 1e-9 * frob.max(1.0));
    }

    const TAG_GENERIC_TEST: u64 = 0xD15C_9999;

    #[test]
    fn hermitian_embedding_doubles_real_spectra() {
        let a = vec![
            vec![1.0, 0.3, -0.2],
            vec![0.3, -0.5, 0.7],
            vec![-0.2, 0.7, 2.0],
        ];
        let b = vec![vec![0.0; 3]; 3];
        let m = embed_hermitian(&a, &b);
        let (e2, _) = jacobi_eigen(m, false);
        let (e1, _) = jacobi_eigen(a, false);
        for k in 0..3 {
            assert!((e2[2 * k] - e1[k]).abs() < 1e-10);
            assert!((e2[2 * k + 1] - e1[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_matrix_has_zero_spectrum_at_time_zero() {
        let spec = MatrixEnsembleSpec { beta: 2, n: 6, dt: 0.1, t_end: 0.1, seed: 3 };
        let traj = matrix_dbm_sample(&spec, 0, None).unwrap();
        assert_eq!(traj.times[0], 0.0);
        assert!(traj.spectra[0].iter().all(|v| *v == 0.0));
        assert_eq!(traj.spectra.len(), 2);
    }

    #[test]
    fn two_by_two_gap_matches_closed_form() {
        // From H(0) = 0 at beta = 2, the time-t eigenvalue gap is
        // sqrt(2t) * chi_3 (three iid normal coordinates in quadrature).
        let t = 0.5;
        let reps = 4000u64;
        let spec = MatrixEnsembleSpec { beta: 2, n: 2, dt: t, t_end: t, seed: 10 };
        let gaps: Vec<f64> = (0..reps)
            .map(|r| {
                let traj = matrix_dbm_sample(&spec, r, None).unwrap();
                let s = traj.spectra.last().unwrap();
                s[1] - s[0]
            })
            .collect();
        let ns = NoiseSource::new(77);
        let reference: Vec<f64> = (0..reps)
            .map(|r| {
                let a = ns.normal(TAG_CHI3, r, 0, 0);
                let b = ns.normal(TAG_CHI3, r, 1, 0);
                let c = ns.normal(TAG_CHI3, r, 2, 0);
                (2.0 * t).sqrt() * (a * a + b * b + c * c).sqrt()
            })
            .collect();
        let d = ks_statistic(&gaps, &reference);
        assert!(d < 0.05, "KS distance {d}");
    }

    #[test]
    fn rejects_bad_matrix_specs() {
        let bad = MatrixEnsembleSpec { beta: 3, n: 100, dt: -1.0, t_end: 0.0, seed: 0 };
        match bad.validate() {
            Err(DysonError::Validation(v)) => assert_eq!(v.len(), 4),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn q_monotone_in_horizon_and_power() {
        let params = InteractionParams::new(1.0).unwrap();
        let mut table = BesselMomentTable::default();
        for (t, p) in [(0.25, 1.0), (0.5, 1.0), (1.0, 1.0), (0.5, 2.0), (1.0, 2.0)] {
            table.entries.push(q_estimate(t, p, 3000, &params, 5).unwrap());
        }
        assert!(table.is_monotone(), "{table:?}");
        assert!(table.entries.iter().all(|e| e.estimate.is_finite()));
    }

    #[test]
    fn running_max_scales_like_brownian_motion() {
        // Independent seeds on the two sides: with a shared seed the ratio
        // would be exactly 2 by the scheme's scaling covariance, which would
        // test nothing statistical.
        let params = InteractionParams::new(1.0).unwrap();
        let t = 0.25;
        let q1 = q_estimate(t, 1.0, 25_000, &params, 101).unwrap();
        let q4 = q_estimate(4.0 * t, 1.0, 25_000, &params, 202).unwrap();
        let ratio = q4.estimate / q1.estimate;
        assert!((ratio - 2.0).abs() < 0.04, "ratio {ratio}");
    }

    #[test]
    fn tau_bisection_hits_target_within_ci() {
        let params = InteractionParams::new(1.0).unwrap();
        let rho = 8.0;
        let target = rho / 400.0;
        let sol = solve_tau(target, 1.0, 2000, &params, 11).unwrap();
        assert!(sol.tau > 0.0);
        assert!(
            sol.residual <= sol.ci_half_width.max(1e-3 * target),
            "residual {} vs ci {}",
            sol.residual,
            sol.ci_half_width
        );
    }

    #[test]
    fn sine_sampler_covers_window_at_unit_density() {
        let window = 12.0;
        let n = 256;
        let mut avg = 0.0;
        let reps = 40u64;
        for r in 0..reps {
            let s = sine_like_sample(n, window, 999, r).unwrap();
            // Unit density: about `window` particles in the window.
            let count = s.positions.len() as f64;
            avg += count / window;
            assert!(s.positions.windows(2).all(|w| w[0] < w[1]));
            assert!(s.get(0).map(|x| x >= 0.0).unwrap_or(false));
            assert!(s.get(-1).map(|x| x < 0.0).unwrap_or(true));
        }
        avg /= reps as f64;
        assert!((avg - 1.0).abs() < 0.1, "mean density {avg}");
    }

    #[test]
    fn sine_sampler_rejects_thin_matrices() {
        assert!(matches!(
            sine_like_sample(64, 32.0, 1, 0),
            Err(DysonError::Coverage(_))
        ));
    }

    #[test]
    fn lattice_xsp_stays_below_one() {
        let positions: Vec<f64> = (-20..20).map(|i| i as f64 + 0.5).collect();
        let x = ParticleConfig::new(-20, positions).unwrap();
        let params = SpaceParams::new(0.3, 1.0, 2.0, 0.5).unwrap();
        let rep = membership_stats_sine(&x, &params, 10).unwrap();
        assert!(rep.xsp <= 1.0, "xsp {}", rep.xsp);
        assert!(rep.rsp > 0.0);
        assert_eq!(rep.m_used, 10);
    }

    #[test]
    fn alpha_gate_enforced() {
        let x = ParticleConfig::lattice(-5, 5, 1.0);
        let params = SpaceParams::new(0.6, 1.0, 2.0, 0.5).unwrap();
        assert!(membership_stats_sine(&x, &params, 4).is_err());
    }

    #[test]
    fn membership_stats_stable_across_replicas() {
        let params = SpaceParams::new(0.4, 1.0, 2.0, 0.5).unwrap();
        let mut xs = Vec::new();
        for r in 0..10u64 {
            let s = sine_like_sample(256, 12.0, 321, r).unwrap();
            let rep = membership_stats_sine(&s, &params, 5).unwrap();
            assert!(rep.xsp.is_finite());
            assert!(rep.rsp.is_finite());
            xs.push(rep.xsp);
        }
        let max = xs.iter().cloned().fold(0.0f64, f64::max);
        assert!(max < 50.0, "xsp blow-up: {max}");
    }

    #[test]
    fn number_variance_grows_slowly() {
        let l_values = [1.0, 2.0, 4.0, 8.0];
        let table = sine_number_variance(256, 16.0, &l_values, 64, 444).unwrap();
        for (_, v) in &table {
            assert!(*v > 0.0);
        }
        // Log-log slope across the range; rigid spectra stay well below the
        // Poisson slope of 1.
        let (l0, v0) = table[0];
        let (l3, v3) = table[3];
        let slope = (v3 / v0).ln() / (l3 / l0).ln();
        assert!(slope < 0.7, "variance slope {slope}");
    }

    #[test]
    fn origin_gap_exponential_moment_is_moderate() {
        let m = sine_gap_exp_moment(256, 12.0, 0.5, 48, 555).unwrap();
        assert!((1.2..4.0).contains(&m), "exp moment {m}");
    }

    #[test]
    fn ks_statistic_basics() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(ks_statistic(&a, &b), 0.0);
        let c = [10.0, 11.0, 12.0, 13.0];
        assert_eq!(ks_statistic(&a, &c), 1.0);
    }

    #[test]
    fn sde_matches_matrix_oracle_at_small_scale() {
        for beta in [2u8, 1u8] {
            let cv = matrix_sde_cross_validation(beta, 4, 0.5, 2e-3, 800, 12345, 1.0).unwrap();
            assert!(cv.ks < 0.1, "beta {beta}: KS {}", cv.ks);
            assert_eq!(cv.sde_samples, 3200);
            assert_eq!(cv.matrix_samples, 3200);
        }
    }
}
