//! Certificates and asymptotic checks on computed branches.
//!
//! The Schur matrix `S_hat = A^T W A - 2 mu A^T diag(r) W diag(r) A` is positive
//! definite exactly when the Jacobian is invertible along a branch with a
//! non-constant `r^2`, and it also certifies second-order optimality. The other
//! diagnostics (value curve, envelope identity, core set, limit interpolant,
//! decay rates) are read off a traced [`Trajectory`]. The brute-force oracle is an
//! independent global search over a simplex grid for tiny problems.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuation::{sample_at, ContinuationConfig, Trajectory};
use crate::error::{Error, Result};
use crate::model::{entropy, ols_initial, residuals, weighted_mse, BranchState, Problem};
use crate::numerics::{
    numerical_rank, spectral_norm, sym_eig_min, weighted_least_squares, DenseMatrix, DenseVector,
};

/// Direct assembly of `A^T W A - 2 mu A^T diag(r) W diag(r) A`.
pub fn schur_hat(p: &Problem, y: &BranchState) -> DenseMatrix {
    let a = p.a();
    let r = residuals(p, &y.x);
    let wr2 = y.w.component_mul(&r.component_mul(&r));
    let mut w_a = a.clone();
    let mut wr2_a = a.clone();
    for i in 0..p.m() {
        w_a.row_mut(i).scale_mut(y.w[i]);
        wr2_a.row_mut(i).scale_mut(wr2[i]);
    }
    a.tr_mul(&w_a) - a.tr_mul(&wr2_a) * (2.0 * y.mu)
}

/// The same matrix as `(W^{1/2} A)^T B (W^{1/2} A)` with `B = I - 2 mu diag(r^2)`.
pub fn schur_hat_sandwich(p: &Problem, y: &BranchState) -> DenseMatrix {
    let r = residuals(p, &y.x);
    let mut v = p.a().clone();
    for i in 0..p.m() {
        v.row_mut(i).scale_mut(y.w[i].sqrt());
    }
    let b_diag = r.map(|ri| 1.0 - 2.0 * y.mu * ri * ri);
    let mut bv = v.clone();
    for i in 0..p.m() {
        bv.row_mut(i).scale_mut(b_diag[i]);
    }
    v.tr_mul(&bv)
}

pub fn eig_min_schur(p: &Problem, y: &BranchState) -> f64 {
    sym_eig_min(&schur_hat(p, y))
}

/// `2 mu max_i(w_i r_i^2) ||A||_2^2 / s0^2`; below one, `B` is positive on
/// `Range(W^{1/2} A)` and `S_hat` is positive definite.
pub fn b_positivity_ratio(p: &Problem, y: &BranchState, s0: f64) -> f64 {
    let r = residuals(p, &y.x);
    let max_wr2 =
        y.w.iter()
            .zip(r.iter())
            .map(|(w, r)| w * r * r)
            .fold(0.0, f64::max);
    let a2 = spectral_norm(p.a()).powi(2);
    2.0 * y.mu * max_wr2 * a2 / (s0 * s0)
}

/// `2 mu lambda_max(P_V diag(r^2) P_V)` with `V = Range(W^{1/2} A)`, computed as the
/// largest generalized eigenvalue of `(A^T diag(w r^2) A, A^T W A)`. Below one
/// exactly when `S_hat` is positive definite; infinite when `A^T W A` is singular.
pub fn b_restricted_ratio(p: &Problem, y: &BranchState) -> f64 {
    let a = p.a();
    let r = residuals(p, &y.x);
    let mut w_a = a.clone();
    let mut wr2_a = a.clone();
    for i in 0..p.m() {
        w_a.row_mut(i).scale_mut(y.w[i]);
        wr2_a.row_mut(i).scale_mut(y.w[i] * r[i] * r[i]);
    }
    let Some(chol) = a.tr_mul(&w_a).cholesky() else {
        return f64::INFINITY;
    };
    let l = chol.l();
    let k = a.tr_mul(&wr2_a);
    let Some(half) = l.solve_lower_triangular(&k) else {
        return f64::INFINITY;
    };
    let Some(m) = l.solve_lower_triangular(&half.transpose()) else {
        return f64::INFINITY;
    };
    -2.0 * y.mu * sym_eig_min(&(-m))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuePoint {
    pub e: f64,
    pub h: f64,
    pub mu: f64,
}

/// Entropy and multiplier against `E`, in trajectory order (decreasing `E`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueCurve {
    pub points: Vec<ValuePoint>,
}

impl ValueCurve {
    /// Checks that `H` is nonincreasing and `mu` nondecreasing as `E` decreases.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].h <= w[0].h + slack && w[1].mu >= w[0].mu - slack)
    }
}

pub fn value_curve(traj: &Trajectory) -> ValueCurve {
    ValueCurve {
        points: traj
            .samples
            .iter()
            .map(|s| ValuePoint {
                e: s.e(),
                h: s.entropy,
                mu: s.state.mu,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// `max |dH/dE - mu| / (1 + mu)` over the checked samples; 0 when none were checked.
    pub max_error: f64,
    pub samples_checked: usize,
}

/// Compares a central difference of `H` in `E` with `mu` at every interior sample.
pub fn envelope_check(
    p: &Problem,
    traj: &Trajectory,
    delta_rel: f64,
    cfg: &ContinuationConfig,
) -> Result<EnvelopeReport> {
    let mut report = EnvelopeReport {
        max_error: 0.0,
        samples_checked: 0,
    };
    let (hi, lo) = (traj.first().e(), traj.last().e());
    for s in traj.samples.iter().skip(1) {
        let e = s.e();
        let d = delta_rel * e;
        if e + d > hi || e - d < lo {
            continue;
        }
        let up = sample_at(p, traj, e + d, cfg)?.state;
        let down = sample_at(p, traj, e - d, cfg)?.state;
        let dh = (entropy(&up.w) - entropy(&down.w)) / (2.0 * d);
        let err = (dh - s.state.mu).abs() / (1.0 + s.state.mu);
        report.max_error = report.max_error.max(err);
        report.samples_checked += 1;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreSetReport {
    /// Indices classified as core, ascending.
    pub indices: Vec<usize>,
    pub size: usize,
    /// `s0^2 / ||A||_2^2`
    pub epsilon0: f64,
    /// Running minimum of `sigma_min(W^{1/2} A)` along the trajectory.
    pub s0: f64,
    pub threshold_used: f64,
    #[serde(with = "crate::numerics::vector_serde")]
    pub weights_final: DenseVector,
}

/// Classifies rows by their final weight against `eps0 = s0^2 / ||A||^2` (or the
/// override) and checks that the selected rows keep full column rank.
pub fn core_set(
    p: &Problem,
    traj: &Trajectory,
    override_threshold: Option<f64>,
) -> Result<CoreSetReport> {
    let s0 = traj
        .samples
        .iter()
        .map(|s| s.sigma_min_weighted)
        .fold(f64::INFINITY, f64::min);
    let a_norm = spectral_norm(p.a());
    let epsilon0 = s0 * s0 / (a_norm * a_norm);
    let threshold = override_threshold.unwrap_or(epsilon0);
    let weights_final = traj.last().state.w.clone();
    let indices: Vec<usize> = weights_final
        .iter()
        .enumerate()
        .filter(|(_, &w)| w >= threshold)
        .map(|(i, _)| i)
        .collect();
    let (a_s, _) = p.select_rows(&indices);
    let rank = if indices.is_empty() {
        0
    } else {
        numerical_rank(&a_s)
    };
    if indices.len() < p.n() || rank < p.n() {
        return Err(Error::CoreSetRankDeficient { rank, n: p.n() });
    }
    Ok(CoreSetReport {
        size: indices.len(),
        indices,
        epsilon0,
        s0,
        threshold_used: threshold,
        weights_final,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitInterpolant {
    #[serde(with = "crate::numerics::vector_serde")]
    pub x: DenseVector,
    #[serde(with = "crate::numerics::vector_serde")]
    pub residuals_on_core: DenseVector,
}

/// Least-squares fit restricted to the rows in `core`.
pub fn limit_interpolant(p: &Problem, core: &[usize]) -> Result<LimitInterpolant> {
    if core.len() < p.n() {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let (a_s, b_s) = p.select_rows(core);
    let uniform = DenseVector::from_element(core.len(), 1.0 / core.len() as f64);
    let x = weighted_least_squares(&a_s, &b_s, &uniform)?;
    let residuals_on_core = &a_s * &x - b_s;
    Ok(LimitInterpolant {
        x,
        residuals_on_core,
    })
}

/// Least-squares line `v = intercept + slope * t` with the Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub correlation: f64,
}

pub fn fit_line(t: &[f64], v: &[f64]) -> LineFit {
    let k = t.len() as f64;
    let tm = t.iter().sum::<f64>() / k;
    let vm = v.iter().sum::<f64>() / k;
    let (mut stt, mut svv, mut stv) = (0.0, 0.0, 0.0);
    for (ti, vi) in t.iter().zip(v) {
        stt += (ti - tm) * (ti - tm);
        svv += (vi - vm) * (vi - vm);
        stv += (ti - tm) * (vi - vm);
    }
    let slope = stv / stt;
    LineFit {
        slope,
        intercept: vm - slope * tm,
        correlation: stv / (stt * svv).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexedFit {
    pub index: usize,
    pub fit: LineFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `log w_j` against `log E` for rows outside the core set.
    pub outlier_weight_fits: Vec<IndexedFit>,
    /// `log |r_i|` against `log E` for rows in the core set.
    pub inlier_residual_fits: Vec<IndexedFit>,
    /// `mu` against `log(1/E)`.
    pub mu_log_fit: LineFit,
    pub fit_range: (f64, f64),
    pub samples_used: usize,
}

pub const MIN_RATE_SAMPLES: usize = 10;

/// Log-log and semi-log line fits over the samples with `E` in `fit_range`.
pub fn rate_report(
    p: &Problem,
    traj: &Trajectory,
    core: &[usize],
    fit_range: (f64, f64),
) -> Result<RateReport> {
    let (lo, hi) = fit_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!(
            "fit range ({lo:e}, {hi:e}) must satisfy 0 < lo < hi"
        )));
    }
    let used: Vec<_> = traj
        .samples
        .iter()
        .filter(|s| s.e() >= lo && s.e() <= hi)
        .collect();
    if used.len() < MIN_RATE_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_RATE_SAMPLES,
            found: used.len(),
        });
    }
    let log_e: Vec<f64> = used.iter().map(|s| s.e().ln()).collect();
    let res: Vec<DenseVector> = used.iter().map(|s| residuals(p, &s.state.x)).collect();

    let outlier_weight_fits = (0..p.m())
        .filter(|i| !core.contains(i))
        .map(|j| {
            let v: Vec<f64> = used.iter().map(|s| s.state.w[j].ln()).collect();
            IndexedFit {
                index: j,
                fit: fit_line(&log_e, &v),
            }
        })
        .collect();
    let inlier_residual_fits = core
        .iter()
        .map(|&i| {
            let v: Vec<f64> = res.iter().map(|r| r[i].abs().ln()).collect();
            IndexedFit {
                index: i,
                fit: fit_line(&log_e, &v),
            }
        })
        .collect();
    let log_inv_e: Vec<f64> = log_e.iter().map(|l| -l).collect();
    let mu: Vec<f64> = used.iter().map(|s| s.state.mu).collect();

    Ok(RateReport {
        outlier_weight_fits,
        inlier_residual_fits,
        mu_log_fit: fit_line(&log_inv_e, &mu),
        fit_range,
        samples_used: used.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    #[serde(with = "crate::numerics::vector_serde")]
    pub w: DenseVector,
    #[serde(with = "crate::numerics::vector_serde")]
    pub x: DenseVector,
    pub entropy: f64,
    /// MSE attained by the returned grid point.
    pub mse: f64,
    /// Grid spacing of the final (refined) search.
    pub cell: f64,
    /// Grid points of the final search whose MSE lies within the band around `E`.
    pub candidates_in_band: usize,
}

pub const ORACLE_MAX_ROWS: usize = 5;
pub const ORACLE_MAX_COLS: usize = 2;
const REFINE_FACTOR: usize = 10;

#[derive(Debug, Clone)]
struct Candidate {
    w: Vec<f64>,
    x: DenseVector,
    mse: f64,
    entropy: f64,
}

/// Higher entropy wins; ties go to the lexicographically smaller weight vector.
fn better(a: &Candidate, b: &Candidate) -> Ordering {
    match a.entropy.total_cmp(&b.entropy) {
        Ordering::Equal => {
            b.w.iter()
                .zip(&a.w)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        }
        o => o,
    }
}

fn pick(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if better(&a, &b) == Ordering::Less {
            b
        } else {
            a
        }),
        (a, None) => a,
        (None, b) => b,
    }
}

/// Weighted fit and MSE at `w`; `None` when the fit is rank deficient.
fn fit(p: &Problem, w: Vec<f64>) -> Option<Candidate> {
    let wv = DenseVector::from_vec(w);
    let x = weighted_least_squares(p.a(), p.b(), &wv).ok()?;
    let mse = weighted_mse(&wv, &residuals(p, &x));
    Some(Candidate {
        entropy: entropy(&wv),
        w: wv.iter().copied().collect(),
        x,
        mse,
    })
}

/// MSE change from moving one cell of mass between two rows, which is about
/// `(r_j^2 - r_i^2) * cell` because the fit is stationary in `x`.
fn band(p: &Problem, c: &Candidate, cell: f64) -> f64 {
    let r2 = residuals(p, &c.x).map(|v| v * v);
    (r2.max() - r2.min()) * cell
}

struct Scan {
    best: Option<Candidate>,
    in_band: usize,
}

impl Scan {
    fn empty() -> Self {
        Scan {
            best: None,
            in_band: 0,
        }
    }

    fn merge(self, other: Scan) -> Scan {
        Scan {
            best: pick(self.best, other.best),
            in_band: self.in_band + other.in_band,
        }
    }
}

/// Visits grid point `ks` (integer multiples of `cell`). When its MSE lies within
/// the band around `e`, every grid edge leaving it along `e_j - e_i` on which the
/// MSE crosses `e` contributes the linearly interpolated crossing point.
fn scan_point(p: &Problem, ks: &[i64], e: f64, cell: f64, scan: &mut Scan) {
    let w: Vec<f64> = ks.iter().map(|&k| k as f64 * cell).collect();
    let Some(here) = fit(p, w) else { return };
    if (here.mse - e).abs() > band(p, &here, cell) {
        return;
    }
    scan.in_band += 1;
    let m = ks.len();
    for i in 0..m {
        if ks[i] == 0 {
            continue;
        }
        for j in 0..m {
            if j == i {
                continue;
            }
            let mut nw = here.w.clone();
            nw[i] -= cell;
            nw[j] += cell;
            nw[i] = nw[i].max(0.0);
            let Some(next) = fit(p, nw) else { continue };
            let (d0, d1) = (here.mse - e, next.mse - e);
            if d0 * d1 > 0.0 || d0 == d1 {
                continue;
            }
            let t = d0 / (d0 - d1);
            let w: Vec<f64> = here
                .w
                .iter()
                .zip(&next.w)
                .map(|(a, b)| a + t * (b - a))
                .collect();
            scan.best = pick(scan.best.take(), fit(p, w));
        }
    }
}

/// All compositions of `total` into `parts` non-negative integers, in lexicographic
/// order, handed to `visit`.
fn compositions(parts: usize, total: i64, prefix: &mut Vec<i64>, visit: &mut dyn FnMut(&[i64])) {
    if parts == 1 {
        prefix.push(total);
        visit(prefix);
        prefix.pop();
        return;
    }
    for k in 0..=total {
        prefix.push(k);
        compositions(parts - 1, total - k, prefix, visit);
        prefix.pop();
    }
}

/// Exhaustive entropy maximization over the simplex grid of resolution
/// `1/resolution`, restricted to the points where the grid edges cross the level
/// set `MSE = E`, followed by one local refinement at ten times the resolution
/// around the winner.
pub fn brute_force_oracle(p: &Problem, e: f64, resolution: usize) -> Result<OracleResult> {
    let (m, n) = (p.m(), p.n());
    if m > ORACLE_MAX_ROWS || n > ORACLE_MAX_COLS {
        return Err(Error::InvalidInput(format!(
            "oracle enumerates the simplex grid and is limited to m <= {ORACLE_MAX_ROWS}, n <= {ORACLE_MAX_COLS} (got {m}x{n})"
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidInput(
            "oracle resolution must be positive".into(),
        ));
    }
    let (ols, _) = ols_initial(p)?;
    if !(e > 0.0) || e > ols.e_uw {
        return Err(Error::NoFeasibleGridPoint { e });
    }
    if m == 1 {
        return Err(Error::NoFeasibleGridPoint { e });
    }

    let cell = 1.0 / resolution as f64;
    let total = resolution as i64;
    let coarse = (0..=total)
        .into_par_iter()
        .map(|k0| {
            let mut scan = Scan::empty();
            let mut prefix = vec![k0];
            compositions(m - 1, total - k0, &mut prefix, &mut |ks| {
                scan_point(p, ks, e, cell, &mut scan)
            });
            scan
        })
        .reduce(Scan::empty, Scan::merge);
    let coarse_best = coarse.best.ok_or(Error::NoFeasibleGridPoint { e })?;

    // local grid at 1/(10 N) spacing within two coarse cells of the winner
    let fine = cell / REFINE_FACTOR as f64;
    let reach = 2 * REFINE_FACTOR as i64;
    let total_fine = total * REFINE_FACTOR as i64;
    let base: Vec<i64> = coarse_best
        .w
        .iter()
        .map(|w| (w / fine).round() as i64)
        .collect();
    let side = (2 * reach + 1) as usize;
    let refined = (0..side.pow((m - 2) as u32))
        .into_par_iter()
        .map(|outer| {
            let mut scan = Scan::empty();
            for k0 in 0..side {
                let mut rest = outer;
                let mut ks: Vec<i64> = Vec::with_capacity(m);
                ks.push(base[0] + k0 as i64 - reach);
                for b in &base[1..m - 1] {
                    ks.push(b + (rest % side) as i64 - reach);
                    rest /= side;
                }
                ks.push(total_fine - ks.iter().sum::<i64>());
                if ks.iter().all(|&k| k >= 0) {
                    scan_point(p, &ks, e, fine, &mut scan);
                }
            }
            scan
        })
        .reduce(Scan::empty, Scan::merge);

    let (winner, cell_used, in_band) = match refined.best {
        Some(c) => (c, fine, refined.in_band),
        None => (coarse_best, cell, coarse.in_band),
    };
    Ok(OracleResult {
        w: DenseVector::from_vec(winner.w),
        x: winner.x,
        entropy: winner.entropy,
        mse: winner.mse,
        cell: cell_used,
        candidates_in_band: in_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::continuation::{trace_branch, TerminationReason};
    use crate::datagen::{example2, Example2Variant};
    use crate::numerics::min_singular_value;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn schur_at_start_is_scaled_gram() {
        let p = example2(Example2Variant::Eight).1;
        let (_, y0) = ols_initial(&p).unwrap();
        let s = schur_hat(&p, &y0);
        let gram = p.a().tr_mul(p.a()) / 8.0;
        assert!((s - gram).amax() < 1e-15);
        let smin = min_singular_value(p.a());
        let eig = eig_min_schur(&p, &y0);
        assert!(eig > 0.0);
        assert!((eig - smin * smin / 8.0).abs() <= 1e-12 * eig);
    }

    #[test]
    fn restricted_ratio_tracks_schur_sign() {
        let p = example2(Example2Variant::Eight).1;
        let cfg = ContinuationConfig::with_target(1e-4);
        let traj = trace_branch(&p, &cfg).unwrap().trajectory.unwrap();
        for s in &traj.samples {
            let ratio = b_restricted_ratio(&p, &s.state);
            assert!(ratio < 1.0);
            // S_hat = A^T W A (I - 2 mu G^{-1} K) shares the sign pattern
            assert_eq!(ratio < 1.0, s.eig_min_schur > 0.0);
        }
        let last = &traj.last().state;
        let beyond = BranchState {
            mu: last.mu * 1.05,
            ..last.clone()
        };
        assert!(b_restricted_ratio(&p, &beyond) > 1.0);
        assert!(eig_min_schur(&p, &beyond) < 0.0);
    }

    #[test]
    fn schur_forms_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let (m, n) = (rng.random_range(3..9), rng.random_range(1..4));
            let a = DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DenseVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let Ok(p) = Problem::new(a, b) else { continue };
            let w = DenseVector::from_fn(m, |_, _| rng.random_range(0.1..1.0));
            let y = BranchState {
                lambda: 0.0,
                mu: rng.random_range(0.0..10.0),
                w: &w / w.sum(),
                x: DenseVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                e: 0.1,
            };
            let d = schur_hat(&p, &y) - schur_hat_sandwich(&p, &y);
            assert!(d.amax() <= 1e-12);
        }
    }

    #[test]
    fn value_curve_starts_uniform() {
        let p = example2(Example2Variant::Eight).1;
        let out = trace_branch(&p, &ContinuationConfig::with_target(0.04)).unwrap();
        let curve = value_curve(out.trajectory.as_ref().unwrap());
        let first = curve.points[0];
        assert!((first.e - 0.05).abs() < 1e-12);
        assert!((first.h - 8f64.ln()).abs() < 1e-14);
        assert_eq!(first.mu, 0.0);
        assert!(curve.is_monotone(1e-12));
    }

    #[test]
    fn envelope_on_single_sample_is_vacuous() {
        let p = example2(Example2Variant::Eight).1;
        let (ols, _) = ols_initial(&p).unwrap();
        let cfg = ContinuationConfig::with_target(ols.e_uw);
        let out = trace_branch(&p, &cfg).unwrap();
        let rep = envelope_check(&p, out.trajectory.as_ref().unwrap(), 1e-4, &cfg).unwrap();
        assert_eq!(rep.samples_checked, 0);
        assert_eq!(rep.max_error, 0.0);
    }

    #[test]
    fn core_set_of_uniform_trajectory_is_everything() {
        let p = example2(Example2Variant::Eight).1;
        let (ols, _) = ols_initial(&p).unwrap();
        let out = trace_branch(&p, &ContinuationConfig::with_target(ols.e_uw)).unwrap();
        let rep = core_set(&p, out.trajectory.as_ref().unwrap(), None).unwrap();
        assert_eq!(rep.indices, (0..8).collect::<Vec<_>>());
        assert!(rep.epsilon0 <= 1.0 / 8.0);
    }

    #[test]
    fn core_set_rank_failure() {
        let p = example2(Example2Variant::Eight).1;
        let out = trace_branch(&p, &ContinuationConfig::with_target(0.04)).unwrap();
        let err = core_set(&p, out.trajectory.as_ref().unwrap(), Some(0.9)).unwrap_err();
        assert!(matches!(err, Error::CoreSetRankDeficient { .. }));
    }

    #[test]
    fn interpolant_on_square_subsystem() {
        let a = DenseMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DenseVector::from_vec(vec![1.0, 3.0, 0.0, 9.0]);
        let p = Problem::new(a, b).unwrap();
        let li = limit_interpolant(&p, &[0, 1]).unwrap();
        assert!((li.x[0] - 1.0).abs() < 1e-14 && (li.x[1] - 2.0).abs() < 1e-14);
        assert!(li.residuals_on_core.amax() < 1e-14);
    }

    #[test]
    fn interpolant_equals_indicator_weighted_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let m = 8;
            let a = DenseMatrix::from_fn(m, 2, |_, _| rng.random_range(-1.0..1.0));
            let b = DenseVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let p = Problem::new(a, b).unwrap();
            let core: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.6)).collect();
            if core.len() < 3 {
                continue;
            }
            let ind = DenseVector::from_fn(m, |i, _| if core.contains(&i) { 1.0 } else { 0.0 });
            let x_ind = weighted_least_squares(p.a(), p.b(), &ind).unwrap();
            let li = limit_interpolant(&p, &core).unwrap();
            assert!((li.x - x_ind).amax() < 1e-12);
        }
    }

    #[test]
    fn line_fit_exact() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let v = [1.0, 3.0, 5.0, 7.0];
        let f = fit_line(&t, &v);
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.intercept - 1.0).abs() < 1e-15);
        assert!((f.correlation - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rate_report_needs_samples() {
        let p = example2(Example2Variant::Eight).1;
        let (ols, _) = ols_initial(&p).unwrap();
        let out = trace_branch(&p, &ContinuationConfig::with_target(ols.e_uw)).unwrap();
        let err = rate_report(&p, out.trajectory.as_ref().unwrap(), &[], (1e-4, 1e-1)).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
    }

    fn toy() -> Problem {
        let a = DenseMatrix::from_element(4, 1, 1.0);
        Problem::new(a, DenseVector::from_vec(vec![0.0, 0.2, 0.5, 1.5])).unwrap()
    }

    #[test]
    fn oracle_at_uniform_level() {
        let p = toy();
        let (ols, _) = ols_initial(&p).unwrap();
        let o = brute_force_oracle(&p, ols.e_uw, 40).unwrap();
        assert!(o.w.iter().all(|w| (w - 0.25).abs() <= 1.0 / 40.0));
        assert!((o.entropy - 4f64.ln()).abs() < 1e-2);
    }

    #[test]
    fn oracle_refuses_out_of_range_and_large_problems() {
        let p = toy();
        let (ols, _) = ols_initial(&p).unwrap();
        assert!(matches!(
            brute_force_oracle(&p, 1.5 * ols.e_uw, 40),
            Err(Error::NoFeasibleGridPoint { .. })
        ));
        let big = Problem::new(
            DenseMatrix::from_element(6, 1, 1.0),
            DenseVector::from_vec(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]),
        )
        .unwrap();
        assert!(matches!(
            brute_force_oracle(&big, 1.0, 10),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn oracle_is_deterministic_across_thread_counts() {
        let p = toy();
        let (ols, _) = ols_initial(&p).unwrap();
        let e = 0.6 * ols.e_uw;
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| brute_force_oracle(&p, e, 60).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| brute_force_oracle(&p, e, 60).unwrap());
        assert_eq!(one, many);
    }

    #[test]
    fn eight_point_breakdown_eigenvalue_vanishes() {
        let p = example2(Example2Variant::Eight).1;
        let cfg = ContinuationConfig {
            eig_event_tol: 1e-9,
            ..ContinuationConfig::with_target(1e-4)
        };
        let out = trace_branch(&p, &cfg).unwrap();
        assert_eq!(
            out.report.reason,
            TerminationReason::BreakdownJacobianSingular
        );
        let traj = out.trajectory.unwrap();
        let at = &traj.last().state;
        let norm = spectral_norm(&schur_hat(&p, at));
        let eig = eig_min_schur(&p, at);
        assert!(
            eig > 0.0 && eig <= 1e-6 * norm,
            "eig {eig:e}, norm {norm:e}"
        );
        assert!((at.e - 3.80e-2).abs() <= 2e-3);
    }
}
