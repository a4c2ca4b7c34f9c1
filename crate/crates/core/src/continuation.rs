//! Branch tracing `E -> y(E)` from the uniform-weight start down to a target MSE.
//!
//! Along the branch `F(y(E); E) = 0`, so `J(y) y'(E) = e_2`. Each step takes an
//! Euler predictor along that tangent and projects back onto `F = 0` with a damped
//! Newton corrector at the new `E`. The smallest eigenvalue of the Schur matrix is
//! monitored after every accepted step; a sign change is bracketed by bisection in
//! `E` and ends the trace.

use serde::{Deserialize, Serialize};

use crate::diagnostics::eig_min_schur;
use crate::error::{Error, Result};
use crate::model::{
    entropy, eval_f, gibbs_consistency, jacobian, ols_initial, BranchState, OlsSummary, Problem,
    FEAS_TOL,
};
use crate::numerics::{min_singular_value, vec_inf_norm, DenseVector, LuFactor};

/// Where dense output is requested after tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleGrid {
    /// This many log-spaced levels between `E_uw` and the final `E`.
    Count(usize),
    /// Explicit levels; values outside the traced range are dropped.
    Values(Vec<f64>),
}

impl Default for SampleGrid {
    fn default() -> Self {
        SampleGrid::Count(200)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub e_target: f64,
    /// Initial step as a fraction of `E_uw`.
    pub h0_rel: f64,
    pub h_max_rel: f64,
    pub h_min_rel: f64,
    /// Additional cap on a step relative to the current `E`.
    pub h_max_frac_of_e: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub grow_factor: f64,
    pub shrink_factor: f64,
    /// Fraction-to-boundary constant for the weights.
    pub boundary_fraction: f64,
    /// Relative width in `E` to which a singular point is localized.
    pub eig_event_tol: f64,
    pub feas_tol: f64,
    /// `||y||_inf` above which the branch is declared escaping.
    pub escape_norm: f64,
    /// Minimum weight below which the branch is declared to hit the simplex boundary.
    pub weight_floor: f64,
    pub sample_grid: SampleGrid,
    pub seed_metadata: String,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            e_target: 1e-4,
            h0_rel: 1e-3,
            h_max_rel: 0.1,
            h_min_rel: 1e-12,
            h_max_frac_of_e: 0.5,
            newton_tol: 1e-11,
            newton_max_iter: 25,
            grow_factor: 1.5,
            shrink_factor: 0.5,
            boundary_fraction: 0.9,
            eig_event_tol: 1e-3,
            feas_tol: FEAS_TOL,
            escape_norm: 1e12,
            weight_floor: 1e-300,
            sample_grid: SampleGrid::default(),
            seed_metadata: String::new(),
        }
    }
}

impl ContinuationConfig {
    pub fn with_target(e_target: f64) -> Self {
        ContinuationConfig {
            e_target,
            ..Default::default()
        }
    }

    /// Checks the static relations between the constants (not the target range,
    /// which depends on the problem).
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("continuation config: {msg}")));
        if !(self.e_target > 0.0) || !self.e_target.is_finite() {
            return bad("e_target must be positive and finite");
        }
        if !(0.0 < self.h_min_rel && self.h_min_rel < self.h0_rel && self.h0_rel <= self.h_max_rel)
        {
            return bad("need 0 < h_min_rel < h0_rel <= h_max_rel");
        }
        if !(self.h_max_frac_of_e > 0.0 && self.h_max_frac_of_e < 1.0) {
            return bad("h_max_frac_of_e must lie in (0, 1)");
        }
        if !(0.0 < self.boundary_fraction && self.boundary_fraction < 1.0) {
            return bad("boundary_fraction must lie in (0, 1)");
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return bad("newton_tol and newton_max_iter must be positive");
        }
        if !(self.grow_factor >= 1.0) || !(0.0 < self.shrink_factor && self.shrink_factor < 1.0) {
            return bad("need grow_factor >= 1 and 0 < shrink_factor < 1");
        }
        if !(self.eig_event_tol > 0.0 && self.eig_event_tol < 1.0) {
            return bad("eig_event_tol must lie in (0, 1)");
        }
        if let SampleGrid::Count(n) = self.sample_grid {
            if n < 2 {
                return bad("sample_grid count must be at least 2");
            }
        }
        Ok(())
    }
}

/// An accepted, branch-certified point with its monitors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub state: BranchState,
    pub eig_min_schur: f64,
    /// `sigma_min(W^{1/2} A)`
    pub sigma_min_weighted: f64,
    pub entropy: f64,
    pub gibbs_drift: f64,
    pub newton_iters: usize,
    pub step_size: f64,
}

impl BranchSample {
    pub fn new(p: &Problem, state: BranchState, newton_iters: usize, step_size: f64) -> Self {
        let eig = eig_min_schur(p, &state);
        let sqrt_w = state.w.map(f64::sqrt);
        let mut wa = p.a().clone();
        for (i, mut row) in wa.row_iter_mut().enumerate() {
            row.scale_mut(sqrt_w[i]);
        }
        BranchSample {
            eig_min_schur: eig,
            sigma_min_weighted: min_singular_value(&wa),
            entropy: entropy(&state.w),
            gibbs_drift: gibbs_consistency(p, &state),
            newton_iters,
            step_size,
            state,
        }
    }

    pub fn e(&self) -> f64 {
        self.state.e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub problem_fingerprint: String,
    /// Strictly decreasing in `E`; the first sample is the uniform-weight start.
    pub samples: Vec<BranchSample>,
    pub ols: OlsSummary,
}

impl Trajectory {
    pub fn first(&self) -> &BranchSample {
        &self.samples[0]
    }

    pub fn last(&self) -> &BranchSample {
        self.samples.last().expect("trajectory is never empty")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Index of the sample whose `E` is closest to `e`.
    pub fn nearest(&self, e: f64) -> usize {
        self.samples
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.e() - e).abs().total_cmp(&(b.1.e() - e).abs()))
            .map(|(i, _)| i)
            .expect("trajectory is never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TerminationReason {
    ReachedTarget,
    BreakdownJacobianSingular,
    BreakdownWeightVanishing,
    BreakdownNewtonStall,
    DegenerateStart,
    EscapeDetected,
}

impl TerminationReason {
    pub fn is_breakdown(self) -> bool {
        !matches!(self, TerminationReason::ReachedTarget)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub eig_min: Option<f64>,
    pub min_weight: Option<f64>,
    pub y_norm: Option<f64>,
    pub step_size: Option<f64>,
    /// `(E_lo, E_hi)` bracketing a singular point; `eig_min_schur` is positive at `E_hi`.
    pub bracket: Option<(f64, f64)>,
    pub accepted_steps: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationReport {
    pub reason: TerminationReason,
    pub e_final: f64,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutcome {
    /// `None` only for [`TerminationReason::DegenerateStart`].
    pub trajectory: Option<Trajectory>,
    pub report: TerminationReport,
}

/// Result of a successful corrector run.
#[derive(Debug, Clone, PartialEq)]
pub struct Corrected {
    pub state: BranchState,
    pub iterations: usize,
    /// Whether the fraction-to-boundary rule shortened any step.
    pub damped: bool,
}

/// Solves `J(y) d = rhs` in the variables `(lambda, mu, log w, x)`, so that rows
/// belonging to tiny weights keep their own pivots.
fn solve_jacobian(p: &Problem, y: &BranchState, rhs: &DenseVector) -> Result<DenseVector> {
    let mut j = jacobian(p, y)?;
    for i in 0..p.m() {
        j.column_mut(2 + i).scale_mut(y.w[i]);
    }
    let mut d = LuFactor::new(&j)?.solve(rhs)?;
    for i in 0..p.m() {
        d[2 + i] *= y.w[i];
    }
    Ok(d)
}

/// `dy/dE = J(y)^{-1} e_2`
pub fn tangent(p: &Problem, y: &BranchState) -> Result<DenseVector> {
    let mut e2 = DenseVector::zeros(p.dim());
    e2[1] = 1.0;
    solve_jacobian(p, y, &e2)
}

/// Newton's method on `F(y; E) = 0` at fixed `E`, with fraction-to-boundary damping
/// on the weights.
pub fn newton_correct(
    p: &Problem,
    guess: &BranchState,
    e: f64,
    cfg: &ContinuationConfig,
) -> Result<Corrected> {
    let (m, n) = (p.m(), p.n());
    let tol = cfg.newton_tol * (1.0 + p.b_inf_norm());
    let tau = cfg.boundary_fraction;
    let mut y = BranchState { e, ..guess.clone() };
    let mut damped = false;
    let mut prev_step = f64::INFINITY;
    let mut residual = f64::INFINITY;

    for it in 0..=cfg.newton_max_iter {
        let f = eval_f(p, &y)?;
        residual = vec_inf_norm(&f);
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            return Ok(Corrected {
                state: y,
                iterations: it,
                damped,
            });
        }
        if it == cfg.newton_max_iter {
            break;
        }
        let step = solve_jacobian(p, &y, &(-f))?;
        let step_norm = vec_inf_norm(&step);
        if !step_norm.is_finite() || (it >= 2 && step_norm > 4.0 * prev_step) {
            return Err(Error::NewtonDiverged {
                iterations: it,
                residual,
            });
        }
        prev_step = step_norm;

        let mut alpha: f64 = 1.0;
        for i in 0..m {
            let dw = step[2 + i];
            if dw < 0.0 {
                alpha = alpha.min(tau * y.w[i] / -dw);
            }
        }
        if alpha < 1.0 {
            damped = true;
        }
        let next = y.to_vector() + step * alpha;
        y = BranchState::from_vector(&next, m, n, e);
    }
    Err(Error::NewtonDiverged {
        iterations: cfg.newton_max_iter,
        residual,
    })
}

/// Euler predictor from `from` to level `e`, with weights kept inside the simplex
/// interior by the fraction-to-boundary rule.
fn predict(from: &BranchState, dy: Option<&DenseVector>, e: f64, tau: f64) -> BranchState {
    let Some(dy) = dy else {
        return BranchState { e, ..from.clone() };
    };
    let (m, n) = (from.w.len(), from.x.len());
    let y = from.to_vector() + dy * (e - from.e);
    let mut out = BranchState::from_vector(&y, m, n, e);
    for i in 0..m {
        out.w[i] = out.w[i].max((1.0 - tau) * from.w[i]);
    }
    out
}

/// Rejects corrector results that left the branch being followed: `mu` must grow
/// and `H` must fall as `E` decreases, and the correction may not exceed the
/// predictor step itself.
fn stays_on_branch(cur: &BranchState, guess: &BranchState, next: &BranchState) -> bool {
    let y_cur = cur.to_vector();
    let y_guess = guess.to_vector();
    let y_next = next.to_vector();
    let predicted = vec_inf_norm(&(&y_guess - &y_cur));
    let corrected = vec_inf_norm(&(&y_next - &y_guess));
    let slack = 1e-12 * (1.0 + vec_inf_norm(&y_cur));
    next.mu > cur.mu
        && entropy(&next.w) <= entropy(&cur.w) + slack
        && corrected <= predicted + slack
}

/// Traces the branch from `E_uw` toward `cfg.e_target`.
///
/// Precondition failures (invalid config, target outside `(0, E_uw]`, rank
/// deficiency, consistent system) are errors; every way the trace itself can stop
/// is reported through the [`TerminationReport`].
pub fn trace_branch(p: &Problem, cfg: &ContinuationConfig) -> Result<TraceOutcome> {
    cfg.validate()?;
    let (ols, y0) = ols_initial(p)?;
    let e_uw = ols.e_uw;

    if ols.is_degenerate() {
        return Ok(TraceOutcome {
            trajectory: None,
            report: TerminationReport {
                reason: TerminationReason::DegenerateStart,
                e_final: e_uw,
                evidence: Evidence {
                    note: format!(
                        "squared OLS residuals are constant (spread {:.3e}); the Jacobian is singular at the start",
                        ols.r2_spread
                    ),
                    ..Default::default()
                },
            },
        });
    }
    if cfg.e_target > e_uw {
        return Err(Error::OutOfRange {
            e: cfg.e_target,
            lo: 0.0,
            hi: e_uw,
        });
    }

    let mut traj = Trajectory {
        problem_fingerprint: p.fingerprint(),
        samples: vec![BranchSample::new(p, y0, 0, 0.0)],
        ols,
    };
    let finish = |traj: Trajectory, reason, e_final, evidence| TraceOutcome {
        trajectory: Some(traj),
        report: TerminationReport {
            reason,
            e_final,
            evidence,
        },
    };
    if cfg.e_target >= e_uw {
        return Ok(finish(
            traj,
            TerminationReason::ReachedTarget,
            e_uw,
            Evidence::default(),
        ));
    }

    let tau = cfg.boundary_fraction;
    let mut h = cfg.h0_rel * e_uw;
    let mut dy = Some(tangent(p, &traj.first().state)?);

    loop {
        let cur = traj.last().clone();
        let steps = traj.len() - 1;
        let Some(cur_dy) = dy.as_ref() else {
            let evidence = Evidence {
                eig_min: Some(cur.eig_min_schur),
                accepted_steps: steps,
                note: "Jacobian factorization failed at an accepted point".into(),
                ..Default::default()
            };
            return Ok(finish(
                traj,
                TerminationReason::BreakdownJacobianSingular,
                cur.e(),
                evidence,
            ));
        };

        h = h
            .min(cfg.h_max_rel * e_uw)
            .min(cfg.h_max_frac_of_e * cur.e());
        let e_next = (cur.e() - h).max(cfg.e_target);
        let guess = predict(&cur.state, Some(cur_dy), e_next, tau);

        let corrected = match newton_correct(p, &guess, e_next, cfg) {
            Ok(c) if stays_on_branch(&cur.state, &guess, &c.state) => c,
            _ => {
                h *= cfg.shrink_factor;
                if h < cfg.h_min_rel * e_uw {
                    let evidence = Evidence {
                        eig_min: Some(cur.eig_min_schur),
                        min_weight: Some(cur.state.min_weight()),
                        step_size: Some(h),
                        accepted_steps: steps,
                        note: "step size fell below h_min".into(),
                        ..Default::default()
                    };
                    return Ok(finish(
                        traj,
                        TerminationReason::BreakdownNewtonStall,
                        cur.e(),
                        evidence,
                    ));
                }
                continue;
            }
        };

        let y_norm = vec_inf_norm(&corrected.state.to_vector());
        if y_norm > cfg.escape_norm {
            let evidence = Evidence {
                y_norm: Some(y_norm),
                step_size: Some(h),
                accepted_steps: steps,
                ..Default::default()
            };
            return Ok(finish(
                traj,
                TerminationReason::EscapeDetected,
                e_next,
                evidence,
            ));
        }
        let min_w = corrected.state.min_weight();
        if min_w < cfg.weight_floor {
            let evidence = Evidence {
                min_weight: Some(min_w),
                step_size: Some(h),
                accepted_steps: steps,
                ..Default::default()
            };
            return Ok(finish(
                traj,
                TerminationReason::BreakdownWeightVanishing,
                e_next,
                evidence,
            ));
        }

        let sample = BranchSample::new(p, corrected.state, corrected.iterations, h);
        if !(sample.eig_min_schur > 0.0) {
            let (e_singular, evidence) = localize_singular_point(p, &mut traj, sample, cfg);
            return Ok(finish(
                traj,
                TerminationReason::BreakdownJacobianSingular,
                e_singular,
                evidence,
            ));
        }

        let iters = sample.newton_iters;
        dy = tangent(p, &sample.state).ok();
        traj.samples.push(sample);
        if e_next <= cfg.e_target {
            return Ok(finish(
                traj,
                TerminationReason::ReachedTarget,
                e_next,
                Evidence {
                    accepted_steps: steps + 1,
                    ..Default::default()
                },
            ));
        }
        if iters <= 3 {
            h *= cfg.grow_factor;
        }
    }
}

/// Bisects in `E` between the last accepted sample (positive Schur eigenvalue) and
/// `below` (non-positive). Certified points found on the positive side are appended
/// to the trajectory.
fn localize_singular_point(
    p: &Problem,
    traj: &mut Trajectory,
    below: BranchSample,
    cfg: &ContinuationConfig,
) -> (f64, Evidence) {
    let mut e_lo = below.e();
    let mut eig_lo = below.eig_min_schur;
    let mut eig_hi = traj.last().eig_min_schur;

    while (traj.last().e() - e_lo) / traj.last().e() > cfg.eig_event_tol {
        let hi = traj.last().clone();
        let mid = 0.5 * (hi.e() + e_lo);
        let dy = tangent(p, &hi.state).ok();
        let guess = predict(&hi.state, dy.as_ref(), mid, cfg.boundary_fraction);
        match newton_correct(p, &guess, mid, cfg) {
            Ok(c) => {
                let s = BranchSample::new(p, c.state, c.iterations, hi.e() - mid);
                if s.eig_min_schur > 0.0 {
                    eig_hi = s.eig_min_schur;
                    traj.samples.push(s);
                } else {
                    eig_lo = s.eig_min_schur;
                    e_lo = mid;
                }
            }
            // the corrector struggles only next to the singular point
            Err(_) => e_lo = mid,
        }
    }
    let e_hi = traj.last().e();
    let evidence = Evidence {
        eig_min: Some(eig_hi),
        min_weight: Some(traj.last().state.min_weight()),
        bracket: Some((e_lo, e_hi)),
        accepted_steps: traj.len() - 1,
        note: format!(
            "smallest Schur eigenvalue changes sign: {eig_hi:.3e} at E_hi, {eig_lo:.3e} at E_lo"
        ),
        ..Default::default()
    };
    (0.5 * (e_lo + e_hi), evidence)
}

/// Certified branch point exactly at `e`, corrected from the nearest stored sample.
pub fn sample_at(
    p: &Problem,
    traj: &Trajectory,
    e: f64,
    cfg: &ContinuationConfig,
) -> Result<Corrected> {
    let hi = traj.first().e();
    let lo = traj.last().e();
    let slack = 1e-12 * hi;
    if !(e >= lo - slack && e <= hi + slack) {
        return Err(Error::OutOfRange { e, lo, hi });
    }
    let near = &traj.samples[traj.nearest(e)];
    let dy = if near.e() == e {
        None
    } else {
        tangent(p, &near.state).ok()
    };
    let guess = predict(&near.state, dy.as_ref(), e, cfg.boundary_fraction);
    newton_correct(p, &guess, e, cfg)
}

/// `count` log-spaced levels from `hi` down to `lo`, endpoints included.
pub fn log_spaced(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2 && hi > 0.0 && lo > 0.0);
    let (lh, ll) = (hi.ln(), lo.ln());
    (0..count)
        .map(|k| match k {
            0 => hi,
            k if k == count - 1 => lo,
            k => (lh + (ll - lh) * k as f64 / (count - 1) as f64).exp(),
        })
        .collect()
}

/// Dense output on `cfg.sample_grid`.
pub fn resample(p: &Problem, traj: &Trajectory, cfg: &ContinuationConfig) -> Result<Trajectory> {
    let hi = traj.first().e();
    let lo = traj.last().e();
    let mut levels = match &cfg.sample_grid {
        SampleGrid::Count(n) if hi > lo => log_spaced(hi, lo, *n),
        SampleGrid::Count(_) => vec![hi],
        SampleGrid::Values(v) => v.iter().copied().filter(|&e| e <= hi && e >= lo).collect(),
    };
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let samples = levels
        .into_iter()
        .map(|e| {
            let c = sample_at(p, traj, e, cfg)?;
            Ok(BranchSample::new(p, c.state, c.iterations, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        problem_fingerprint: traj.problem_fingerprint.clone(),
        samples,
        ols: traj.ols.clone(),
    })
}
