//! Post-treatment risk, infeasible optimal weights, and convergence
//! diagnostics.
//!
//! The risk of a weight vector is the average over post-treatment periods of
//! the squared 2-Wasserstein distance between the weighted control mixture
//! and the treated unit's untreated quantile function, evaluated on the same
//! midpoint grid that the optimal-weight solve uses, so reported risks and
//! their argmin are consistent by construction.

use std::collections::BTreeMap;

use crate::dist::UniformDrawSequence;
use crate::error::{DscError, Result};
use crate::estimator::DscFit;
use crate::panel::PanelDataset;
use crate::quantile::{build_artificial_sample, EmpiricalQuantileFn};
use crate::simplex::{solve_simplex_ls, SimplexWeights, SolveReport};
use crate::wasserstein::QuantileFnRef;

/// True (or best-available) quantile functions for every unit in every
/// post-treatment period, plus the integration grid size.
#[derive(Clone, Debug)]
pub struct OracleSpec {
    /// Treated unit's untreated quantile function per post period.
    pub treated: Vec<QuantileFnRef>,
    /// Control quantile functions per post period (outer: period, inner: j).
    pub controls: Vec<Vec<QuantileFnRef>>,
    /// Midpoint integration grid size G.
    pub grid_size: usize,
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.treated.is_empty() || self.treated.len() != self.controls.len() {
            return Err(DscError::InvalidArgument(
                "oracle must cover the same non-empty set of post periods for treated and controls"
                    .into(),
            ));
        }
        let j = self.controls[0].len();
        if j == 0 || self.controls.iter().any(|c| c.len() != j) {
            return Err(DscError::InvalidArgument(
                "oracle control lists must be non-empty and of equal length".into(),
            ));
        }
        if self.grid_size == 0 {
            return Err(DscError::InvalidArgument("grid size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn num_controls(&self) -> usize {
        self.controls[0].len()
    }

    pub fn num_post_periods(&self) -> usize {
        self.treated.len()
    }

    /// Grid-evaluated control matrix (G x J, row-major) and treated vector
    /// for one post period.
    fn grid_block(&self, period_idx: usize) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid_size;
        let j = self.num_controls();
        let y = self.treated[period_idx].eval_grid(g);
        let mut x = vec![0.0; g * j];
        for (c, f) in self.controls[period_idx].iter().enumerate() {
            let col = f.eval_grid(g);
            for (r, v) in col.into_iter().enumerate() {
                x[r * j + c] = v;
            }
        }
        (x, y)
    }
}

/// Average post-treatment risk R-bar(w) on the oracle's midpoint grid.
pub fn post_treatment_risk(w: &SimplexWeights, oracle: &OracleSpec) -> Result<f64> {
    oracle.validate()?;
    if w.len() != oracle.num_controls() {
        return Err(DscError::InvalidArgument(format!(
            "weights have {} entries, oracle has {} controls",
            w.len(),
            oracle.num_controls()
        )));
    }
    let g = oracle.grid_size;
    let inv = 1.0 / g as f64;
    let mut total = 0.0;
    for (treated, controls) in oracle.treated.iter().zip(&oracle.controls) {
        let mut acc = 0.0;
        for i in 0..g {
            let q = (i as f64 + 0.5) * inv;
            let mix: f64 = w
                .as_slice()
                .iter()
                .zip(controls)
                .map(|(&wj, f)| wj * f.eval_unchecked(q))
                .sum();
            let d = mix - treated.eval_unchecked(q);
            acc += d * d;
        }
        total += acc * inv;
    }
    Ok(total / oracle.num_post_periods() as f64)
}

/// Infeasible optimal weights: argmin of the average post-treatment risk,
/// solved on the stacked grid-evaluated design.
pub fn optimal_weights(oracle: &OracleSpec, tol: f64, max_iter: usize) -> Result<SolveReport> {
    oracle.validate()?;
    let g = oracle.grid_size;
    let j = oracle.num_controls();
    let t1 = oracle.num_post_periods();
    let mut x = Vec::with_capacity(t1 * g * j);
    let mut y = Vec::with_capacity(t1 * g);
    for p in 0..t1 {
        let (bx, by) = oracle.grid_block(p);
        x.extend_from_slice(&bx);
        y.extend_from_slice(&by);
    }
    solve_simplex_ls(&x, &y, t1 * g, j, tol, max_iter)
}

/// Everything Theorems 1 and 2 ask for in one computation.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub ratio: f64,
    pub weight_distance: f64,
    pub risk_at_fit: f64,
    pub risk_at_opt: f64,
    pub xi_hat: BTreeMap<u32, f64>,
    pub xi_bar_hat: f64,
    /// Per-period design eigenvalue diagnostics, filled on demand.
    pub eigen: BTreeMap<u32, (f64, f64)>,
}

impl ConvergenceReport {
    /// CSV row `J,M,rep,ratio,weight_distance,risk_fit,risk_opt,xi_bar`.
    pub fn to_csv_row(&self, j: usize, m: usize, rep: usize) -> String {
        format!(
            "{j},{m},{rep},{},{},{},{},{}",
            self.ratio, self.weight_distance, self.risk_at_fit, self.risk_at_opt, self.xi_bar_hat
        )
    }
}

/// Tolerances used when solving for the infeasible optimal weights.
pub const OPT_TOL: f64 = 1e-11;
pub const OPT_MAX_ITER: usize = 200_000;

/// Theorem-1 and Theorem-2 diagnostics for a completed fit against an oracle.
pub fn convergence_report(fit: &DscFit, oracle: &OracleSpec) -> Result<ConvergenceReport> {
    let opt = optimal_weights(oracle, OPT_TOL, OPT_MAX_ITER)?;
    let risk_at_fit = post_treatment_risk(&fit.aggregated, oracle)?;
    let risk_at_opt = post_treatment_risk(&opt.weights, oracle)?;
    if risk_at_opt <= 1e-14 {
        return Err(DscError::DegenerateOracle);
    }
    let xi_hat: BTreeMap<u32, f64> = fit.per_period.iter().map(|(&t, p)| (t, p.loss)).collect();
    Ok(ConvergenceReport {
        ratio: risk_at_fit / risk_at_opt,
        weight_distance: fit.aggregated.distance(&opt.weights),
        risk_at_fit,
        risk_at_opt,
        xi_hat,
        xi_bar_hat: fit.xi_bar_hat(),
        eigen: BTreeMap::new(),
    })
}

/// Theorem-1 ratio R-bar(w-hat) / inf R-bar.
pub fn optimality_ratio(fit: &DscFit, oracle: &OracleSpec) -> Result<f64> {
    convergence_report(fit, oracle).map(|r| r.ratio)
}

/// Theorem-2 distance ||w-hat - w_opt||.
pub fn weight_distance(fit: &DscFit, oracle: &OracleSpec) -> Result<f64> {
    let opt = optimal_weights(oracle, OPT_TOL, OPT_MAX_ITER)?;
    Ok(fit.aggregated.distance(&opt.weights))
}

/// Pre-treatment fit diagnostics: per-period minimized losses and their
/// lambda-average, with perfect-fit periods flagged.
#[derive(Clone, Debug)]
pub struct FitDiagnostics {
    pub xi_hat: BTreeMap<u32, f64>,
    pub xi_bar_hat: f64,
    /// Periods with loss below 1e-12 (a simplex combination reproduces the
    /// treated quantiles exactly).
    pub perfect_fit_periods: Vec<u32>,
}

pub fn pretreatment_fit_diagnostics(fit: &DscFit) -> FitDiagnostics {
    let xi_hat: BTreeMap<u32, f64> = fit.per_period.iter().map(|(&t, p)| (t, p.loss)).collect();
    let perfect_fit_periods = xi_hat
        .iter()
        .filter(|(_, &v)| v < 1e-12)
        .map(|(&t, _)| t)
        .collect();
    FitDiagnostics {
        xi_bar_hat: fit.xi_bar_hat(),
        xi_hat,
        perfect_fit_periods,
    }
}

/// Extreme eigenvalues of M^{-1} X^T X for the period-t design matrix
/// (Assumption-5 diagnostic). Near-zero minimum signals a violation.
pub fn design_eigen_diagnostic(
    panel: &PanelDataset,
    draws: &UniformDrawSequence,
    t: u32,
) -> Result<(f64, f64)> {
    if t > panel.t0() {
        return Err(DscError::InvalidArgument(format!(
            "eigen diagnostic is defined for pre-treatment periods, got {t} > T0 = {}",
            panel.t0()
        )));
    }
    let j = panel.num_controls();
    let m = draws.len();
    let mut x = vec![0.0; m * j];
    for c in 0..j {
        let f = EmpiricalQuantileFn::fit(panel.cell(c + 1, t)?)?;
        let col = build_artificial_sample(&f, draws);
        for (r, v) in col.into_iter().enumerate() {
            x[r * j + c] = v;
        }
    }
    let mut a = vec![0.0; j * j];
    for r in 0..m {
        let xr = &x[r * j..(r + 1) * j];
        for p in 0..j {
            for q in p..j {
                a[p * j + q] += xr[p] * xr[q];
            }
        }
    }
    for p in 0..j {
        for q in 0..p {
            a[p * j + q] = a[q * j + p];
        }
        for q in p..j {
            a[p * j + q] /= m as f64;
        }
    }
    for p in 0..j {
        for q in 0..p {
            a[p * j + q] = a[q * j + p];
        }
    }
    let eig = symmetric_eigenvalues(a, j);
    Ok((eig[0], eig[j - 1]))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub(crate) fn symmetric_eigenvalues(mut a: Vec<f64>, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a[0]];
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        let scale: f64 = (0..n).map(|i| a[i * n + i].abs()).sum::<f64>().max(1e-300);
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}
