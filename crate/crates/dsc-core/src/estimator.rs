//! End-to-end distributional synthetic control fit.
//!
//! Per pre-treatment period the control quantile functions are evaluated at a
//! shared set of uniform draws, the simplex least squares problem is solved,
//! and the per-period weights are lambda-averaged into the DSC weight. The
//! counterfactual quantile function in post-treatment periods is the
//! weighted average of the control empirical quantiles.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::dist::{draw_uniforms, UniformDrawSequence};
use crate::error::{DscError, Result};
use crate::panel::{min_group_size, EstimationConfig, PanelDataset};
use crate::quantile::{build_artificial_sample, EmpiricalQuantileFn};
use crate::simplex::{solve_simplex_ls, SimplexWeights, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Fit of a single pre-treatment period.
#[derive(Clone, Debug)]
pub struct PeriodFit {
    pub weights: SimplexWeights,
    /// Minimized loss L_t(w_t), the xi_t estimate.
    pub loss: f64,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Complete DSC fit: per-period weights, lambdas, and their aggregate.
#[derive(Clone, Debug)]
pub struct DscFit {
    /// Keyed by pre-treatment period value.
    pub per_period: BTreeMap<u32, PeriodFit>,
    /// Lambda weights in pre-period order.
    pub lambdas: Vec<f64>,
    pub aggregated: SimplexWeights,
    pub m_used: usize,
    pub seed: u64,
}

impl DscFit {
    /// True when every per-period solve certified optimality.
    pub fn converged(&self) -> bool {
        self.per_period.values().all(|p| p.converged)
    }

    /// Lambda-weighted average of the per-period losses.
    pub fn xi_bar_hat(&self) -> f64 {
        self.per_period
            .values()
            .zip(&self.lambdas)
            .map(|(p, l)| l * p.loss)
            .sum()
    }

    /// Serialize to the fit-export JSON document.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct FitDoc<'a> {
            weights: &'a [f64],
            per_period_weights: BTreeMap<u32, &'a [f64]>,
            lambdas: &'a [f64],
            per_period_loss: BTreeMap<u32, f64>,
            #[serde(rename = "M")]
            m: usize,
            seed: u64,
        }
        let doc = FitDoc {
            weights: self.aggregated.as_slice(),
            per_period_weights: self
                .per_period
                .iter()
                .map(|(&t, p)| (t, p.weights.as_slice()))
                .collect(),
            lambdas: &self.lambdas,
            per_period_loss: self.per_period.iter().map(|(&t, p)| (t, p.loss)).collect(),
            m: self.m_used,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&doc).expect("fit document serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| DscError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Quantile treatment effect curve for one post-treatment period.
#[derive(Clone, Debug)]
pub struct QteCurve {
    pub period: u32,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Fit the period-t weights from artificial samples at the shared draws.
pub fn fit_period_weights(
    panel: &PanelDataset,
    t: u32,
    draws: &UniformDrawSequence,
    tol: f64,
    max_iter: usize,
) -> Result<PeriodFit> {
    if t > panel.t0() {
        return Err(DscError::InvalidArgument(format!(
            "period {t} is post-treatment; weights are fitted on t <= T0 = {}",
            panel.t0()
        )));
    }
    let j = panel.num_controls();
    let m = draws.len();

    let treated_fn = EmpiricalQuantileFn::fit(panel.cell(0, t)?)?;
    let y = build_artificial_sample(&treated_fn, draws);

    let mut x = vec![0.0; m * j];
    for c in 0..j {
        let f = EmpiricalQuantileFn::fit(panel.cell(c + 1, t)?)?;
        let col = build_artificial_sample(&f, draws);
        for (r, v) in col.into_iter().enumerate() {
            x[r * j + c] = v;
        }
    }

    let rep = solve_simplex_ls(&x, &y, m, j, tol, max_iter)?;
    Ok(PeriodFit {
        weights: rep.weights,
        loss: rep.objective,
        kkt_residual: rep.kkt_residual,
        converged: rep.converged,
    })
}

/// Componentwise convex combination of per-period weights.
pub fn aggregate_weights(
    per_period: &BTreeMap<u32, SimplexWeights>,
    lambdas: &[f64],
) -> Result<SimplexWeights> {
    if per_period.len() != lambdas.len() {
        return Err(DscError::InvalidArgument(format!(
            "{} per-period weight vectors but {} lambdas",
            per_period.len(),
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|&l| !(l >= 0.0)) {
        return Err(DscError::InvalidArgument("lambdas must be nonnegative".into()));
    }
    let sum: f64 = lambdas.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(DscError::InvalidArgument(format!(
            "lambdas must sum to 1, got {sum}"
        )));
    }
    let j = per_period.values().next().map(|w| w.len()).ok_or_else(|| {
        DscError::InvalidArgument("need at least one per-period weight vector".into())
    })?;
    let mut agg = vec![0.0; j];
    for (w, &l) in per_period.values().zip(lambdas) {
        if w.len() != j {
            return Err(DscError::InvalidArgument(
                "per-period weight vectors have inconsistent lengths".into(),
            ));
        }
        for (a, &wi) in agg.iter_mut().zip(w.as_slice()) {
            *a += l * wi;
        }
    }
    // guard the unit-sum invariant against rounding accumulation
    let total: f64 = agg.iter().sum();
    if total > 0.0 {
        for a in &mut agg {
            *a /= total;
        }
    }
    SimplexWeights::new(agg)
}

/// Run Algorithm 1: per-period weights, lambda aggregation, losses.
pub fn fit_dsc(panel: &PanelDataset, config: &EstimationConfig) -> Result<DscFit> {
    let n = min_group_size(panel);
    let m = config.resolve_m(n)?;
    let pre = panel.pre_periods();
    let lambdas = config.resolve_lambdas(pre.len())?;
    let draws = draw_uniforms(m, config.draw_mode.clone(), config.seed)?;

    let mut per_period = BTreeMap::new();
    for &t in &pre {
        let fit = fit_period_weights(panel, t, &draws, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        per_period.insert(t, fit);
    }

    let weights_only: BTreeMap<u32, SimplexWeights> = per_period
        .iter()
        .map(|(&t, p)| (t, p.weights.clone()))
        .collect();
    let aggregated = aggregate_weights(&weights_only, &lambdas)?;

    Ok(DscFit {
        per_period,
        lambdas,
        aggregated,
        m_used: m,
        seed: config.seed,
    })
}

/// Counterfactual quantile of the treated unit at post-period t, level q.
pub fn counterfactual_quantile(
    fit: &DscFit,
    panel: &PanelDataset,
    t: u32,
    q: f64,
) -> Result<f64> {
    if t <= panel.t0() {
        return Err(DscError::InvalidArgument(format!(
            "period {t} is not post-treatment (T0 = {})",
            panel.t0()
        )));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(DscError::InvalidArgument(format!(
            "quantile level must lie in (0,1), got {q}"
        )));
    }
    let mut acc = 0.0;
    for (c, &w) in fit.aggregated.as_slice().iter().enumerate() {
        let f = EmpiricalQuantileFn::fit(panel.cell(c + 1, t)?)?;
        acc += w * f.eval_unchecked(q);
    }
    Ok(acc)
}

/// Quantile treatment effect curve at post-period t over a grid of levels.
pub fn qte_curve(fit: &DscFit, panel: &PanelDataset, t: u32, grid: &[f64]) -> Result<QteCurve> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DscError::InvalidArgument(
            "QTE grid must be non-empty and strictly increasing".into(),
        ));
    }
    if grid[0] <= 0.0 || *grid.last().unwrap() >= 1.0 {
        return Err(DscError::InvalidArgument(
            "QTE grid must lie strictly inside (0,1)".into(),
        ));
    }
    if t <= panel.t0() {
        return Err(DscError::InvalidArgument(format!(
            "period {t} is not post-treatment (T0 = {})",
            panel.t0()
        )));
    }
    let treated = EmpiricalQuantileFn::fit(panel.cell(0, t)?)?;
    let controls: Vec<EmpiricalQuantileFn> = (0..panel.num_controls())
        .map(|c| EmpiricalQuantileFn::fit(panel.cell(c + 1, t).unwrap()))
        .collect::<Result<_>>()?;
    let values = grid
        .iter()
        .map(|&q| {
            let counterfactual: f64 = fit
                .aggregated
                .as_slice()
                .iter()
                .zip(&controls)
                .map(|(&w, f)| w * f.eval_unchecked(q))
                .sum();
            treated.eval_unchecked(q) - counterfactual
        })
        .collect();
    Ok(QteCurve {
        period: t,
        grid: grid.to_vec(),
        values,
    })
}

/// Default 99-point QTE grid q = 0.01..0.99.
pub fn default_qte_grid(points: usize) -> Vec<f64> {
    let step = 1.0 / (points + 1) as f64;
    (1..=points).map(|i| i as f64 * step).collect()
}

/// Write QTE curves for all post periods as CSV `t,q,qte`.
pub fn write_qte_csv(curves: &[QteCurve], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|source| DscError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut w = BufWriter::new(file);
    let io_err = |source| DscError::Io {
        path: path.to_path_buf(),
        source,
    };
    writeln!(w, "t,q,qte").map_err(io_err)?;
    for curve in curves {
        for (q, v) in curve.grid.iter().zip(&curve.values) {
            writeln!(w, "{},{q},{v}", curve.period).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::DrawMode;
    use crate::panel::LambdaSpec;
    use crate::rng::SplitMix64;

    /// Panel where control `dup` duplicates the treated unit everywhere.
    fn duplicated_panel(j: usize, n: usize, t: u32, t0: u32, dup: usize, seed: u64) -> PanelDataset {
        let mut rng = SplitMix64::new(seed);
        let mut rows = Vec::new();
        let treated: Vec<Vec<f64>> = (0..t)
            .map(|_| (0..n).map(|_| rng.next_open01() * 5.0).collect())
            .collect();
        for (p, cell) in treated.iter().enumerate() {
            for &v in cell {
                rows.push((1, p as u32 + 1, v));
            }
        }
        for c in 0..j {
            for p in 0..t as usize {
                if c == dup {
                    for &v in &treated[p] {
                        rows.push((c as u32 + 2, p as u32 + 1, v));
                    }
                } else {
                    for _ in 0..n {
                        rows.push((c as u32 + 2, p as u32 + 1, rng.next_open01() * 5.0 + 2.0));
                    }
                }
            }
        }
        PanelDataset::from_rows(&rows, t0).unwrap()
    }

    fn constant_panel() -> PanelDataset {
        // controls constant at 0 and 1, treated constant at 0.3
        let mut rows = Vec::new();
        for t in 1..=2u32 {
            for _ in 0..4 {
                rows.push((1, t, 0.3));
                rows.push((2, t, 0.0));
                rows.push((3, t, 1.0));
            }
        }
        PanelDataset::from_rows(&rows, 1).unwrap()
    }

    #[test]
    fn perfect_fit_period() {
        let panel = duplicated_panel(3, 30, 3, 2, 1, 1);
        let draws = draw_uniforms(100, DrawMode::Iid, 0).unwrap();
        let fit = fit_period_weights(&panel, 1, &draws, 1e-10, 50_000).unwrap();
        assert!(fit.loss < 1e-16);
        assert!((fit.weights.as_slice()[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn constant_controls_closed_form() {
        let panel = constant_panel();
        let draws = draw_uniforms(50, DrawMode::Iid, 0).unwrap();
        let fit = fit_period_weights(&panel, 1, &draws, 1e-12, 50_000).unwrap();
        assert!((fit.weights.as_slice()[0] - 0.7).abs() < 1e-9);
        assert!((fit.weights.as_slice()[1] - 0.3).abs() < 1e-9);
        assert!(fit.loss < 1e-18);
    }

    #[test]
    fn loss_beats_random_search() {
        let panel = duplicated_panel(3, 200, 2, 1, usize::MAX, 3); // no duplicate
        let draws = draw_uniforms(400, DrawMode::Iid, 0).unwrap();
        let fit = fit_period_weights(&panel, 1, &draws, 1e-10, 50_000).unwrap();

        // random-search oracle over 10^4 simplex points
        let j = 3;
        let m = 400;
        let treated = EmpiricalQuantileFn::fit(panel.cell(0, 1).unwrap()).unwrap();
        let y = build_artificial_sample(&treated, &draws);
        let mut x = vec![0.0; m * j];
        for c in 0..j {
            let f = EmpiricalQuantileFn::fit(panel.cell(c + 1, 1).unwrap()).unwrap();
            let col = build_artificial_sample(&f, &draws);
            for (r, v) in col.into_iter().enumerate() {
                x[r * j + c] = v;
            }
        }
        let mut rng = SplitMix64::new(99);
        for _ in 0..10_000 {
            let raw: Vec<f64> = (0..j).map(|_| -rng.next_open01().ln()).collect();
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let mut obj = 0.0;
            for r in 0..m {
                let pred: f64 = (0..j).map(|c| w[c] * x[r * j + c]).sum();
                obj += (pred - y[r]) * (pred - y[r]);
            }
            obj /= m as f64;
            assert!(fit.loss <= obj + 1e-12);
        }
    }

    #[test]
    fn aggregate_identical_and_degenerate_lambda() {
        let w = SimplexWeights::new(vec![0.25, 0.75]).unwrap();
        let mut per = BTreeMap::new();
        per.insert(1, w.clone());
        per.insert(2, w.clone());
        let agg = aggregate_weights(&per, &[0.5, 0.5]).unwrap();
        assert_eq!(agg.as_slice(), w.as_slice());

        let mut per = BTreeMap::new();
        per.insert(1, SimplexWeights::new(vec![0.9, 0.1]).unwrap());
        per.insert(2, SimplexWeights::new(vec![0.1, 0.9]).unwrap());
        let agg = aggregate_weights(&per, &[1.0, 0.0]).unwrap();
        assert_eq!(agg.as_slice(), &[0.9, 0.1]);
    }

    #[test]
    fn aggregate_hand_example() {
        let mut per = BTreeMap::new();
        per.insert(1, SimplexWeights::new(vec![1.0, 0.0]).unwrap());
        per.insert(2, SimplexWeights::new(vec![0.0, 1.0]).unwrap());
        let agg = aggregate_weights(&per, &[0.5, 0.5]).unwrap();
        assert_eq!(agg.as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn aggregate_lambda_mismatch() {
        let mut per = BTreeMap::new();
        per.insert(1, SimplexWeights::uniform(2));
        assert!(aggregate_weights(&per, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn fit_dsc_single_pre_period() {
        let panel = duplicated_panel(2, 20, 2, 1, 0, 4);
        let cfg = EstimationConfig {
            m: Some(60),
            ..Default::default()
        };
        let fit = fit_dsc(&panel, &cfg).unwrap();
        assert_eq!(fit.per_period.len(), 1);
        assert_eq!(
            fit.aggregated.as_slice(),
            fit.per_period[&1].weights.as_slice()
        );
    }

    #[test]
    fn fit_dsc_duplicated_control_recovers_vertex() {
        let panel = duplicated_panel(3, 40, 4, 3, 1, 5);
        let cfg = EstimationConfig::default();
        let fit = fit_dsc(&panel, &cfg).unwrap();
        assert!((fit.aggregated.as_slice()[1] - 1.0).abs() < 1e-6);
        for (&t, p) in &fit.per_period {
            assert!(p.loss < 1e-14, "period {t} loss {}", p.loss);
        }
    }

    #[test]
    fn fit_dsc_deterministic() {
        let panel = duplicated_panel(4, 25, 4, 2, usize::MAX, 6);
        let cfg = EstimationConfig {
            m: Some(120),
            seed: 42,
            ..Default::default()
        };
        let a = fit_dsc(&panel, &cfg).unwrap();
        let b = fit_dsc(&panel, &cfg).unwrap();
        assert_eq!(a.aggregated.as_slice(), b.aggregated.as_slice());
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn aggregation_identity_invariant() {
        let panel = duplicated_panel(3, 30, 5, 3, usize::MAX, 7);
        let cfg = EstimationConfig {
            lambda: LambdaSpec::Explicit(vec![0.2, 0.3, 0.5]),
            ..Default::default()
        };
        let fit = fit_dsc(&panel, &cfg).unwrap();
        let j = fit.aggregated.len();
        for c in 0..j {
            let manual: f64 = fit
                .per_period
                .values()
                .zip(&fit.lambdas)
                .map(|(p, l)| l * p.weights.as_slice()[c])
                .sum();
            assert!((fit.aggregated.as_slice()[c] - manual).abs() <= 1e-12);
        }
    }

    #[test]
    fn loss_not_worse_than_uniform() {
        let panel = duplicated_panel(4, 50, 3, 2, usize::MAX, 8);
        let cfg = EstimationConfig::default();
        let fit = fit_dsc(&panel, &cfg).unwrap();
        let draws = draw_uniforms(fit.m_used, DrawMode::Iid, fit.seed).unwrap();
        for (&t, p) in &fit.per_period {
            // loss at uniform weights
            let j = panel.num_controls();
            let treated = EmpiricalQuantileFn::fit(panel.cell(0, t).unwrap()).unwrap();
            let y = build_artificial_sample(&treated, &draws);
            let mut obj = 0.0;
            for (r, &yv) in y.iter().enumerate() {
                let _ = r;
                let mut pred = 0.0;
                for c in 0..j {
                    let f = EmpiricalQuantileFn::fit(panel.cell(c + 1, t).unwrap()).unwrap();
                    pred += f.eval_unchecked(draws.values()[r]) / j as f64;
                }
                obj += (pred - yv) * (pred - yv);
            }
            obj /= y.len() as f64;
            assert!(p.loss <= obj + 1e-12, "period {t}");
        }
    }

    #[test]
    fn counterfactual_from_vertex_weights() {
        let panel = duplicated_panel(3, 30, 4, 2, 1, 9);
        let cfg = EstimationConfig::default();
        let fit = fit_dsc(&panel, &cfg).unwrap();
        // aggregated ~ e_2: counterfactual equals control 2's quantile
        let f = EmpiricalQuantileFn::fit(panel.cell(2, 3).unwrap()).unwrap();
        for &q in &[0.1, 0.5, 0.9] {
            let cf = counterfactual_quantile(&fit, &panel, 3, q).unwrap();
            assert!((cf - f.eval_unchecked(q)).abs() < 1e-6);
        }
    }

    #[test]
    fn counterfactual_constant_controls() {
        // controls constant at 0 and 10, w = (0.3, 0.7) -> 7 at any q
        let mut rows = Vec::new();
        for t in 1..=2u32 {
            rows.push((1, t, 3.0));
            rows.push((2, t, 0.0));
            rows.push((3, t, 10.0));
        }
        let panel = PanelDataset::from_rows(&rows, 1).unwrap();
        let fit = DscFit {
            per_period: BTreeMap::new(),
            lambdas: vec![],
            aggregated: SimplexWeights::new(vec![0.3, 0.7]).unwrap(),
            m_used: 1,
            seed: 0,
        };
        for &q in &[0.2, 0.5, 0.8] {
            assert!((counterfactual_quantile(&fit, &panel, 2, q).unwrap() - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn counterfactual_monotone_in_q() {
        let panel = duplicated_panel(3, 40, 3, 2, usize::MAX, 10);
        let fit = fit_dsc(&panel, &EstimationConfig::default()).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=99 {
            let v = counterfactual_quantile(&fit, &panel, 3, i as f64 / 100.0).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn qte_shift_equivariance() {
        // treated = control 2's sample shifted by +5, w forced to e_2
        let mut rng = SplitMix64::new(11);
        let base: Vec<f64> = (0..30).map(|_| rng.next_open01() * 4.0).collect();
        let mut rows = Vec::new();
        for t in 1..=2u32 {
            for &v in &base {
                rows.push((1, t, if t == 2 { v + 5.0 } else { v }));
                rows.push((2, t, v));
                rows.push((3, t, v * 2.0 + 1.0));
            }
        }
        let panel = PanelDataset::from_rows(&rows, 1).unwrap();
        let fit = fit_dsc(&panel, &EstimationConfig::default()).unwrap();
        assert!((fit.aggregated.as_slice()[0] - 1.0).abs() < 1e-6);
        let curve = qte_curve(&fit, &panel, 2, &default_qte_grid(99)).unwrap();
        for v in &curve.values {
            assert!((v - 5.0).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn qte_placebo_zero() {
        // post-treatment treated identical to the duplicated control
        let panel = duplicated_panel(3, 25, 4, 2, 1, 12);
        let fit = fit_dsc(&panel, &EstimationConfig::default()).unwrap();
        for t in [3u32, 4] {
            let curve = qte_curve(&fit, &panel, t, &default_qte_grid(99)).unwrap();
            for v in &curve.values {
                assert!(v.abs() <= 1e-6, "t={t} qte={v}");
            }
        }
    }

    #[test]
    fn qte_median_is_order_statistic_difference() {
        let mut rows = Vec::new();
        let treated_post = [5.0, 1.0, 9.0, 3.0, 7.0];
        let control_post = [2.0, 8.0, 4.0, 6.0, 0.0];
        for (i, &v) in treated_post.iter().enumerate() {
            rows.push((1, 1, v));
            rows.push((2, 1, v));
            let _ = i;
        }
        for (t_v, c_v) in treated_post.iter().zip(&control_post) {
            rows.push((1, 2, *t_v));
            rows.push((2, 2, *c_v));
        }
        let panel = PanelDataset::from_rows(&rows, 1).unwrap();
        let fit = fit_dsc(&panel, &EstimationConfig::default()).unwrap();
        let curve = qte_curve(&fit, &panel, 2, &[0.5]).unwrap();
        // medians: treated 5, control 4
        assert!((curve.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qte_grid_validation() {
        let panel = constant_panel();
        let fit = fit_dsc(&panel, &EstimationConfig::default()).unwrap();
        assert!(qte_curve(&fit, &panel, 2, &[]).is_err());
        assert!(qte_curve(&fit, &panel, 2, &[0.5, 0.4]).is_err());
        assert!(qte_curve(&fit, &panel, 2, &[0.0, 0.5]).is_err());
        assert!(qte_curve(&fit, &panel, 1, &[0.5]).is_err());
    }
}
