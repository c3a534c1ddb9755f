//! Monte Carlo harness: the two data-generating processes, the replication
//! loop, and grid aggregation.
//!
//! Each replication carries its own derived seed, so a grid run is
//! reproducible and its output is independent of how replications are
//! scheduled across threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::asymptotics::{convergence_report, ConvergenceReport, OracleSpec};
use crate::dist::{draw_uniforms, AnalyticDistribution, DrawMode, NormalSampler};
use crate::error::{DscError, Result};
use crate::estimator::{aggregate_weights, DscFit, PeriodFit};
use crate::quantile::{build_artificial_sample, EmpiricalQuantileFn};
use crate::rng::{derive_seed, SplitMix64};
use crate::simplex::{solve_simplex_ls, SimplexWeights, DEFAULT_MAX_ITER};
use crate::wasserstein::QuantileFnRef;

pub const DEFAULT_T0: usize = 10;
pub const DEFAULT_T1: usize = 5;
pub const DEFAULT_REPS: usize = 200;
/// Evaluation-sample size behind the factor DGP's empirical oracle.
pub const DEFAULT_ORACLE_EVAL: usize = 100_000;
/// Integration grid for simulation risk evaluation.
pub const DEFAULT_SIM_GRID: usize = 1_000;
/// KKT tolerance for the per-period fits inside replications. Looser than
/// the estimator default: the quantile-evaluated designs are nearly rank
/// deficient, where FISTA's tail convergence is slow; at this tolerance the
/// weights sit within ~1e-5 of the tightly-solved ones, far below the scale
/// of any replication-level summary.
pub const SIM_FIT_TOL: f64 = 1e-6;

/// Data-generating process for one simulated panel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dgp {
    /// Treated ~ chi-square(2); control j ~ Normal(mu_j, sigma_j^2) with
    /// mu_j ~ U(3,10) and sigma_j = 3 (j odd) or 2.5 (j even).
    ModelFree { j: usize },
    /// Two-factor quantile structure: outcomes are loading-factor inner
    /// products, with factors common to all units at each (t, m).
    QuantileFactor { j: usize },
}

impl Dgp {
    pub fn tag(&self) -> &'static str {
        match self {
            Self::ModelFree { .. } => "model-free",
            Self::QuantileFactor { .. } => "factor",
        }
    }

    fn tag_code(&self) -> u64 {
        match self {
            Self::ModelFree { .. } => 1,
            Self::QuantileFactor { .. } => 2,
        }
    }

    pub fn num_controls(&self) -> usize {
        match self {
            Self::ModelFree { j } | Self::QuantileFactor { j } => *j,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_controls() < 2 {
            return Err(DscError::InvalidArgument(format!(
                "DGP needs at least 2 control units, got {}",
                self.num_controls()
            )));
        }
        Ok(())
    }
}

/// One generated replication: the draw tensor and the oracle it should be
/// judged against.
pub struct Replication {
    /// `data[i][t][m]`: unit i (0 = treated, 1..=J controls), pre-treatment
    /// period t (0-based), draw m.
    pub data: Vec<Vec<Vec<f64>>>,
    pub oracle: OracleSpec,
}

fn model_free_sigma(j: usize) -> f64 {
    if j % 2 == 1 {
        3.0
    } else {
        2.5
    }
}

fn factor_sigma(i: usize) -> f64 {
    if i % 2 == 1 {
        2.7
    } else {
        3.0
    }
}

/// Generate one replication's draw tensor and oracle. Deterministic in seed.
pub fn gen_replication(
    dgp: &Dgp,
    m: usize,
    t0: usize,
    t1: usize,
    oracle_eval_size: usize,
    grid_size: usize,
    seed: u64,
) -> Result<Replication> {
    dgp.validate()?;
    if m == 0 || t0 == 0 || t1 == 0 || grid_size == 0 {
        return Err(DscError::InvalidArgument(
            "M, T0, T1 and grid size must all be at least 1".into(),
        ));
    }
    let j = dgp.num_controls();
    match dgp {
        Dgp::ModelFree { .. } => {
            let mut prng = SplitMix64::new(derive_seed(seed, &[1]));
            let mus: Vec<f64> = (0..j).map(|_| 3.0 + 7.0 * prng.next_open01()).collect();

            let mut urng = SplitMix64::new(derive_seed(seed, &[2]));
            let mut nrng = NormalSampler::new(derive_seed(seed, &[3]));
            let mut data = vec![vec![vec![0.0; m]; t0]; j + 1];
            for t in 0..t0 {
                for mm in 0..m {
                    // chi-square(2) by exact inversion: F^{-1}(u) = -2 ln(1-u)
                    data[0][t][mm] = -2.0 * (1.0 - urng.next_open01()).ln();
                }
                for (c, &mu) in mus.iter().enumerate() {
                    let sigma = model_free_sigma(c + 1);
                    for mm in 0..m {
                        data[c + 1][t][mm] = nrng.next(mu, sigma);
                    }
                }
            }

            let treated_fn = QuantileFnRef::Analytic(AnalyticDistribution::chi_square(2.0)?);
            let controls: Vec<QuantileFnRef> = mus
                .iter()
                .enumerate()
                .map(|(c, &mu)| {
                    Ok(QuantileFnRef::Analytic(AnalyticDistribution::normal(
                        mu,
                        model_free_sigma(c + 1),
                    )?))
                })
                .collect::<Result<_>>()?;
            let oracle = OracleSpec {
                treated: vec![treated_fn; t1],
                controls: vec![controls; t1],
                grid_size,
            };
            Ok(Replication { data, oracle })
        }
        Dgp::QuantileFactor { .. } => {
            if oracle_eval_size == 0 {
                return Err(DscError::InvalidArgument(
                    "oracle evaluation size must be at least 1".into(),
                ));
            }
            let mut prng = SplitMix64::new(derive_seed(seed, &[1]));
            let mut pnrm = NormalSampler::new(derive_seed(seed, &[4]));
            // mu_t over all T0 + T1 periods, in period order
            let mu_t: Vec<f64> = (0..t0 + t1).map(|_| pnrm.next_standard()).collect();
            // loading means: mu_1 = 2 for the treated, U(2,10) for controls
            let mut mu_i = vec![2.0];
            mu_i.extend((0..j).map(|_| 2.0 + 8.0 * prng.next_open01()));

            // loadings once per (i, m), shared across periods
            let mut lrng = NormalSampler::new(derive_seed(seed, &[5]));
            let mut lam1 = vec![vec![0.0; m]; j + 1];
            let mut lam2 = vec![vec![0.0; m]; j + 1];
            for i in 0..=j {
                let sigma = factor_sigma(i + 1);
                for mm in 0..m {
                    lam1[i][mm] = lrng.next(mu_i[i], sigma);
                    lam2[i][mm] = lrng.next(mu_i[i], sigma);
                }
            }

            // factors once per (s, t, m), common to all units
            let mut frng = NormalSampler::new(derive_seed(seed, &[6]));
            let mut data = vec![vec![vec![0.0; m]; t0]; j + 1];
            for (t, &mu) in mu_t.iter().take(t0).enumerate() {
                for mm in 0..m {
                    let f1 = frng.next(mu, 3.0);
                    let f2 = frng.next(mu, 3.0);
                    for i in 0..=j {
                        data[i][t][mm] = lam1[i][mm] * f1 + lam2[i][mm] * f2;
                    }
                }
            }

            // empirical oracle from fresh evaluation samples; fresh loadings
            // are shared across post periods (the per-period marginal only
            // depends on the loading distribution, not on which draw is used)
            let mut orng = NormalSampler::new(derive_seed(seed, &[7]));
            let e = oracle_eval_size;
            let mut elam1 = vec![vec![0.0; e]; j + 1];
            let mut elam2 = vec![vec![0.0; e]; j + 1];
            for i in 0..=j {
                let sigma = factor_sigma(i + 1);
                for k in 0..e {
                    elam1[i][k] = orng.next(mu_i[i], sigma);
                    elam2[i][k] = orng.next(mu_i[i], sigma);
                }
            }
            let mut treated = Vec::with_capacity(t1);
            let mut controls = Vec::with_capacity(t1);
            for &mu in mu_t.iter().skip(t0) {
                let mut row = Vec::with_capacity(j);
                for i in 0..=j {
                    let sample: Vec<f64> = (0..e)
                        .map(|k| {
                            elam1[i][k] * orng.next(mu, 3.0) + elam2[i][k] * orng.next(mu, 3.0)
                        })
                        .collect();
                    let f = QuantileFnRef::Empirical(EmpiricalQuantileFn::fit(&sample)?);
                    if i == 0 {
                        treated.push(f);
                    } else {
                        row.push(f);
                    }
                }
                controls.push(row);
            }
            let oracle = OracleSpec {
                treated,
                controls,
                grid_size,
            };
            Ok(Replication { data, oracle })
        }
    }
}

/// One full replication: generate data, estimate per-period weights from
/// the generated draws (empirical quantile functions evaluated at shared
/// uniform draws), aggregate with uniform lambdas, score against the oracle.
pub fn run_replication(
    dgp: &Dgp,
    m: usize,
    t0: usize,
    t1: usize,
    oracle_eval_size: usize,
    grid_size: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    let rep = gen_replication(dgp, m, t0, t1, oracle_eval_size, grid_size, seed)?;
    let j = dgp.num_controls();

    // each generated cell is a sample of size M; the estimation stage draws
    // M more uniforms, shared across units and periods
    let draws = draw_uniforms(m, DrawMode::Iid, derive_seed(seed, &[100]))?;
    let mut per_period = BTreeMap::new();
    let mut x = vec![0.0; m * j];
    for t in 0..t0 {
        let y = build_artificial_sample(&EmpiricalQuantileFn::fit(&rep.data[0][t])?, &draws);
        for c in 0..j {
            let col =
                build_artificial_sample(&EmpiricalQuantileFn::fit(&rep.data[c + 1][t])?, &draws);
            for (r, v) in col.into_iter().enumerate() {
                x[r * j + c] = v;
            }
        }
        let solved = solve_simplex_ls(&x, &y, m, j, SIM_FIT_TOL, DEFAULT_MAX_ITER)?;
        per_period.insert(
            (t + 1) as u32,
            PeriodFit {
                weights: solved.weights,
                loss: solved.objective,
                kkt_residual: solved.kkt_residual,
                converged: solved.converged,
            },
        );
    }

    let lambdas = vec![1.0 / t0 as f64; t0];
    let weights_by_period: BTreeMap<u32, SimplexWeights> = per_period
        .iter()
        .map(|(&t, p)| (t, p.weights.clone()))
        .collect();
    let aggregated = aggregate_weights(&weights_by_period, &lambdas)?;
    let fit = DscFit {
        per_period,
        lambdas,
        aggregated,
        m_used: m,
        seed,
    };
    convergence_report(&fit, &rep.oracle)
}

/// Full simulation design: every (J, M) cell is run `reps` times.
#[derive(Clone, Debug)]
pub struct SimulationGrid {
    pub dgp: Dgp,
    pub j_list: Vec<usize>,
    pub m_list: Vec<usize>,
    pub reps: usize,
    pub t0: usize,
    pub t1: usize,
    pub master_seed: u64,
    pub oracle_eval_size: usize,
    pub grid_size: usize,
}

impl SimulationGrid {
    pub fn new(dgp: Dgp, j_list: Vec<usize>, m_list: Vec<usize>, reps: usize, master_seed: u64) -> Self {
        Self {
            dgp,
            j_list,
            m_list,
            reps,
            t0: DEFAULT_T0,
            t1: DEFAULT_T1,
            master_seed,
            oracle_eval_size: DEFAULT_ORACLE_EVAL,
            grid_size: DEFAULT_SIM_GRID,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_list.is_empty() || self.m_list.is_empty() {
            return Err(DscError::InvalidArgument(
                "J and M lists must be non-empty".into(),
            ));
        }
        for &j in &self.j_list {
            self.dgp_with_j(j).validate()?;
        }
        if self.reps == 0 {
            return Err(DscError::InvalidArgument("reps must be at least 1".into()));
        }
        if self.t0 == 0 || self.t1 == 0 {
            return Err(DscError::InvalidArgument("T0 and T1 must be at least 1".into()));
        }
        Ok(())
    }

    fn dgp_with_j(&self, j: usize) -> Dgp {
        match self.dgp {
            Dgp::ModelFree { .. } => Dgp::ModelFree { j },
            Dgp::QuantileFactor { .. } => Dgp::QuantileFactor { j },
        }
    }

    /// Per-replication seed for cell (J, M), replication index `rep`.
    pub fn rep_seed(&self, j: usize, m: usize, rep: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[self.dgp.tag_code(), j as u64, m as u64, rep as u64],
        )
    }
}

/// One aggregated row per (J, M) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub dgp_tag: &'static str,
    pub j: usize,
    pub m: usize,
    pub reps: usize,
    pub mean_ratio: f64,
    pub se_ratio: f64,
    pub mean_wdist: f64,
    pub se_wdist: f64,
}

/// One row per replication.
#[derive(Clone, Debug, PartialEq)]
pub struct RepRow {
    pub dgp_tag: &'static str,
    pub j: usize,
    pub m: usize,
    pub rep: usize,
    pub seed: u64,
    pub ratio: f64,
    pub wdist: f64,
    pub xi_bar: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
    pub per_rep: Vec<RepRow>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Run every cell of the grid. Replications are parallel; results are
/// aggregated in replication order, so the report does not depend on the
/// number of threads.
pub fn run_grid(grid: &SimulationGrid) -> Result<SimulationReport> {
    grid.validate()?;
    let mut rows = Vec::new();
    let mut per_rep = Vec::new();
    for &j in &grid.j_list {
        let dgp = grid.dgp_with_j(j);
        dgp.validate()?;
        for &m in &grid.m_list {
            let seeds: Vec<u64> = (0..grid.reps).map(|r| grid.rep_seed(j, m, r)).collect();
            let results: Vec<Result<ConvergenceReport>> = seeds
                .par_iter()
                .map(|&seed| {
                    run_replication(
                        &dgp,
                        m,
                        grid.t0,
                        grid.t1,
                        grid.oracle_eval_size,
                        grid.grid_size,
                        seed,
                    )
                    .map_err(|e| DscError::ReplicationFailed {
                        seed,
                        message: e.to_string(),
                    })
                })
                .collect();
            let mut ratios = Vec::with_capacity(grid.reps);
            let mut wdists = Vec::with_capacity(grid.reps);
            for (rep, res) in results.into_iter().enumerate() {
                let report = res?;
                ratios.push(report.ratio);
                wdists.push(report.weight_distance);
                per_rep.push(RepRow {
                    dgp_tag: dgp.tag(),
                    j,
                    m,
                    rep,
                    seed: seeds[rep],
                    ratio: report.ratio,
                    wdist: report.weight_distance,
                    xi_bar: report.xi_bar_hat,
                });
            }
            let (mean_ratio, se_ratio) = mean_se(&ratios);
            let (mean_wdist, se_wdist) = mean_se(&wdists);
            rows.push(ReportRow {
                dgp_tag: dgp.tag(),
                j,
                m,
                reps: grid.reps,
                mean_ratio,
                se_ratio,
                mean_wdist,
                se_wdist,
            });
        }
    }
    Ok(SimulationReport { rows, per_rep })
}

impl SimulationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dgp,J,M,reps,mean_ratio,se_ratio,mean_wdist,se_wdist\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dgp_tag, r.j, r.m, r.reps, r.mean_ratio, r.se_ratio, r.mean_wdist, r.se_wdist
            )
            .unwrap();
        }
        out
    }

    pub fn per_rep_csv(&self) -> String {
        let mut out = String::from("dgp,J,M,rep,seed,ratio,wdist,xi_bar\n");
        for r in &self.per_rep {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dgp_tag, r.j, r.m, r.rep, r.seed, r.ratio, r.wdist, r.xi_bar
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| DscError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn write_per_rep_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.per_rep_csv()).map_err(|source| DscError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::post_treatment_risk;
    use crate::dist::normal_quantile_unchecked;

    fn small_mf() -> Dgp {
        Dgp::ModelFree { j: 5 }
    }

    #[test]
    fn dgp_validation() {
        assert!(Dgp::ModelFree { j: 1 }.validate().is_err());
        assert!(Dgp::QuantileFactor { j: 2 }.validate().is_ok());
    }

    #[test]
    fn model_free_treated_mean_clt_band() {
        let rep = gen_replication(&Dgp::ModelFree { j: 2 }, 100_000, 1, 1, 1, 100, 11).unwrap();
        let mean: f64 = rep.data[0][0].iter().sum::<f64>() / 100_000.0;
        // chi-square(2): mean 2, sd 2, so se(mean) = 2/sqrt(1e5)
        let se = 2.0 / (100_000f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn model_free_even_control_sd() {
        let rep = gen_replication(&Dgp::ModelFree { j: 3 }, 100_000, 1, 1, 1, 100, 12).unwrap();
        let draws = &rep.data[2][0]; // control j=2 (even): sigma = 2.5
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 2.5).abs() / 2.5 < 0.01, "sd {sd}");
    }

    #[test]
    fn gen_is_deterministic() {
        for dgp in [small_mf(), Dgp::QuantileFactor { j: 3 }] {
            let a = gen_replication(&dgp, 30, 2, 2, 500, 100, 77).unwrap();
            let b = gen_replication(&dgp, 30, 2, 2, 500, 100, 77).unwrap();
            assert_eq!(a.data, b.data);
        }
    }

    #[test]
    fn disjoint_seeds_uncorrelated() {
        let a = gen_replication(&small_mf(), 10_000, 1, 1, 1, 100, 1001).unwrap();
        let b = gen_replication(&small_mf(), 10_000, 1, 1, 1, 100, 1002).unwrap();
        let x = &a.data[1][0];
        let y = &b.data[1][0];
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut dx = 0.0;
        let mut dy = 0.0;
        for (u, v) in x.iter().zip(y) {
            num += (u - mx) * (v - my);
            dx += (u - mx) * (u - mx);
            dy += (v - my) * (v - my);
        }
        let rho = num / (dx * dy).sqrt();
        assert!(rho.abs() < 0.05, "cross-correlation {rho}");
    }

    #[test]
    fn model_free_oracle_matches_mc_risk() {
        // analytic-oracle risk at uniform weights vs a 10^6-draw Monte Carlo
        let dgp = Dgp::ModelFree { j: 4 };
        let rep = gen_replication(&dgp, 10, 1, 1, 1, 2_000, 55).unwrap();
        let w = SimplexWeights::uniform(4);
        let grid_risk = post_treatment_risk(&w, &rep.oracle).unwrap();

        // MC: E[(sum_j w_j F_j^{-1}(U) - F_1^{-1}(U))^2] over common U
        let mut rng = SplitMix64::new(555);
        let mut acc = 0.0;
        let n = 1_000_000;
        for _ in 0..n {
            let u = rng.next_open01();
            let z = normal_quantile_unchecked(u);
            let mut mix = 0.0;
            for c in 0..4 {
                if let QuantileFnRef::Analytic(AnalyticDistribution::Normal { mu, sigma }) =
                    &rep.oracle.controls[0][c]
                {
                    mix += 0.25 * (mu + sigma * z);
                }
            }
            let treated = -2.0 * (1.0 - u).ln();
            acc += (mix - treated) * (mix - treated);
        }
        let mc_risk = acc / n as f64;
        assert!(
            (grid_risk - mc_risk).abs() / mc_risk < 0.01,
            "{grid_risk} vs {mc_risk}"
        );
    }

    #[test]
    fn factor_oracle_marginals() {
        // treated (unit 1) post-period outcome is lam1*f1 + lam2*f2 with
        // lam ~ N(2, 2.7^2), f ~ N(mu_t, 9); its mean is 2*mu_t + 2*mu_t
        let dgp = Dgp::QuantileFactor { j: 2 };
        let rep = gen_replication(&dgp, 10, 1, 1, 200_000, 500, 3).unwrap();
        let f = &rep.oracle.treated[0];
        // integrate the empirical quantile function for the mean
        let g = 20_000;
        let mean: f64 = (0..g)
            .map(|i| f.eval((i as f64 + 0.5) / g as f64).unwrap())
            .sum::<f64>()
            / g as f64;
        // recover mu_t from the generator's own parameter stream
        let mut pnrm = NormalSampler::new(derive_seed(3, &[4]));
        let mu_t: Vec<f64> = (0..2).map(|_| pnrm.next_standard()).collect();
        let expected = 4.0 * mu_t[1];
        // eval-sample noise: sd of the outcome is a few tens; 200k draws
        assert!((mean - expected).abs() < 0.5, "{mean} vs {expected}");
    }

    #[test]
    fn run_replication_infimum_property() {
        let rep = run_replication(&small_mf(), 200, 3, 2, 1, 500, 4242).unwrap();
        assert!(rep.ratio >= 1.0 - 1e-10);
        assert!(rep.weight_distance >= 0.0);
        assert!(rep.xi_bar_hat > 0.0);
    }

    #[test]
    fn median_ratio_improves_with_m() {
        let at = |m: usize| -> f64 {
            let mut v: Vec<f64> = (0..30)
                .map(|r| {
                    run_replication(&Dgp::ModelFree { j: 6 }, m, 4, 2, 1, 500, 9000 + r)
                        .unwrap()
                        .ratio
                })
                .collect();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[15]
        };
        let coarse = at(50);
        let fine = at(400);
        assert!(fine < coarse, "median ratio {fine} !< {coarse}");
    }

    #[test]
    fn grid_r1_matches_single_replication() {
        let grid = SimulationGrid {
            oracle_eval_size: 2_000,
            grid_size: 300,
            t0: 3,
            t1: 2,
            ..SimulationGrid::new(Dgp::QuantileFactor { j: 3 }, vec![3], vec![40], 1, 5)
        };
        let report = run_grid(&grid).unwrap();
        assert_eq!(report.rows.len(), 1);
        let seed = grid.rep_seed(3, 40, 0);
        let single =
            run_replication(&Dgp::QuantileFactor { j: 3 }, 40, 3, 2, 2_000, 300, seed).unwrap();
        assert_eq!(report.rows[0].mean_ratio, single.ratio);
        assert_eq!(report.rows[0].se_ratio, 0.0);
        assert_eq!(report.per_rep[0].wdist, single.weight_distance);
    }

    #[test]
    fn grid_deterministic_and_csv_shape() {
        let grid = SimulationGrid {
            grid_size: 300,
            t0: 2,
            t1: 1,
            ..SimulationGrid::new(small_mf(), vec![5], vec![30, 60], 3, 21)
        };
        let a = run_grid(&grid).unwrap();
        let b = run_grid(&grid).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.per_rep_csv(), b.per_rep_csv());

        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "dgp,J,M,reps,mean_ratio,se_ratio,mean_wdist,se_wdist"
        );
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(a.per_rep_csv().lines().count(), 7);
        for row in &a.rows {
            assert!(row.mean_ratio >= 1.0 - 1e-6);
            assert!(row.se_ratio >= 0.0 && row.se_wdist >= 0.0);
        }
    }

    #[test]
    fn grid_thread_invariance() {
        let grid = SimulationGrid {
            grid_size: 200,
            t0: 2,
            t1: 1,
            ..SimulationGrid::new(small_mf(), vec![4], vec![25], 4, 9)
        };
        let base = run_grid(&grid).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| run_grid(&grid)).unwrap();
        assert_eq!(base.to_csv(), serial.to_csv());
        assert_eq!(base.per_rep_csv(), serial.per_rep_csv());
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(run_grid(&SimulationGrid::new(small_mf(), vec![], vec![10], 1, 0)).is_err());
        assert!(run_grid(&SimulationGrid::new(small_mf(), vec![5], vec![10], 0, 0)).is_err());
        assert!(run_grid(&SimulationGrid::new(Dgp::ModelFree { j: 1 }, vec![1], vec![10], 1, 0))
            .is_err());
    }
}
