//! Distributional synthetic control: quantile-function synthesis of a
//! counterfactual outcome distribution from a donor pool, plus the
//! simulation laboratory used to check the estimator's convergence behavior.

pub mod asymptotics;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod panel;
pub mod quantile;
pub mod rng;
pub mod sim;
pub mod simplex;
pub mod wasserstein;

pub use asymptotics::{
    convergence_report, design_eigen_diagnostic, optimal_weights, optimality_ratio,
    post_treatment_risk, pretreatment_fit_diagnostics, weight_distance, ConvergenceReport,
    FitDiagnostics, OracleSpec,
};
pub use dist::{
    analytic_quantile, chi_square_quantile, draw_uniforms, normal_quantile, AnalyticDistribution,
    DrawMode, NormalSampler, UniformDrawSequence,
};
pub use error::{DscError, Result};
pub use estimator::{
    aggregate_weights, counterfactual_quantile, default_qte_grid, fit_dsc, fit_period_weights,
    qte_curve, write_qte_csv, DscFit, PeriodFit, QteCurve,
};
pub use panel::{load_panel_csv, EstimationConfig, LambdaSpec, PanelDataset};
pub use quantile::{build_artificial_sample, EmpiricalQuantileFn};
pub use rng::{derive_seed, SplitMix64};
pub use sim::{
    gen_replication, run_grid, run_replication, Dgp, RepRow, ReportRow, Replication,
    SimulationGrid, SimulationReport,
};
pub use simplex::{
    kkt_residual, project_to_simplex, solve_simplex_ls, SimplexWeights, SolveReport,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
pub use wasserstein::{
    w2_empirical_equal_n, w2_grid, w2_sq_mc, QuantileFnRef, DEFAULT_GRID,
};
