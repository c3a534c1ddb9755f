//! Constrained least squares over the unit simplex.
//!
//! minimize (1/M) ||X w - y||^2 over w >= 0, sum w = 1. Solved by monotone
//! FISTA on the Gram form with step 1/L, L = 2 lambda_max(X^T X)/M from power
//! iteration, restarting momentum whenever the accelerated step would
//! increase the objective. Optimality is certified through the simplex KKT
//! residual.

use crate::error::{DscError, Result};

/// Default KKT residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap.
pub const DEFAULT_MAX_ITER: usize = 50_000;

/// Weight vector in the unit simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights {
    w: Vec<f64>,
}

impl SimplexWeights {
    /// Validate nonnegativity and unit sum (tolerance 1e-12 on the sum).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(DscError::InvalidArgument("weights must be non-empty".into()));
        }
        if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(DscError::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(DscError::InvalidArgument(format!(
                "weights must sum to 1, got {sum}"
            )));
        }
        Ok(Self { w })
    }

    /// Uniform weights 1/J.
    pub fn uniform(j: usize) -> Self {
        Self {
            w: vec![1.0 / j as f64; j],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// Euclidean distance to another weight vector.
    pub fn distance(&self, other: &Self) -> f64 {
        self.w
            .iter()
            .zip(&other.w)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Solver output with optimality diagnostics.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub weights: SimplexWeights,
    /// Mean squared residual (1/M) ||X w - y||^2 at the returned weights.
    pub objective: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Euclidean projection onto the unit simplex (sort-and-threshold).
pub fn project_to_simplex(v: &[f64]) -> Result<SimplexWeights> {
    if v.is_empty() {
        return Err(DscError::InvalidArgument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(DscError::InvalidArgument(
            "cannot project a non-finite vector".into(),
        ));
    }
    Ok(project_unchecked(v))
}

fn project_unchecked(v: &[f64]) -> SimplexWeights {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    let w: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    // renormalize away the last-ulp drift so the invariant holds exactly
    let sum: f64 = w.iter().sum();
    let w = w.into_iter().map(|x| x / sum).collect();
    SimplexWeights { w }
}

/// Quadratic form of the least squares problem, precomputed once.
pub(crate) struct GramForm {
    /// J x J matrix X^T X, row-major.
    pub gram: Vec<f64>,
    /// X^T y.
    pub xty: Vec<f64>,
    /// y^T y.
    pub yty: f64,
    pub m: usize,
    pub j: usize,
}

impl GramForm {
    /// Build from a row-major M x J design and target of length M.
    pub fn new(x: &[f64], y: &[f64], m: usize, j: usize) -> Result<Self> {
        if x.len() != m * j || y.len() != m {
            return Err(DscError::InvalidArgument(format!(
                "design dimensions mismatch: |X| = {}, expected {m}x{j}, |y| = {}",
                x.len(),
                y.len()
            )));
        }
        if m == 0 || j == 0 {
            return Err(DscError::InvalidArgument("M and J must be at least 1".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(DscError::InvalidArgument(
                "design or target contains a non-finite value".into(),
            ));
        }
        let mut gram = vec![0.0; j * j];
        let mut xty = vec![0.0; j];
        for row in 0..m {
            let xr = &x[row * j..(row + 1) * j];
            let yr = y[row];
            for a in 0..j {
                xty[a] += xr[a] * yr;
                let xa = xr[a];
                for b in a..j {
                    gram[a * j + b] += xa * xr[b];
                }
            }
        }
        for a in 0..j {
            for b in 0..a {
                gram[a * j + b] = gram[b * j + a];
            }
        }
        let yty = y.iter().map(|v| v * v).sum();
        Ok(Self { gram, xty, yty, m, j })
    }

    /// (1/M) ||X w - y||^2 via the quadratic form.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let j = self.j;
        let mut quad = 0.0;
        let mut lin = 0.0;
        for a in 0..j {
            let mut gw = 0.0;
            for b in 0..j {
                gw += self.gram[a * j + b] * w[b];
            }
            quad += w[a] * gw;
            lin += self.xty[a] * w[a];
        }
        ((quad - 2.0 * lin + self.yty) / self.m as f64).max(0.0)
    }

    /// Gradient (2/M)(X^T X w - X^T y) into `out`.
    fn gradient(&self, w: &[f64], out: &mut [f64]) {
        let j = self.j;
        let scale = 2.0 / self.m as f64;
        for a in 0..j {
            let mut gw = 0.0;
            for b in 0..j {
                gw += self.gram[a * j + b] * w[b];
            }
            out[a] = scale * (gw - self.xty[a]);
        }
    }

    /// Largest eigenvalue of X^T X by power iteration.
    fn gram_lambda_max(&self) -> f64 {
        let j = self.j;
        let mut v = vec![1.0 / (j as f64).sqrt(); j];
        let mut gv = vec![0.0; j];
        let mut lambda = 0.0;
        for _ in 0..200 {
            for a in 0..j {
                let mut acc = 0.0;
                for b in 0..j {
                    acc += self.gram[a * j + b] * v[b];
                }
                gv[a] = acc;
            }
            let norm = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next_lambda = v.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>();
            for a in 0..j {
                v[a] = gv[a] / norm;
            }
            if (next_lambda - lambda).abs() <= 1e-12 * next_lambda.abs().max(1.0) {
                return next_lambda.max(0.0);
            }
            lambda = next_lambda;
        }
        lambda.max(0.0)
    }
}

/// KKT residual of the simplex-constrained problem at `w` given gradient `g`:
/// with mu = min over active coordinates of g, active coordinates must have
/// g_j = mu and inactive ones g_j >= mu.
fn kkt_residual_from_gradient(w: &[f64], g: &[f64]) -> f64 {
    const ACTIVE: f64 = 1e-12;
    let mut mu = f64::INFINITY;
    for (wi, gi) in w.iter().zip(g) {
        if *wi > ACTIVE {
            mu = mu.min(*gi);
        }
    }
    let mut res = 0.0f64;
    for (wi, gi) in w.iter().zip(g) {
        if *wi > ACTIVE {
            res = res.max(gi - mu);
        } else {
            res = res.max((mu - gi).max(0.0));
        }
    }
    res
}

/// KKT residual of (1/M)||Xw - y||^2 over the simplex at candidate weights.
pub fn kkt_residual(x: &[f64], y: &[f64], m: usize, j: usize, w: &SimplexWeights) -> Result<f64> {
    if w.len() != j {
        return Err(DscError::InvalidArgument(format!(
            "weights have {} entries, design has {j} columns",
            w.len()
        )));
    }
    let form = GramForm::new(x, y, m, j)?;
    let mut g = vec![0.0; j];
    form.gradient(w.as_slice(), &mut g);
    Ok(kkt_residual_from_gradient(w.as_slice(), &g))
}

/// Solve min over the simplex of (1/M)||Xw - y||^2 (X row-major M x J).
pub fn solve_simplex_ls(
    x: &[f64],
    y: &[f64],
    m: usize,
    j: usize,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport> {
    let form = GramForm::new(x, y, m, j)?;
    solve_gram(&form, tol, max_iter)
}

pub(crate) fn solve_gram(form: &GramForm, tol: f64, max_iter: usize) -> Result<SolveReport> {
    if !(tol > 0.0) {
        return Err(DscError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let j = form.j;
    let lambda_max = form.gram_lambda_max();
    let lip = 2.0 * lambda_max / form.m as f64;

    let mut w = SimplexWeights::uniform(j).w;
    if lip <= 0.0 {
        // zero design: every feasible point is optimal
        return Ok(SolveReport {
            weights: SimplexWeights { w },
            objective: form.objective(&vec![1.0 / j as f64; j]),
            iterations: 0,
            kkt_residual: 0.0,
            converged: true,
        });
    }
    let step = 1.0 / lip;

    let mut obj = form.objective(&w);
    let mut momentum = w.clone();
    let mut theta = 1.0f64;
    let mut grad = vec![0.0; j];
    let mut trial = vec![0.0; j];
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;

        // accelerated step from the momentum point
        form.gradient(&momentum, &mut grad);
        for a in 0..j {
            trial[a] = momentum[a] - step * grad[a];
        }
        let cand = project_unchecked(&trial).w;
        let cand_obj = form.objective(&cand);

        let (new_w, new_obj) = if cand_obj <= obj {
            (cand, cand_obj)
        } else {
            // restart: plain projected gradient step from the best iterate.
            // Always accepted — with step 1/L it cannot increase the true
            // objective, and near the optimum the quadratic-form evaluation
            // bottoms out at cancellation noise, so gating on it would stall.
            theta = 1.0;
            form.gradient(&w, &mut grad);
            for a in 0..j {
                trial[a] = w[a] - step * grad[a];
            }
            let fallback = project_unchecked(&trial).w;
            let fallback_obj = form.objective(&fallback);
            (fallback, fallback_obj)
        };

        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        for a in 0..j {
            momentum[a] = new_w[a] + beta * (new_w[a] - w[a]);
        }
        theta = theta_next;
        w = new_w;
        obj = new_obj;

        form.gradient(&w, &mut grad);
        kkt = kkt_residual_from_gradient(&w, &grad);
        if kkt <= tol {
            return Ok(SolveReport {
                weights: SimplexWeights { w },
                objective: obj,
                iterations,
                kkt_residual: kkt,
                converged: true,
            });
        }
    }

    Ok(SolveReport {
        weights: SimplexWeights { w },
        objective: obj,
        iterations,
        kkt_residual: kkt,
        converged: false,
    })
}
