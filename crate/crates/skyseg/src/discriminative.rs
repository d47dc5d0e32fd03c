//! Primal-form discriminative classifiers on explicit polynomial maps.
//!
//! Three models share the design matrix `Phi` (rows are mapped samples):
//!
//! - **RRC**, ridge regression for classification: closed-form
//!   `w = (PhiᵀPhi + γI)⁻¹ Phiᵀ y` on 0/1 targets, probabilities through a
//!   sigmoid.
//! - **SVC**, L2 support vector classifier: `min ½‖w‖² + C Σ max(0, 1 -
//!   y_i w·phi_i)²` on ±1 labels, solved by a damped Newton method with the
//!   generalized Hessian of the squared hinge.
//! - **GPC**, Bayesian logistic regression with prior `N(0, γI)`: the
//!   posterior mode is found by Newton ascent (the log-posterior is strictly
//!   concave), the Laplace approximation keeps the inverse Hessian as the
//!   posterior covariance, and predictions use the probit-style moderation
//!   of the Gaussian-marginalized sigmoid.
//!
//! All three stay in the primal: the matrices scale with the map dimension,
//! not the sample count.

use crate::error::{Error, Result};
use crate::features::SampleSet;
use crate::linalg::{cholesky, chol_inverse, chol_logdet, chol_solve, dot, quad_form, Mat};
use crate::poly::PolyMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearKind {
    Rrc,
    Svc,
    Gpc,
}

/// A trained primal classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub kind: LinearKind,
    pub poly: PolyMap,
    pub weights: Vec<f64>,
    /// Regularizer: γ for RRC/GPC, C for SVC.
    pub hyper: f64,
    /// Laplace posterior covariance (GPC only).
    pub posterior_cov: Option<Mat>,
    pub converged: bool,
}

impl LinearModel {
    /// Cloud probability for a raw (unmapped) feature vector.
    pub fn score(&self, x: &[f64]) -> f64 {
        let phi = self.poly.expand(x);
        self.score_mapped(&phi)
    }

    /// Cloud probability for an already mapped vector.
    pub fn score_mapped(&self, phi: &[f64]) -> f64 {
        let activation = dot(&self.weights, phi);
        match (&self.kind, &self.posterior_cov) {
            (LinearKind::Gpc, Some(cov)) => {
                let variance = quad_form(cov, phi).max(0.0);
                let moderation = (1.0 + std::f64::consts::PI * variance / 8.0).sqrt();
                sigmoid(activation / moderation)
            }
            _ => sigmoid(activation),
        }
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 35.0 {
        z
    } else if z < -35.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

// ---------------------------------------------------------------------------
// Ridge regression
// ---------------------------------------------------------------------------

/// Ridge objective `‖y - Phi w‖² + γ‖w‖²`.
pub fn rrc_objective(design: &Mat, targets: &[f64], gamma: f64, w: &[f64]) -> f64 {
    let fitted = design.matvec(w);
    let residual: f64 = fitted
        .iter()
        .zip(targets)
        .map(|(f, y)| (f - y) * (f - y))
        .sum();
    residual + gamma * dot(w, w)
}

/// Closed-form ridge solve via the regularized normal equations.
pub fn fit_rrc(design: &Mat, targets: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if gamma < 0.0 {
        return Err(Error::Config("gamma must be non-negative".into()));
    }
    let mut normal = design.gram();
    normal.add_diag(gamma);
    let rhs = design.t_matvec(targets);
    let chol = cholesky(&normal).ok_or_else(|| {
        Error::Domain("normal matrix is singular; use gamma > 0".into())
    })?;
    Ok(chol_solve(&chol, &rhs))
}

// ---------------------------------------------------------------------------
// L2 support vector classifier
// ---------------------------------------------------------------------------

/// Squared-hinge SVC objective on ±1 labels.
pub fn svc_objective(design: &Mat, labels_pm: &[f64], cost: f64, w: &[f64]) -> f64 {
    let fitted = design.matvec(w);
    let hinge: f64 = fitted
        .iter()
        .zip(labels_pm)
        .map(|(t, y)| {
            let slack = (1.0 - y * t).max(0.0);
            slack * slack
        })
        .sum();
    0.5 * dot(w, w) + cost * hinge
}

fn svc_gradient(design: &Mat, labels_pm: &[f64], cost: f64, w: &[f64]) -> Vec<f64> {
    let fitted = design.matvec(w);
    let mut grad = w.to_vec();
    for i in 0..design.rows() {
        let margin = 1.0 - labels_pm[i] * fitted[i];
        if margin > 0.0 {
            let scale = 2.0 * cost * (fitted[i] - labels_pm[i]);
            for (g, v) in grad.iter_mut().zip(design.row(i)) {
                *g += scale * v;
            }
        }
    }
    grad
}

#[derive(Debug, Clone)]
pub struct SvcFit {
    pub weights: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
}

const SVC_MAX_ITERATIONS: usize = 200;

/// Newton's method with the generalized Hessian `I + 2C Phi_Aᵀ Phi_A` over
/// the active set, with Armijo backtracking. Returns the best iterate with a
/// flag when the gradient tolerance is not met.
pub fn fit_svc(design: &Mat, labels_pm: &[f64], cost: f64) -> Result<SvcFit> {
    if cost <= 0.0 {
        return Err(Error::Config("cost C must be positive".into()));
    }
    if labels_pm.iter().any(|y| *y != 1.0 && *y != -1.0) {
        return Err(Error::Config("SVC labels must be -1 or +1".into()));
    }
    let p = design.cols();
    let mut w = vec![0.0; p];
    let mut objective = svc_objective(design, labels_pm, cost, &w);
    let initial_grad_norm = {
        let g = svc_gradient(design, labels_pm, cost, &w);
        dot(&g, &g).sqrt()
    };
    let tolerance = 1e-10 * (1.0 + initial_grad_norm);
    let mut converged = false;

    for _ in 0..SVC_MAX_ITERATIONS {
        let grad = svc_gradient(design, labels_pm, cost, &w);
        let grad_norm = dot(&grad, &grad).sqrt();
        if grad_norm <= tolerance {
            converged = true;
            break;
        }
        // Generalized Hessian over the active margin set.
        let fitted = design.matvec(&w);
        let active: Vec<f64> = (0..design.rows())
            .map(|i| {
                if 1.0 - labels_pm[i] * fitted[i] > 0.0 {
                    2.0 * cost
                } else {
                    0.0
                }
            })
            .collect();
        let mut hessian = design.gram_weighted(&active);
        hessian.add_diag(1.0);
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let Some(chol) = cholesky(&hessian) else {
            break;
        };
        let step = chol_solve(&chol, &rhs);

        // Armijo backtracking on the Newton direction.
        let slope = dot(&grad, &step);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi + alpha * si).collect();
            let cand_obj = svc_objective(design, labels_pm, cost, &candidate);
            if cand_obj <= objective + 1e-4 * alpha * slope {
                w = candidate;
                objective = cand_obj;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    Ok(SvcFit {
        weights: w,
        objective,
        converged,
    })
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression (primal Gaussian process classifier)
// ---------------------------------------------------------------------------

/// Log-posterior (up to the prior normalizer): Bernoulli log-likelihood of
/// 0/1 targets minus the Gaussian prior quadratic `wᵀw / (2γ)`.
pub fn gpc_log_posterior(design: &Mat, targets: &[f64], gamma: f64, w: &[f64]) -> f64 {
    let fitted = design.matvec(w);
    let loglik: f64 = fitted
        .iter()
        .zip(targets)
        .map(|(t, y)| y * t - softplus(*t))
        .sum();
    loglik - dot(w, w) / (2.0 * gamma)
}

fn gpc_gradient(design: &Mat, targets: &[f64], gamma: f64, w: &[f64]) -> Vec<f64> {
    let fitted = design.matvec(w);
    let errors: Vec<f64> = fitted
        .iter()
        .zip(targets)
        .map(|(t, y)| y - sigmoid(*t))
        .collect();
    let mut grad = design.t_matvec(&errors);
    for (g, wi) in grad.iter_mut().zip(w) {
        *g -= wi / gamma;
    }
    grad
}

#[derive(Debug, Clone)]
pub struct GpcFit {
    pub weights: Vec<f64>,
    /// Laplace posterior covariance: inverse negative Hessian at the mode.
    pub posterior_cov: Mat,
    /// Log-posterior after every Newton step (monotone non-decreasing).
    pub log_posterior_trace: Vec<f64>,
    pub converged: bool,
}

const GPC_MAX_ITERATIONS: usize = 100;

/// Newton ascent to the posterior mode (IRLS); the log-posterior is strictly
/// concave for `γ > 0`, so the mode is unique.
pub fn fit_gpc(design: &Mat, targets: &[f64], gamma: f64) -> Result<GpcFit> {
    if gamma <= 0.0 {
        return Err(Error::Config("gamma must be positive".into()));
    }
    if targets.iter().any(|y| *y != 0.0 && *y != 1.0) {
        return Err(Error::Config("GPC targets must be 0 or 1".into()));
    }
    let p = design.cols();
    let mut w = vec![0.0; p];
    let mut log_post = gpc_log_posterior(design, targets, gamma, &w);
    let mut trace = vec![log_post];
    let initial_grad_norm = {
        let g = gpc_gradient(design, targets, gamma, &w);
        dot(&g, &g).sqrt()
    };
    let tolerance = 1e-10 * (1.0 + initial_grad_norm);
    let mut converged = false;

    for _ in 0..GPC_MAX_ITERATIONS {
        let grad = gpc_gradient(design, targets, gamma, &w);
        if dot(&grad, &grad).sqrt() <= tolerance {
            converged = true;
            break;
        }
        let fitted = design.matvec(&w);
        let weights_irls: Vec<f64> = fitted
            .iter()
            .map(|t| {
                let s = sigmoid(*t);
                (s * (1.0 - s)).max(1e-12)
            })
            .collect();
        let mut hessian = design.gram_weighted(&weights_irls);
        hessian.add_diag(1.0 / gamma);
        let chol = cholesky(&hessian).ok_or_else(|| {
            Error::Domain("GPC Hessian factorization failed".into())
        })?;
        let step = chol_solve(&chol, &grad);

        // Backtrack so the log-posterior never decreases.
        let slope = dot(&grad, &step);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate: Vec<f64> = w.iter().zip(&step).map(|(wi, si)| wi + alpha * si).collect();
            let cand = gpc_log_posterior(design, targets, gamma, &candidate);
            if cand >= log_post + 1e-4 * alpha * slope {
                w = candidate;
                log_post = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        trace.push(log_post);
        if !accepted {
            break;
        }
    }

    // Posterior covariance at the mode.
    let fitted = design.matvec(&w);
    let weights_irls: Vec<f64> = fitted
        .iter()
        .map(|t| {
            let s = sigmoid(*t);
            (s * (1.0 - s)).max(1e-12)
        })
        .collect();
    let mut hessian = design.gram_weighted(&weights_irls);
    hessian.add_diag(1.0 / gamma);
    let chol = cholesky(&hessian)
        .ok_or_else(|| Error::Domain("GPC Hessian factorization failed".into()))?;
    let posterior_cov = chol_inverse(&chol);

    Ok(GpcFit {
        weights: w,
        posterior_cov,
        log_posterior_trace: trace,
        converged,
    })
}

/// Laplace evidence of one `γ`: log-likelihood plus log-prior at the mode
/// plus the Gaussian volume correction.
pub fn gpc_evidence(design: &Mat, targets: &[f64], gamma: f64, fit: &GpcFit) -> f64 {
    let p = design.cols() as f64;
    let log_post = gpc_log_posterior(design, targets, gamma, &fit.weights);
    let fitted_cov_chol = cholesky(&{
        let fitted = design.matvec(&fit.weights);
        let weights_irls: Vec<f64> = fitted
            .iter()
            .map(|t| {
                let s = sigmoid(*t);
                (s * (1.0 - s)).max(1e-12)
            })
            .collect();
        let mut h = design.gram_weighted(&weights_irls);
        h.add_diag(1.0 / gamma);
        h
    })
    .expect("Hessian is positive definite for gamma > 0");
    log_post - 0.5 * p * gamma.ln() - 0.5 * chol_logdet(&fitted_cov_chol)
}

/// Optional evidence-driven prior selection: fits every `γ` in the grid and
/// keeps the one with the highest Laplace evidence. The usual route is
/// cross-validating `γ` instead.
pub fn select_gamma_evidence(
    design: &Mat,
    targets: &[f64],
    grid: &[f64],
) -> Result<(f64, GpcFit)> {
    let mut best: Option<(f64, f64, GpcFit)> = None;
    for &gamma in grid {
        let fit = fit_gpc(design, targets, gamma)?;
        let evidence = gpc_evidence(design, targets, gamma, &fit);
        if best.as_ref().is_none_or(|(_, e, _)| evidence > *e) {
            best = Some((gamma, evidence, fit));
        }
    }
    best.map(|(gamma, _, fit)| (gamma, fit))
        .ok_or_else(|| Error::Config("empty gamma grid".into()))
}

// ---------------------------------------------------------------------------
// SampleSet-level constructors
// ---------------------------------------------------------------------------

fn labeled_design(samples: &SampleSet, order: u32) -> Result<(Mat, Vec<f64>, PolyMap)> {
    let labels = samples
        .labels
        .as_deref()
        .ok_or_else(|| Error::Config("discriminative fit needs labels".into()))?;
    let poly = PolyMap::new(samples.dim, order)?;
    let design = poly.design_matrix(samples);
    Ok((design, labels.iter().map(|&l| l as f64).collect(), poly))
}

pub fn rrc_model(samples: &SampleSet, order: u32, gamma: f64) -> Result<LinearModel> {
    let (design, targets, poly) = labeled_design(samples, order)?;
    let weights = fit_rrc(&design, &targets, gamma)?;
    Ok(LinearModel {
        kind: LinearKind::Rrc,
        poly,
        weights,
        hyper: gamma,
        posterior_cov: None,
        converged: true,
    })
}

pub fn svc_model(samples: &SampleSet, order: u32, cost: f64) -> Result<LinearModel> {
    let (design, targets, poly) = labeled_design(samples, order)?;
    let labels_pm: Vec<f64> = targets.iter().map(|&y| 2.0 * y - 1.0).collect();
    let fit = fit_svc(&design, &labels_pm, cost)?;
    Ok(LinearModel {
        kind: LinearKind::Svc,
        poly,
        weights: fit.weights,
        hyper: cost,
        posterior_cov: None,
        converged: fit.converged,
    })
}

pub fn gpc_model(samples: &SampleSet, order: u32, gamma: f64) -> Result<LinearModel> {
    let (design, targets, poly) = labeled_design(samples, order)?;
    let fit = fit_gpc(&design, &targets, gamma)?;
    Ok(LinearModel {
        kind: LinearKind::Gpc,
        poly,
        weights: fit.weights,
        hyper: gamma,
        posterior_cov: Some(fit.posterior_cov),
        converged: fit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn random_design(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Mat {
        let mut m = Mat::zeros(n, p);
        for r in 0..n {
            m.row_mut(r)[0] = 1.0;
            for c in 1..p {
                m.row_mut(r)[c] = normal(rng);
            }
        }
        m
    }

    /// Steepest descent with exact line search (the objective is quadratic).
    fn rrc_oracle(design: &Mat, targets: &[f64], gamma: f64) -> Vec<f64> {
        let p = design.cols();
        let mut a = design.gram();
        a.add_diag(gamma);
        let b = design.t_matvec(targets);
        let mut w = vec![0.0; p];
        for _ in 0..200_000 {
            let aw = a.matvec(&w);
            let grad: Vec<f64> = aw.iter().zip(&b).map(|(x, y)| 2.0 * (x - y)).collect();
            let gg = dot(&grad, &grad);
            if gg.sqrt() < 1e-12 * (1.0 + dot(&b, &b).sqrt()) {
                break;
            }
            let ag = a.matvec(&grad);
            let alpha = gg / (2.0 * dot(&grad, &ag));
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= alpha * gi;
            }
        }
        w
    }

    #[test]
    fn rrc_closed_form_matches_descent_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let design = random_design(&mut rng, 300, 6);
        let targets: Vec<f64> = (0..300).map(|_| rng.random::<f64>().round()).collect();
        let gamma = 0.5;
        let closed = fit_rrc(&design, &targets, gamma).unwrap();
        let oracle = rrc_oracle(&design, &targets, gamma);
        for (c, o) in closed.iter().zip(&oracle) {
            assert!((c - o).abs() < 1e-6, "closed {c} vs oracle {o}");
        }
        // Stationarity at the closed-form solution.
        let fitted = design.matvec(&closed);
        let errors: Vec<f64> = fitted.iter().zip(&targets).map(|(f, y)| f - y).collect();
        let mut grad = design.t_matvec(&errors);
        for (g, w) in grad.iter_mut().zip(&closed) {
            *g = 2.0 * *g + 2.0 * gamma * w;
        }
        let scale = 1.0 + dot(&targets, &targets).sqrt();
        assert!(dot(&grad, &grad).sqrt() <= 1e-8 * scale);
    }

    #[test]
    fn rrc_huge_gamma_shrinks_towards_constant_prediction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let design = random_design(&mut rng, 200, 4);
        let targets = vec![0.7; 200];
        let w = fit_rrc(&design, &targets, 1e9).unwrap();
        for &wi in &w[1..] {
            assert!(wi.abs() < 1e-5);
        }
        for r in 0..10 {
            let p = sigmoid(dot(&w, design.row(r)));
            assert!((p - sigmoid(w[0])).abs() < 1e-3);
        }
    }

    #[test]
    fn rrc_separable_scores_are_separable() {
        let samples = SampleSet {
            dim: 1,
            data: vec![-3.0, -2.5, -2.0, 2.0, 2.5, 3.0],
            labels: Some(vec![0, 0, 0, 1, 1, 1]),
        };
        let model = rrc_model(&samples, 1, 0.1).unwrap();
        let neg_max = (0..3)
            .map(|i| model.score(samples.vector(i)))
            .fold(f64::NEG_INFINITY, f64::max);
        let pos_min = (3..6)
            .map(|i| model.score(samples.vector(i)))
            .fold(f64::INFINITY, f64::min);
        assert!(neg_max < pos_min, "scores not separable");
    }

    #[test]
    fn rrc_rejects_singular_normal_matrix() {
        // Duplicate column makes PhiᵀPhi singular at gamma = 0.
        let mut design = Mat::zeros(4, 2);
        for r in 0..4 {
            design.set(r, 0, r as f64);
            design.set(r, 1, r as f64);
        }
        let err = fit_rrc(&design, &[0.0, 1.0, 0.0, 1.0], 0.0).unwrap_err();
        assert!(err.to_string().contains("gamma > 0"), "{err}");
        assert!(fit_rrc(&design, &[0.0, 1.0, 0.0, 1.0], 1e-6).is_ok());
    }

    #[test]
    fn svc_two_point_problem_matches_grid_oracle() {
        // One positive sample at +1, one negative at -1, no bias column.
        let design = Mat::from_vec(2, 1, vec![1.0, -1.0]);
        let labels = vec![1.0, -1.0];
        for cost in [0.1, 1.0, 1000.0] {
            let fit = fit_svc(&design, &labels, cost).unwrap();
            // Dense grid search oracle over the scalar weight.
            let mut best = f64::INFINITY;
            let mut best_w = 0.0;
            let mut w = -2.0;
            while w <= 2.0 {
                let obj = svc_objective(&design, &labels, cost, &[w]);
                if obj < best {
                    best = obj;
                    best_w = w;
                }
                w += 1e-5;
            }
            assert!(
                (fit.objective - best).abs() <= 1e-6 * (1.0 + best.abs()),
                "cost {cost}: newton {} vs grid {best}",
                fit.objective
            );
            // Analytic optimum is 4C/(1+4C); margins stay just inside 1.
            let expected = 4.0 * cost / (1.0 + 4.0 * cost);
            assert!((fit.weights[0] - expected).abs() < 1e-4, "w {}", fit.weights[0]);
            assert!((best_w - expected).abs() < 1e-4);
        }
        // Large C pushes the weight to the unit margin.
        let fit = fit_svc(&design, &labels, 1e6).unwrap();
        assert!((fit.weights[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn svc_vanishing_cost_kills_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let design = random_design(&mut rng, 50, 3);
        let labels: Vec<f64> = (0..50).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fit = fit_svc(&design, &labels, 1e-9).unwrap();
        assert!(dot(&fit.weights, &fit.weights).sqrt() < 1e-6);
    }

    #[test]
    fn svc_label_flip_negates_decision() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let design = random_design(&mut rng, 60, 4);
        let labels: Vec<f64> = (0..60)
            .map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 })
            .collect();
        let flipped: Vec<f64> = labels.iter().map(|y| -y).collect();
        let a = fit_svc(&design, &labels, 2.0).unwrap();
        let b = fit_svc(&design, &flipped, 2.0).unwrap();
        for r in 0..design.rows() {
            let da = dot(&a.weights, design.row(r));
            let db = dot(&b.weights, design.row(r));
            assert!((da + db).abs() < 1e-6, "row {r}: {da} vs {db}");
        }
    }

    #[test]
    fn svc_objective_is_convex_along_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let design = random_design(&mut rng, 40, 3);
        let labels: Vec<f64> = (0..40)
            .map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 })
            .collect();
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| 3.0 * normal(&mut rng)).collect();
            let b: Vec<f64> = (0..3).map(|_| 3.0 * normal(&mut rng)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            let fa = svc_objective(&design, &labels, 1.5, &a);
            let fb = svc_objective(&design, &labels, 1.5, &b);
            let fm = svc_objective(&design, &labels, 1.5, &mid);
            assert!(fm <= 0.5 * (fa + fb) + 1e-12 * (1.0 + fa.abs() + fb.abs()));
        }
    }

    /// First-order gradient ascent oracle for the GPC posterior mode.
    fn gpc_ascent_oracle(design: &Mat, targets: &[f64], gamma: f64) -> Vec<f64> {
        let mut w = vec![0.0; design.cols()];
        let mut value = gpc_log_posterior(design, targets, gamma, &w);
        for _ in 0..200_000 {
            let grad = gpc_gradient(design, targets, gamma, &w);
            let gn = dot(&grad, &grad).sqrt();
            if gn < 1e-11 * (1.0 + design.rows() as f64) {
                break;
            }
            let mut alpha = 1.0;
            loop {
                let cand: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi + alpha * gi).collect();
                let cv = gpc_log_posterior(design, targets, gamma, &cand);
                if cv > value {
                    w = cand;
                    value = cv;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-18 {
                    return w;
                }
            }
        }
        w
    }

    #[test]
    fn gpc_newton_matches_gradient_ascent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let design = random_design(&mut rng, 120, 4);
        let targets: Vec<f64> = (0..120)
            .map(|r| {
                let t = dot(design.row(r), &[0.2, 1.0, -0.7, 0.4]);
                f64::from(t + 0.3 * normal(&mut rng) > 0.0)
            })
            .collect();
        let gamma = 2.0;
        let newton = fit_gpc(&design, &targets, gamma).unwrap();
        assert!(newton.converged);
        let ascent = gpc_ascent_oracle(&design, &targets, gamma);
        for (n, a) in newton.weights.iter().zip(&ascent) {
            assert!((n - a).abs() < 1e-6, "newton {n} vs ascent {a}");
        }
    }

    #[test]
    fn gpc_log_posterior_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let design = random_design(&mut rng, 80, 3);
            let targets: Vec<f64> = (0..80)
                .map(|_| f64::from(rng.random::<f64>() > 0.4))
                .collect();
            let fit = fit_gpc(&design, &targets, 1.0).unwrap();
            for pair in fit.log_posterior_trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-12);
            }
        }
    }

    #[test]
    fn gpc_tight_prior_pins_probabilities_at_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let design = random_design(&mut rng, 60, 3);
        let targets: Vec<f64> = (0..60).map(|i| f64::from(i % 2 == 0)).collect();
        let fit = fit_gpc(&design, &targets, 1e-9).unwrap();
        assert!(dot(&fit.weights, &fit.weights).sqrt() < 1e-6);
        let model = LinearModel {
            kind: LinearKind::Gpc,
            poly: PolyMap::new(2, 1).unwrap(),
            weights: fit.weights,
            hyper: 1e-9,
            posterior_cov: Some(fit.posterior_cov),
            converged: fit.converged,
        };
        for r in 0..10 {
            let p = model.score_mapped(design.row(r));
            assert!((p - 0.5).abs() < 1e-4, "probability {p}");
        }
    }

    #[test]
    fn gpc_symmetric_data_zeroes_the_bias() {
        // x and -x with opposite labels; bias column stays at the front.
        let mut design = Mat::zeros(40, 3);
        let mut targets = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for r in 0..20 {
            let x = [normal(&mut rng) + 1.0, normal(&mut rng) - 0.5];
            design.row_mut(2 * r).copy_from_slice(&[1.0, x[0], x[1]]);
            design.row_mut(2 * r + 1).copy_from_slice(&[1.0, -x[0], -x[1]]);
            targets.push(1.0);
            targets.push(0.0);
        }
        let fit = fit_gpc(&design, &targets, 5.0).unwrap();
        assert!(fit.weights[0].abs() < 1e-8, "bias {}", fit.weights[0]);
    }

    #[test]
    fn evidence_selection_runs_over_a_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let design = random_design(&mut rng, 100, 3);
        let targets: Vec<f64> = (0..100)
            .map(|r| f64::from(dot(design.row(r), &[0.0, 1.5, -1.0]) > 0.0))
            .collect();
        let grid = [0.01, 0.1, 1.0, 10.0];
        let (gamma, fit) = select_gamma_evidence(&design, &targets, &grid).unwrap();
        assert!(grid.contains(&gamma));
        assert!(fit.converged);
    }
}
