//! ν-One-Class SVM with an RBF kernel, solved by SMO with second-order
//! working-set selection.
//!
//! Dual: minimise ½ αᵀKα subject to 0 ≤ αᵢ ≤ 1 and Σαᵢ = νn. The decision
//! function is f(x) = Σ αᵢ K(xᵢ, x) − ρ; points with f < 0 are outliers.

use serde::{Deserialize, Serialize};

const TAU: f64 = 1e-12;

/// How the RBF width γ is chosen when not fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    /// 1 / (d · Var(X)), with the variance pooled over every entry of X.
    Scale,
    /// 1 / (d · mean per-feature variance).
    FeatureScale,
    Fixed(f64),
}

impl Gamma {
    pub fn resolve(self, points: &[Vec<f64>]) -> Option<f64> {
        let d = points.first()?.len();
        let n = points.len() as f64;
        let var = match self {
            Gamma::Fixed(g) => return (g > 0.0).then_some(g),
            Gamma::Scale => {
                let count = n * d as f64;
                let mean = points.iter().flatten().sum::<f64>() / count;
                points.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count
            }
            Gamma::FeatureScale => {
                let mut total = 0.0;
                for c in 0..d {
                    let mean = points.iter().map(|p| p[c]).sum::<f64>() / n;
                    total += points.iter().map(|p| (p[c] - mean) * (p[c] - mean)).sum::<f64>() / n;
                }
                total / d as f64
            }
        };
        (var > 0.0 && d > 0).then(|| 1.0 / (d as f64 * var))
    }
}

#[derive(Debug, Clone)]
pub struct OneClassSvm {
    support: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    rho: f64,
    gamma: f64,
    /// Decision values of the training points, in input order.
    pub training_scores: Vec<f64>,
    /// Dual coefficients of the training points, in input order.
    pub training_alpha: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl OneClassSvm {
    /// Fits on `points`. Returns `None` for empty input, ν outside (0, 1], or
    /// a degenerate kernel width (all points identical).
    pub fn fit(points: &[Vec<f64>], nu: f64, gamma: Gamma, tol: f64, max_iter: usize) -> Option<Self> {
        if points.is_empty() || !(nu > 0.0 && nu <= 1.0) {
            return None;
        }
        let gamma = gamma.resolve(points)?;
        let n = points.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in i + 1..n {
                let v = (-gamma * sq_dist(&points[i], &points[j])).exp();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }

        // Feasible start: the first ⌊νn⌋ multipliers at the bound, one fractional.
        let total = nu * n as f64;
        let mut alpha = vec![0.0; n];
        let full = (total.floor() as usize).min(n);
        for a in alpha.iter_mut().take(full) {
            *a = 1.0;
        }
        if full < n {
            alpha[full] = total - full as f64;
        }
        let mut grad: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i * n + j] * alpha[j]).sum()).collect();

        let mut iterations = 0;
        while iterations < max_iter {
            // i: steepest ascent among multipliers that can grow.
            let mut gmax = f64::NEG_INFINITY;
            let mut sel_i = None;
            for t in 0..n {
                if alpha[t] < 1.0 && -grad[t] >= gmax {
                    gmax = -grad[t];
                    sel_i = Some(t);
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut sel_j = None;
            let mut best = f64::INFINITY;
            if let Some(i) = sel_i {
                for t in 0..n {
                    if alpha[t] > 0.0 {
                        gmax2 = gmax2.max(grad[t]);
                        let b = gmax + grad[t];
                        if b > 0.0 {
                            let a = (k[i * n + i] + k[t * n + t] - 2.0 * k[i * n + t]).max(TAU);
                            let obj = -(b * b) / a;
                            if obj <= best {
                                best = obj;
                                sel_j = Some(t);
                            }
                        }
                    }
                }
            }
            let (Some(i), Some(j)) = (sel_i, sel_j) else { break };
            if gmax + gmax2 < tol {
                break;
            }
            iterations += 1;

            let (old_i, old_j) = (alpha[i], alpha[j]);
            let quad = (k[i * n + i] + k[j * n + j] - 2.0 * k[i * n + j]).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > 1.0 {
                if alpha[i] > 1.0 {
                    alpha[i] = 1.0;
                    alpha[j] = sum - 1.0;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > 1.0 {
                if alpha[j] > 1.0 {
                    alpha[j] = 1.0;
                    alpha[i] = sum - 1.0;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += k[t * n + i] * di + k[t * n + j] * dj;
            }
        }

        // ρ: mean gradient over free multipliers, else the midpoint of the bounds.
        let (mut ub, mut lb, mut free_sum, mut free_n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..n {
            if alpha[t] >= 1.0 {
                lb = lb.max(grad[t]);
            } else if alpha[t] <= 0.0 {
                ub = ub.min(grad[t]);
            } else {
                free_sum += grad[t];
                free_n += 1;
            }
        }
        let rho = if free_n > 0 { free_sum / free_n as f64 } else { (ub + lb) / 2.0 };

        let training_scores = grad.iter().map(|g| g - rho).collect();
        let training_alpha = alpha.clone();
        let (support, alpha): (Vec<_>, Vec<_>) = points
            .iter()
            .cloned()
            .zip(alpha)
            .filter(|(_, a)| *a > 0.0)
            .unzip();
        Some(OneClassSvm {
            support,
            alpha,
            rho,
            gamma,
            training_scores,
            training_alpha,
            iterations,
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.alpha)
            .map(|(s, a)| a * (-self.gamma * sq_dist(s, x)).exp())
            .sum::<f64>()
            - self.rho
    }

    /// Training decision values without each point's own kernel term
    /// (`K(x, x) = 1`), so isolated points score near `-rho`.
    pub fn self_excluded_scores(&self) -> Vec<f64> {
        self.training_scores.iter().zip(&self.training_alpha).map(|(f, a)| f - a).collect()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn alpha_sum(&self) -> f64 {
        self.alpha.iter().sum()
    }
}
