use super::energy::{Evaluation, StepData};
use super::OptimizerOptions;

/// Result of minimizing one step energy.
#[derive(Clone, Debug)]
pub(crate) struct Descent {
    pub u: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn noise(e: &Evaluation) -> f64 {
    64.0 * f64::EPSILON * e.magnitude + f64::MIN_POSITIVE
}

/// Steepest descent with Barzilai–Borwein trial steps and monotone
/// backtracking, started from the previous level.
///
/// Close to the minimizer the predicted decrease drops below the rounding
/// level of the energy. A trial is then also accepted when the energy does
/// not rise beyond that noise and the directional derivative at the trial
/// point satisfies the approximate Armijo bound.
pub(crate) fn minimize(data: &StepData, opt: &OptimizerOptions, grad_tol: f64) -> Descent {
    let g = &data.grid;
    let n = g.nodes();
    let mut u = data.u_prev.clone();
    let mut grad = vec![0.0; n];
    let mut eval = data.eval(&u, &mut grad);

    let mut trial = vec![0.0; n];
    let mut trial_grad = vec![0.0; n];

    // largest eigenvalue of the quadratic part for p ≡ 2 sets the first step
    let ratio = g.tau() / (g.h() * g.h());
    let mut alpha = ratio / (1.0 + 8.0 * ratio);

    let c1 = opt.armijo_c1;
    let mut iterations = 0;
    loop {
        let gg = dot(&grad, &grad);
        let grad_norm = gg.sqrt();
        if grad_norm <= grad_tol {
            return Descent {
                u,
                value: eval.value,
                iterations,
                grad_norm,
                converged: true,
            };
        }
        if iterations >= opt.max_iters {
            return Descent {
                u,
                value: eval.value,
                iterations,
                grad_norm,
                converged: false,
            };
        }

        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..opt.max_backtracks {
            for ((t, x), d) in trial.iter_mut().zip(&u).zip(&grad) {
                *t = x - step * d;
            }
            let e = data.eval(&trial, &mut trial_grad);
            if e.value.is_finite() {
                let sufficient = e.value <= eval.value - c1 * step * gg;
                let approximate = e.value <= eval.value + noise(&eval)
                    && dot(&trial_grad, &grad) >= -(1.0 - 2.0 * c1) * gg;
                if sufficient || approximate {
                    accepted = Some(e);
                    break;
                }
            }
            step *= opt.backtrack;
        }
        let Some(e) = accepted else {
            return Descent {
                u,
                value: eval.value,
                iterations,
                grad_norm,
                converged: false,
            };
        };
        iterations += 1;

        // short Barzilai–Borwein step from s = −step·g, y = g_new − g
        let mut sy = 0.0;
        let mut yy = 0.0;
        for (gn, go) in trial_grad.iter().zip(&grad) {
            let y = gn - go;
            sy += -step * go * y;
            yy += y * y;
        }
        if sy > 0.0 && yy > 0.0 {
            alpha = sy / yy;
        } else {
            alpha = step;
        }

        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        eval = e;
    }
}
