//! Tuning MPC cost weights by gradient descent through solver sensitivities.
//!
//! The policy solves a short-horizon tracking problem each step with
//! `θ = (q_p, q_v, r_u, x₀)` and applies the first control. The tracking
//! metric of the closed loop is differentiated in forward mode: the chain
//! rule runs through the plant and through `∂u/∂θ` from each solve.

use coneal::par::{map_indexed, Execution};
use coneal::sensitivity::{differentiate_with, SensitivityOptions};
use coneal::trajopt::transcribe;
use coneal::{solve, SolverOptions, Status};
use nalgebra::{Matrix2x3, RowVector2, RowVector3, Vector2};
use serde::{Deserialize, Serialize};

use crate::problems::{double_integrator, mpc_data, mpc_problem, mpc_theta, tracking_reference, MPC_DT};
use crate::BenchError;

#[derive(Debug, Clone, PartialEq)]
pub struct AutotuneOptions {
    pub steps: usize,
    pub sim_steps: usize,
    pub x_start: [f64; 2],
    pub initial_weights: [f64; 3],
    pub min_weight: f64,
    /// Weight of `(u − u_ref)²` in the tracking metric.
    pub control_penalty: f64,
    pub initial_step: f64,
    pub max_backtracks: usize,
    pub solver: SolverOptions,
    /// Compare the initial gradient with central differences.
    pub check_gradient: bool,
    pub fd_step: f64,
    pub execution: Execution,
}

impl Default for AutotuneOptions {
    fn default() -> Self {
        Self {
            steps: 10,
            sim_steps: 20,
            x_start: [0.5, 1.0],
            initial_weights: [1.0, 1.0, 1.0],
            min_weight: 1e-3,
            control_penalty: 1e-3,
            initial_step: 1.0,
            max_backtracks: 30,
            solver: SolverOptions {
                tol: 1e-10,
                ..Default::default()
            },
            check_gradient: true,
            fd_step: 1e-5,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningStep {
    pub step: usize,
    pub weights: [f64; 3],
    pub cost: f64,
    pub gradient: [f64; 3],
    pub step_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub analytic: [f64; 3],
    pub finite_difference: [f64; 3],
    /// `‖analytic − fd‖∞ / ‖fd‖∞`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub open_loop_cost: f64,
    pub untuned_cost: f64,
    pub tuned_cost: f64,
    pub initial_weights: [f64; 3],
    pub tuned_weights: [f64; 3],
    pub history: Vec<TuningStep>,
    pub gradient_check: Option<GradientCheck>,
}

/// Closed-loop tracking metric, with its gradient in the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub cost: f64,
    pub gradient: Option<[f64; 3]>,
    pub states: Vec<[f64; 2]>,
}

/// Cost of applying `u` at step `k` and landing in `x`.
fn stage_cost(x: &Vector2<f64>, u: f64, reference: &[[f64; 3]], k: usize, penalty: f64) -> f64 {
    (x[0] - reference[k + 1][0]).powi(2) + penalty * (u - reference[k][2]).powi(2)
}

/// Apply the reference controls without feedback.
pub fn open_loop(opts: &AutotuneOptions) -> f64 {
    let (a, b) = double_integrator(MPC_DT);
    let reference = tracking_reference(0, opts.sim_steps + 1, MPC_DT);
    let mut x = Vector2::from(opts.x_start);
    let mut cost = 0.0;
    for k in 0..opts.sim_steps {
        let u = reference[k][2];
        x = a.fixed_view::<2, 2>(0, 0) * x + b.fixed_view::<2, 1>(0, 0) * u;
        cost += stage_cost(&x, u, &reference, k, opts.control_penalty);
    }
    cost
}

/// Simulate the MPC policy with `weights`; with `gradient` also
/// propagate `dx/dw` and accumulate `d cost/dw`.
pub fn closed_loop(weights: [f64; 3], opts: &AutotuneOptions, gradient: bool) -> Result<Rollout, BenchError> {
    let (a, b) = double_integrator(MPC_DT);
    let a = a.fixed_view::<2, 2>(0, 0).into_owned();
    let b = b.fixed_view::<2, 1>(0, 0).into_owned();
    let reference = tracking_reference(0, opts.sim_steps + 1, MPC_DT);
    let sens_opts = SensitivityOptions {
        execution: Execution::Sequential,
        ..Default::default()
    };
    let mut x = Vector2::from(opts.x_start);
    let mut dx = Matrix2x3::<f64>::zeros();
    let mut cost = 0.0;
    let mut grad = RowVector3::<f64>::zeros();
    let mut states = vec![[x[0], x[1]]];
    for k in 0..opts.sim_steps {
        let data = mpc_data(k, [x[0], x[1]], weights);
        let (model, map) = transcribe(mpc_problem(&data))?;
        let theta = mpc_theta(&data);
        let sol = solve(&model, &vec![0.0; map.dims.n], &theta, &opts.solver)?;
        if sol.status != Status::Solved {
            return Err(BenchError::SolveFailed(format!(
                "policy solve at step {k} with weights {weights:?}: {}",
                sol.status
            )));
        }
        let ui = map.controls[0].start;
        let u = sol.point.x[ui];
        let du = if gradient {
            let sens = differentiate_with(&model, &sol, &theta, &sens_opts)?;
            let row = sens.dw_dtheta.row(ui);
            let du_dw = RowVector3::new(row[0], row[1], row[2]);
            let du_dx = RowVector2::new(row[3], row[4]);
            du_dw + du_dx * dx
        } else {
            RowVector3::zeros()
        };
        x = a * x + b * u;
        dx = a * dx + b * du;
        cost += stage_cost(&x, u, &reference, k, opts.control_penalty);
        grad += 2.0 * (x[0] - reference[k + 1][0]) * dx.row(0) + 2.0 * opts.control_penalty * (u - reference[k][2]) * du;
        states.push([x[0], x[1]]);
    }
    Ok(Rollout {
        cost,
        gradient: gradient.then(|| [grad[0], grad[1], grad[2]]),
        states,
    })
}

/// Central differences of the closed-loop cost in each weight.
pub fn finite_difference_gradient(weights: [f64; 3], opts: &AutotuneOptions) -> Result<[f64; 3], BenchError> {
    let cols = map_indexed(opts.execution, 3, |i| -> Result<f64, BenchError> {
        let h = opts.fd_step * weights[i].abs().max(1.0);
        let mut plus = weights;
        let mut minus = weights;
        plus[i] += h;
        minus[i] -= h;
        let cp = closed_loop(plus, opts, false)?.cost;
        let cm = closed_loop(minus, opts, false)?.cost;
        Ok((cp - cm) / (2.0 * h))
    });
    let mut out = [0.0; 3];
    for (i, c) in cols.into_iter().enumerate() {
        out[i] = c?;
    }
    Ok(out)
}

fn project(w: [f64; 3], min: f64) -> [f64; 3] {
    w.map(|v| v.max(min))
}

/// Projected gradient descent with backtracking on the weights.
pub fn autotune_mpc(opts: &AutotuneOptions) -> Result<TuningReport, BenchError> {
    let open_loop_cost = open_loop(opts);
    let mut weights = opts.initial_weights;
    let mut current = closed_loop(weights, opts, true)?;
    let untuned_cost = current.cost;

    let gradient_check = if opts.check_gradient {
        let analytic = current.gradient.expect("gradient requested");
        let fd = finite_difference_gradient(weights, opts)?;
        let scale = fd.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let diff = analytic
            .iter()
            .zip(&fd)
            .fold(0.0_f64, |m, (a, f)| m.max((a - f).abs()));
        Some(GradientCheck {
            analytic,
            finite_difference: fd,
            rel_error: if scale > 0.0 { diff / scale } else { diff },
        })
    } else {
        None
    };

    let mut history = Vec::with_capacity(opts.steps);
    let mut alpha = opts.initial_step;
    for step in 0..opts.steps {
        let g = current.gradient.expect("gradient requested");
        let mut accepted = None;
        let mut trial = alpha;
        for _ in 0..=opts.max_backtracks {
            let candidate = project(
                [
                    weights[0] - trial * g[0],
                    weights[1] - trial * g[1],
                    weights[2] - trial * g[2],
                ],
                opts.min_weight,
            );
            let moved: f64 = (0..3).map(|i| g[i] * (weights[i] - candidate[i])).sum();
            let rollout = closed_loop(candidate, opts, true)?;
            if moved > 0.0 && rollout.cost <= current.cost - 1e-4 * moved {
                accepted = Some((candidate, rollout));
                break;
            }
            trial *= 0.5;
        }
        history.push(TuningStep {
            step,
            weights,
            cost: current.cost,
            gradient: g,
            step_size: if accepted.is_some() { trial } else { 0.0 },
        });
        match accepted {
            Some((w, rollout)) => {
                weights = w;
                current = rollout;
                alpha = (2.0 * trial).min(1e3);
            }
            None => break,
        }
    }

    Ok(TuningReport {
        open_loop_cost,
        untuned_cost,
        tuned_cost: current.cost,
        initial_weights: opts.initial_weights,
        tuned_weights: weights,
        history,
        gradient_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_start_tracks_exactly() {
        let opts = AutotuneOptions {
            x_start: [0.0, 1.0],
            sim_steps: 8,
            ..Default::default()
        };
        let rollout = closed_loop(opts.initial_weights, &opts, true).unwrap();
        assert!(rollout.cost < 1e-12, "{}", rollout.cost);
        let g = rollout.gradient.unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-8), "{g:?}");
    }

    #[test]
    fn open_loop_keeps_the_initial_offset() {
        let opts = AutotuneOptions {
            x_start: [0.5, 1.0],
            sim_steps: 4,
            control_penalty: 0.0,
            ..Default::default()
        };
        assert!((open_loop(&opts) - 4.0 * 0.25).abs() < 1e-12);
    }
}
