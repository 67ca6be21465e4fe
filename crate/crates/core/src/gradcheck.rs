//! Central finite-difference checks of the analytic derivatives.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::Result;
use crate::network::{Algorithm, Network};
use crate::numerics::{softmax_xent, Activation, Matrix, Rng};

/// Step for the network weight check.
pub const WEIGHT_STEP: f64 = 1e-5;
/// Tolerance for the network weight check.
pub const WEIGHT_TOLERANCE: f64 = 1e-4;
/// Magnitudes below this are compared absolutely.
pub const REL_FLOOR: f64 = 1e-7;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub evaluated: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: max rel err {:.3e} over {} values (tol {:.0e})",
            if self.passed() { "ok  " } else { "FAIL" },
            self.name,
            self.max_rel_error,
            self.evaluated,
            self.tolerance
        )
    }
}

/// Compares BP weight (and bias) gradients for one sample against central
/// differences of the loss with step `step`.
pub fn check_network(net: &Network<f64>, x: &[f64], label: usize, step: f64) -> Result<(usize, f64)> {
    let trace = net.forward(x)?;
    let (_, e) = softmax_xent(trace.output().as_slice(), label)?;
    let grads = net.backward(Algorithm::Bp, &trace, &Matrix::column(&e))?;
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut n = 0;
    for l in 0..net.depth() {
        for k in 0..net.layer(l).weights().len() {
            let numeric = central(&mut probe, x, label, step, |p| &mut p.weights_mut(l)[k])?;
            worst = worst.max(relative_error(grads.weights[l].as_slice()[k], numeric));
            n += 1;
        }
        if let Some(gb) = &grads.bias[l] {
            for (k, &g) in gb.iter().enumerate() {
                let numeric = central(&mut probe, x, label, step, |p| &mut p.bias_mut(l).expect("bias")[k])?;
                worst = worst.max(relative_error(g, numeric));
                n += 1;
            }
        }
    }
    Ok((n, worst))
}

fn central(
    net: &mut Network<f64>,
    x: &[f64],
    label: usize,
    h: f64,
    mut param: impl FnMut(&mut Network<f64>) -> &mut f64,
) -> Result<f64> {
    let orig = *param(net);
    *param(net) = orig + h;
    let plus = net.loss(x, label)?;
    *param(net) = orig - h;
    let minus = net.loss(x, label)?;
    *param(net) = orig;
    Ok((plus - minus) / (2.0 * h))
}

/// Random 6-5-4-3 tanh network and input for `seed`.
pub fn reference_problem(seed: u64, bias: bool) -> Result<(Network<f64>, Vec<f64>, usize)> {
    let mut rng = Rng::new(seed);
    let mut net = Network::new(&[6, 5, 4, 3], Activation::Tanh, bias, &mut rng)?;
    if bias {
        for l in 0..net.depth() {
            for b in net.bias_mut(l).expect("bias enabled") {
                *b = rng.symmetric(0.5);
            }
        }
    }
    let x: Vec<f64> = (0..6).map(|_| rng.uniform(0.0, 1.0)).collect();
    let label = rng.below(3);
    Ok((net, x, label))
}

/// The full suite: activation derivatives, the softmax cross-entropy
/// gradient and the network gradients with and without bias.
pub fn run_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();

    for act in [Activation::Tanh, Activation::Relu, Activation::Linear] {
        let h = 1e-6;
        let mut worst = 0.0f64;
        let mut n = 0;
        for i in 0..=100 {
            let y = -5.0 + 0.1 * i as f64;
            // relu has a kink at 0
            if act == Activation::Relu && y.abs() < 2.0 * h {
                continue;
            }
            let numeric = (act.apply(y + h) - act.apply(y - h)) / (2.0 * h);
            worst = worst.max(relative_error(act.derivative(act.apply(y)), numeric));
            n += 1;
        }
        checks.push(Check { name: alloc::format!("{act} derivative"), evaluated: n, max_rel_error: worst, tolerance: 1e-6 });
    }

    let mut rng = Rng::new(seed ^ 0x5eed);
    let y: Vec<f64> = (0..10).map(|_| rng.symmetric(3.0)).collect();
    let label = rng.below(10);
    let (_, e) = softmax_xent(&y, label)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..y.len() {
        let mut p = y.clone();
        p[k] += h;
        let plus = softmax_xent(&p, label)?.0;
        p[k] -= 2.0 * h;
        let minus = softmax_xent(&p, label)?.0;
        worst = worst.max(relative_error(e[k], (plus - minus) / (2.0 * h)));
    }
    checks.push(Check { name: "softmax cross-entropy".into(), evaluated: y.len(), max_rel_error: worst, tolerance: 1e-6 });

    for bias in [false, true] {
        let (net, x, label) = reference_problem(seed, bias)?;
        let (n, worst) = check_network(&net, &x, label, WEIGHT_STEP)?;
        let name = if bias { "6-5-4-3 weights and biases" } else { "6-5-4-3 weights" };
        checks.push(Check { name: name.into(), evaluated: n, max_rel_error: worst, tolerance: WEIGHT_TOLERANCE });
    }
    Ok(checks)
}
