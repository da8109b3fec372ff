//! Finite-difference gradient checking.

use crate::error::Result;
use crate::tensor::tape::{Tape, Value};
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Compares analytic gradients against central finite differences.
///
/// `build` records the computation under test on a fresh tape and returns a
/// scalar loss; it is re-run for every perturbed input element. Inputs are
/// all treated as differentiable. Returns the maximum elementwise relative
/// discrepancy, where the denominator is floored at 1 so near-zero gradients
/// are compared absolutely.
///
/// Callers are responsible for sampling inputs away from non-differentiable
/// kinks (ReLU at zero, pooling ties) by more than the probe step.
pub fn grad_check<F>(build: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Value]) -> Result<Value>,
{
    let eval = |tensors: &[Tensor]| -> Result<(Tape, Vec<Value>, Value)> {
        let mut tape = Tape::new();
        let vals: Vec<Value> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone().with_grad()))
            .collect();
        let loss = build(&mut tape, &vals)?;
        Ok((tape, vals, loss))
    };

    let (tape, vals, loss) = eval(inputs)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vals[ti]).expect("input requires grad");
        for ei in 0..input.numel() {
            let orig = input.data()[ei];

            work[ti].data_mut()[ei] = orig + eps;
            let (tape_p, _, loss_p) = eval(&work)?;
            let up = tape_p.value(loss_p).data()[0];

            work[ti].data_mut()[ei] = orig - eps;
            let (tape_m, _, loss_m) = eval(&work)?;
            let down = tape_m.value(loss_m).data()[0];

            work[ti].data_mut()[ei] = orig;

            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.data()[ei];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
