//! Shared helpers for unit tests.
#![allow(clippy::needless_range_loop)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::numerics::gradcheck::{agrees, central, DEFAULT_ABS_TOL, DEFAULT_STEP};
use crate::numerics::{Graph, NodeId, Tensor};

/// Checks every input entry of `build`'s scalar output against central
/// finite differences. The numeric side re-runs the forward pass only, so
/// it is independent of the tape's backward rules.
pub(crate) fn fd_check(
    inputs: &[Tensor],
    build: &dyn Fn(&mut Graph, &[NodeId]) -> NodeId,
    rel_tol: f64,
) {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &ids);
    g.backward(loss);
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| g.grad(id)).collect();

    let eval = |work: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = work.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &ids);
        g.value(loss).data()[0]
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, tensor) in inputs.iter().enumerate() {
        for k in 0..tensor.numel() {
            let orig = work[ti].data()[k];
            work[ti].data_mut()[k] = orig + DEFAULT_STEP;
            let f_plus = eval(&work);
            work[ti].data_mut()[k] = orig - DEFAULT_STEP;
            let f_minus = eval(&work);
            work[ti].data_mut()[k] = orig;
            let numeric = central(f_plus, f_minus, DEFAULT_STEP);
            assert!(
                agrees(analytic[ti][k], numeric, rel_tol, DEFAULT_ABS_TOL),
                "input {} entry {}: analytic {} vs numeric {}",
                ti,
                k,
                analytic[ti][k],
                numeric
            );
        }
    }
}

pub(crate) fn seeded_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::uniform(shape, -1.5, 1.5, &mut rng)
}
