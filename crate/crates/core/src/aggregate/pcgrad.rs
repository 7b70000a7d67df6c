use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::deconflict::TaskGradients;
use crate::dense;
use crate::error::{Error, Result};

/// Output of the sequential projection procedure.
#[derive(Debug, Clone, PartialEq)]
pub struct PcGradOutcome {
    pub modified: Vec<Vec<f64>>,
    pub update: Vec<f64>,
}

/// Draws, for each task, a random order over the other tasks.
pub fn random_orders(num_tasks: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_tasks)
        .map(|i| {
            let mut order: Vec<usize> = (0..num_tasks).filter(|&j| j != i).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

/// Sequential projection with explicit per-task orders.
///
/// Task `i`'s working copy is projected off each original `g_j` (in
/// `orders[i]`) whenever their inner product is negative. The update is the
/// sum of the modified gradients.
pub fn pcgrad_with_orders(grads: &TaskGradients, orders: &[Vec<usize>]) -> Result<PcGradOutcome> {
    let t = grads.num_tasks();
    if orders.len() != t {
        return Err(Error::invalid(format!(
            "expected {t} orders, got {}",
            orders.len()
        )));
    }
    let mut modified = Vec::with_capacity(t);
    for (i, order) in orders.iter().enumerate() {
        let mut w = grads.row(i).to_vec();
        for &j in order {
            if j >= t || j == i {
                return Err(Error::invalid(format!("bad order entry {j} for task {i}")));
            }
            let gj = grads.row(j);
            let d = dense::dot(&w, gj);
            if d < 0.0 {
                let gg = dense::sq_norm(gj);
                if gg > 0.0 {
                    dense::axpy(-d / gg, gj, &mut w);
                }
            }
        }
        modified.push(w);
    }
    let update = dense::sum_rows(&modified, grads.dim());
    Ok(PcGradOutcome { modified, update })
}

/// Sequential projection with seeded random orders.
pub fn pcgrad_aggregate(grads: &TaskGradients, seed: u64) -> Result<PcGradOutcome> {
    pcgrad_with_orders(grads, &random_orders(grads.num_tasks(), seed))
}
