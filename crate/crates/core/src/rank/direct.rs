use nalgebra::{DMatrix, DVector};

use super::{RankError, RankVector, SeedVector, TransitionOperator};

/// Node bound for the dense solve.
pub const DIRECT_MAX_NODES: usize = 2000;

/// Solves `pr (I - (1 - alpha) P~) = alpha s` by dense LU, where `P~` replaces
/// dangling rows with the seed.
pub fn pagerank_direct(op: &TransitionOperator, seed: &SeedVector, alpha: f64) -> Result<RankVector, RankError> {
    let n = op.len();
    if n > DIRECT_MAX_NODES {
        return Err(RankError::TooLarge { nodes: n, max: DIRECT_MAX_NODES });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RankError::InvalidParameter(format!("alpha {alpha} not in (0, 1)")));
    }
    if seed.len() != n {
        return Err(RankError::InvalidSeed(format!("seed has {} entries for {n} nodes", seed.len())));
    }
    // Transposed system: (I - (1 - alpha) P~^T) pr^T = alpha s^T.
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        if op.is_dangling(i) {
            for (j, s) in seed.mass().iter().enumerate() {
                a[(j, i)] -= (1.0 - alpha) * s;
            }
        } else {
            for (j, p) in op.row(i) {
                a[(j, i)] -= (1.0 - alpha) * p;
            }
        }
    }
    let b = DVector::from_iterator(n, seed.mass().iter().map(|s| alpha * s));
    let x = a.lu().solve(&b).ok_or(RankError::Singular)?;
    let scores: Vec<f64> = x.iter().copied().collect();
    let residual = op.residual(&scores, seed, alpha);
    Ok(RankVector { ids: op.ids().to_vec(), scores, residual, iterations: 0, nonmonotone_steps: 0 })
}
