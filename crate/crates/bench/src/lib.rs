//! Benchmark fixtures shared by the criterion targets.

use wfens_core::statespace::{HermitianOperator, LinearHamiltonian};

/// Tridiagonal chain of length `dim` with a staggered on-site drive as the single parameter.
pub fn chain(dim: usize) -> LinearHamiltonian {
    let mut hop = vec![0.0; dim * dim];
    for i in 0..dim - 1 {
        hop[i * dim + i + 1] = -1.0;
        hop[(i + 1) * dim + i] = -1.0;
    }
    let base = HermitianOperator::from_rows(dim, &hop, &vec![0.0; dim * dim]).expect("symmetric");
    let drive: Vec<f64> = (0..dim).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    LinearHamiltonian::new(base, vec![HermitianOperator::diagonal(&drive)]).expect("matching dimensions")
}
