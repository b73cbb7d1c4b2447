//! Shared helpers for integration tests.

use blockgt::network::NetworkGraph;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Erdos-Renyi draw, retried until connected.
pub fn random_connected_graph(m: usize, seed: u64) -> NetworkGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut pairs = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                if rng.gen_bool(0.4) {
                    pairs.push((i, j));
                }
            }
        }
        if let Ok(g) = NetworkGraph::from_edges(m, &pairs) {
            return g;
        }
    }
}

/// Independent spectral oracle: largest singular value of the deflated
/// weight matrix by dense SVD.
pub fn dense_deflated_top_singular_value(weights: &DMatrix<f64>) -> f64 {
    let m = weights.nrows();
    let deflated = weights - DMatrix::from_element(m, m, 1.0 / m as f64);
    let svd = deflated.svd(false, false);
    svd.singular_values.iter().cloned().fold(0.0, f64::max)
}
