//! Combinatorial and spectral reference routines for graph tests.

use nalgebra::DMatrix;

/// Union-find connectivity oracle: true iff the edge list spans all `n` nodes.
pub fn union_find_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let root = find(&mut parent, 0);
    (1..n).all(|i| find(&mut parent, i) == root)
}

/// Spectral norm of `W^m − (1/n)·11ᵀ` computed by explicit matrix powers and
/// a singular value decomposition.
pub fn power_deviation_norm(w: &DMatrix<f64>, m: u32) -> f64 {
    let n = w.nrows();
    assert_eq!(n, w.ncols());
    let mut power = DMatrix::<f64>::identity(n, n);
    for _ in 0..m {
        power = &power * w;
    }
    let averaging = DMatrix::<f64>::from_element(n, n, 1.0 / n as f64);
    let deviation = power - averaging;
    deviation.svd(false, false).singular_values[0]
}
