//! Numerical verification of factorization results.

/// Acceptance threshold for the relative factorization residual.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Relative residual ‖A − L·Lᵀ‖_F / ‖A‖_F where `L` is the lower triangle
/// (diagonal included) of `factored` and `A` is the symmetric input. Both
/// matrices are `n × n` in row-major order; entries above the diagonal of
/// either are ignored, with off-diagonal terms weighted twice to account
/// for symmetry. Returns the absolute residual when ‖A‖ is zero.
pub fn relative_residual(original: &[f64], factored: &[f64], n: usize) -> f64 {
    assert_eq!(original.len(), n * n, "original matrix size");
    assert_eq!(factored.len(), n * n, "factored matrix size");
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let mut v = original[i * n + j];
            for k in 0..=j {
                v -= factored[i * n + k] * factored[j * n + k];
            }
            let w = if i == j { 1.0 } else { 2.0 };
            num += w * v * v;
            den += w * original[i * n + j] * original[i * n + j];
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}
