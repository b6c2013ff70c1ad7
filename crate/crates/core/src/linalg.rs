//! Small dense kernels on row-major `f64` slices.

/// Dot product with four fixed accumulators; the summation order depends
/// only on the length, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Symmetric Gram matrix of `rows` (each of length `dim`), row-major `count x count`.
pub(crate) fn gram(rows: &[f64], dim: usize) -> alloc::vec::Vec<f64> {
    let count = if dim == 0 { 0 } else { rows.len() / dim };
    let mut g = alloc::vec![0.0; count * count];
    for a in 0..count {
        let ra = &rows[a * dim..(a + 1) * dim];
        for b in a..count {
            let v = dot(ra, &rows[b * dim..(b + 1) * dim]);
            g[a * count + b] = v;
            g[b * count + a] = v;
        }
    }
    g
}

/// Numerically stable `log Σ exp(x)`.
pub(crate) fn log_sum_exp<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.map(|v| libm::exp(v - max)).sum();
    max + libm::log(sum)
}
