//! Slice kernels for the streaming path.
//!
//! Each kernel adds its floating-point operation count to a caller-owned
//! counter so tests can verify the per-sample cost is linear in `d`.

#[inline]
pub fn dot(a: &[f64], b: &[f64], ops: &mut u64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    *ops += 2 * a.len() as u64;
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `a·(y - w)` without forming the difference.
#[inline]
pub fn dot_diff(a: &[f64], y: &[f64], w: &[f64], ops: &mut u64) -> f64 {
    debug_assert!(a.len() == y.len() && a.len() == w.len());
    *ops += 3 * a.len() as u64;
    a.iter().zip(y.iter().zip(w)).map(|(ai, (yi, wi))| ai * (yi - wi)).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64], ops: &mut u64) {
    debug_assert_eq!(x.len(), y.len());
    *ops += 2 * x.len() as u64;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub fn add_assign(x: &[f64], y: &mut [f64], ops: &mut u64) {
    *ops += x.len() as u64;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn scale(alpha: f64, a: &mut [f64]) {
    for x in a {
        *x *= alpha;
    }
}
