//! Bracketed scalar solvers.

/// Bisection for a sign change of `f` on `[lo, hi]`. `increasing` states the sign
/// convention: if true, `f(lo) < 0 < f(hi)`. Runs until the midpoint no longer
/// separates the endpoints or the bracket is below `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, increasing: bool, tol: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v.is_nan() {
            // Treat NaN as "past the root" on the side of larger arguments.
            hi = mid;
            continue;
        }
        if (v < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, true, 0.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let r = bisect(|x| 2.0 - x * x, 0.0, 2.0, false, 0.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), -1.0, 2.0, 80);
        assert!((x - 0.3).abs() < 1e-7);
        assert!(v.abs() < 1e-13);
    }
}
