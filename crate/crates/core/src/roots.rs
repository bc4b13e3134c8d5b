//! Bisection on a verified sign change.

/// Outcome of [`bisect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
}

/// Bisect `f` on [lo, hi] where `f(lo)` and `f(hi)` have opposite signs
/// (`f_lo`, `f_hi` are the values already computed by the caller). Stops
/// when the bracket width is below `rel_tol · |hi|` or an exact zero is hit.
pub fn bisect(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    mut f_lo: f64,
    f_hi: f64,
    rel_tol: f64,
) -> Root {
    debug_assert!(f_lo.signum() != f_hi.signum(), "bisect needs a sign change");
    let mut iterations = 0;
    while hi - lo > rel_tol * hi.abs().max(lo.abs()) && iterations < 2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        iterations += 1;
        if f_mid == 0.0 {
            return Root { x: mid, iterations };
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Root {
        x: 0.5 * (lo + hi),
        iterations,
    }
}
