//! Small deterministic scalar minimizer.

/// Golden-section minimization of `f` on [lo, hi] to absolute tolerance `tol`
/// in the argument. Deterministic; on an exact tie the lower argument wins.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    debug_assert!(lo < hi && tol > 0.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Evaluate the midpoint and both retained probes; prefer lower argument on ties.
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let mut best = (mid, fm);
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx < best.1 || (fx == best.1 && x < best.0) {
            best = (x, fx);
        }
    }
    best.0
}
