//! Bracketed scalar root finding.

/// Outcome of [`brent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub evals: usize,
}

/// Brent's method on `[a, b]` with `f(a)`, `f(b)` of opposite sign (or zero).
/// Stops when the bracket is narrower than `xtol` or `f` vanishes.
pub fn brent(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    xtol: f64,
    max_evals: usize,
) -> Option<Root> {
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    if fa == 0.0 {
        return Some(Root { x: a, fx: fa, evals: 0 });
    }
    if fb == 0.0 {
        return Some(Root { x: b, fx: fb, evals: 0 });
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    let mut evals = 0;
    while evals < max_evals {
        if fb == 0.0 || (b - a).abs() <= xtol {
            return Some(Root { x: b, fx: fb, evals });
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        let tol = xtol.max(4.0 * f64::EPSILON * b.abs());
        if !between
            || (bisected && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!bisected && (s - b).abs() >= (c - d).abs() / 2.0)
            || (bisected && (b - c).abs() < tol)
            || (!bisected && (c - d).abs() < tol)
        {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        evals += 1;
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let f = |x: f64| (x - 0.3) * (x * x + 1.0);
        let r = brent(f, -2.0, 5.0, f(-2.0), f(5.0), 1e-13, 100).unwrap();
        assert!((r.x - 0.3).abs() < 1e-12);
        assert!(r.evals < 50);
    }

    #[test]
    fn flat_then_steep() {
        // stopping-region shape: tiny positive plateau, quadratic descent
        let f = |x: f64| if x < 1.0 { 1e-9 * (1.0 - x) } else { -(x - 1.0).powi(2) };
        let r = brent(f, 0.0, 2.0, f(0.0), f(2.0), 1e-12, 200).unwrap();
        assert!((r.x - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_unbracketed() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 2.0, 2.0, 1e-12, 10).is_none());
    }
}
