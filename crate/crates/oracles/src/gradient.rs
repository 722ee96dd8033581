/// Central differences `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn central_difference<const N: usize>(f: impl Fn(&[f64; N]) -> f64, x: &[f64; N], h: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for i in 0..N {
        let mut hi = *x;
        let mut lo = *x;
        hi[i] += h;
        lo[i] -= h;
        out[i] = (f(&hi) - f(&lo)) / (2.0 * h);
    }
    out
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, and 0 when both vectors are zero.
pub fn vector_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = central_difference(|x: &[f64; 2]| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-9);
        assert!((g[1] - 3.0).abs() < 1e-9);
        assert_eq!(relative_error(1.0, 1.0, 1e-3), 0.0);
        assert_eq!(relative_error(0.0, 1e-6, 1e-3), 1e-3);
        assert_eq!(vector_relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(vector_relative_error(&[3.0, 4.0], &[3.0, 4.0]), 0.0);
        assert_eq!(vector_relative_error(&[3.0, 4.0], &[0.0, 4.0]), 0.6);
    }
}
