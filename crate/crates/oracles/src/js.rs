/// Jensen–Shannon divergence in nats by direct summation; terms with a zero
/// probability contribute nothing.
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    let mut kl_pm = 0.0;
    let mut kl_qm = 0.0;
    for i in 0..p.len() {
        let m = 0.5 * (p[i] + q[i]);
        if p[i] > 0.0 {
            kl_pm += p[i] * (p[i] / m).ln();
        }
        if q[i] > 0.0 {
            kl_qm += q[i] * (q[i] / m).ln();
        }
    }
    0.5 * kl_pm + 0.5 * kl_qm
}

/// Counts normalized to sum 1.
pub fn normalize(counts: &[f64]) -> Vec<f64> {
    let s: f64 = counts.iter().sum();
    counts.iter().map(|c| c / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_is_ln2() {
        assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(js_divergence(&[0.25, 0.75], &[0.25, 0.75]), 0.0);
    }
}
