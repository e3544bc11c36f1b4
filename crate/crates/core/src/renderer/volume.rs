//! Alpha compositing along a ray and its reverse pass.

/// Fill `weights` and `trans` (transmittance before each interval) from
/// densities and interval lengths. Returns the accumulated opacity.
pub fn composite(sigma: &[f64], delta: &[f64], weights: &mut [f64], trans: &mut [f64]) -> f64 {
    let mut optical = 0.0f64;
    let mut acc = 0.0;
    for i in 0..sigma.len() {
        let t = (-optical).exp();
        let sd = sigma[i] * delta[i];
        let alpha = -(-sd).exp_m1();
        trans[i] = t;
        weights[i] = t * alpha;
        acc += weights[i];
        optical += sd;
    }
    acc
}

/// Map `∂L/∂w_i` to `∂L/∂σ_i`:
/// `δ_i [T_i (1 − α_i) g_i − Σ_{k>i} w_k g_k]`.
pub fn weights_backward(
    sigma: &[f64],
    delta: &[f64],
    weights: &[f64],
    trans: &[f64],
    d_w: &[f64],
    d_sigma: &mut [f64],
) {
    let mut suffix = 0.0;
    for i in (0..sigma.len()).rev() {
        let keep = (-sigma[i] * delta[i]).exp();
        d_sigma[i] = delta[i] * (trans[i] * keep * d_w[i] - suffix);
        suffix += weights[i] * d_w[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homogeneous(n: usize, sigma: f64, t0: f64, t1: f64) -> f64 {
        let delta = vec![(t1 - t0) / n as f64; n];
        let s = vec![sigma; n];
        let mut w = vec![0.0; n];
        let mut t = vec![0.0; n];
        composite(&s, &delta, &mut w, &mut t)
    }

    #[test]
    fn homogeneous_medium_matches_closed_form() {
        let exact = 1.0 - (-0.7f64 * 3.0).exp();
        assert!((homogeneous(256, 0.7, 1.0, 4.0) - exact).abs() < 1e-12);
    }

    #[test]
    fn empty_and_opaque() {
        let mut w = [0.0; 3];
        let mut t = [0.0; 3];
        assert_eq!(composite(&[0.0; 3], &[0.5; 3], &mut w, &mut t), 0.0);
        assert_eq!(t, [1.0; 3]);
        let acc = composite(&[1e6, 2.0, 3.0], &[0.5; 3], &mut w, &mut t);
        assert!((w[0] - 1.0).abs() < 1e-12 && (acc - 1.0).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let sigma = [0.3, 2.0, 0.05, 1.1];
        let delta = [0.4, 0.2, 0.9, 0.3];
        let g = [0.7, -0.2, 1.5, 0.4];
        let f = |s: &[f64]| {
            let mut w = [0.0; 4];
            let mut t = [0.0; 4];
            composite(s, &delta, &mut w, &mut t);
            w.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut w = [0.0; 4];
        let mut t = [0.0; 4];
        composite(&sigma, &delta, &mut w, &mut t);
        let mut d = [0.0; 4];
        weights_backward(&sigma, &delta, &w, &t, &g, &mut d);
        for k in 0..4 {
            let mut p = sigma;
            p[k] += 1e-6;
            let mut m = sigma;
            m[k] -= 1e-6;
            assert!(((f(&p) - f(&m)) / 2e-6 - d[k]).abs() < 1e-8);
        }
    }
}
