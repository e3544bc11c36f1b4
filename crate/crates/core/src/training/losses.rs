//! Per-ray loss terms with their gradients.

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute color error over the three channels.
pub fn color_l1(pred: &[f64; 3], target: &[f64; 3]) -> (f64, [f64; 3]) {
    let mut v = 0.0;
    let mut g = [0.0; 3];
    for c in 0..3 {
        let d = pred[c] - target[c];
        v += d.abs() / 3.0;
        g[c] = sign(d) / 3.0;
    }
    (v, g)
}

/// `scale · |pred − target|` and its derivative w.r.t. `pred`.
pub fn weighted_l1(pred: f64, target: f64, scale: f64) -> (f64, f64) {
    let d = pred - target;
    (scale * d.abs(), scale * sign(d))
}

const PROB_FLOOR: f64 = 1e-12;

/// `−ln p[label]` of a rendered class distribution; gradient w.r.t. `p`.
pub fn cross_entropy(p: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let q = p[label];
    if q > PROB_FLOOR {
        grad[label] = -1.0 / q;
        -q.ln()
    } else {
        -PROB_FLOOR.ln()
    }
}

/// `Σ_ij w_i w_j |m_i − m_j| + ⅓ Σ_i w_i² δ_i` over intervals with edges
/// `edges` (normalized distance). Adds `∂L/∂w` into `d_w`.
pub fn distortion(edges: &[f64], w: &[f64], d_w: &mut [f64]) -> f64 {
    let n = w.len();
    let mut v = 0.0;
    for i in 0..n {
        let mi = 0.5 * (edges[i] + edges[i + 1]);
        let di = edges[i + 1] - edges[i];
        let mut cross = 0.0;
        for j in 0..n {
            let mj = 0.5 * (edges[j] + edges[j + 1]);
            cross += w[j] * (mi - mj).abs();
        }
        v += w[i] * cross + w[i] * w[i] * di / 3.0;
        d_w[i] += 2.0 * cross + 2.0 * w[i] * di / 3.0;
    }
    v
}

const PROP_EPS: f64 = 1e-6;

/// `Σ max(0, bound − w)² / (w + ε)`: penalizes proposal weights `w` that
/// fall below the stop-gradient bound from the next stage. Adds `∂L/∂w`.
pub fn proposal_bound(w: &[f64], bound: &[f64], d_w: &mut [f64]) -> f64 {
    let mut v = 0.0;
    for i in 0..w.len() {
        let r = bound[i] - w[i];
        if r <= 0.0 {
            continue;
        }
        let den = w[i].max(0.0) + PROP_EPS;
        v += r * r / den;
        d_w[i] += (-2.0 * r * den - r * r) / (den * den);
    }
    v
}

/// Edge-aware smoothness of a 2×2 patch ordered `(0,0) (1,0) (0,1) (1,1)`:
/// mean of `|∂D| e^{−|∂I|}` over its two horizontal and two vertical edges.
/// `gray` is the target image intensity. Adds `∂L/∂D`.
pub fn smoothness_patch(disp: &[f64; 4], gray: &[f64; 4], d_disp: &mut [f64; 4]) -> f64 {
    const EDGES: [(usize, usize); 4] = [(0, 1), (2, 3), (0, 2), (1, 3)];
    let mut v = 0.0;
    for (a, b) in EDGES {
        let k = (-(gray[b] - gray[a]).abs()).exp() / 2.0;
        let d = disp[b] - disp[a];
        v += k * d.abs();
        d_disp[b] += k * sign(d);
        d_disp[a] -= k * sign(d);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64]) -> f64, x: &[f64], g: &[f64]) {
        for i in 0..x.len() {
            let mut p = x.to_vec();
            p[i] += 1e-6;
            let mut m = x.to_vec();
            m[i] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!(
                (fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "[{i}] {fd} vs {}",
                g[i]
            );
        }
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        assert_eq!(color_l1(&[0.2, 0.5, 0.9], &[0.2, 0.5, 0.9]).0, 0.0);
        assert_eq!(weighted_l1(0.3, 0.3, 1.0).0, 0.0);
        // Logit margin 20 on a 5-class softmax.
        let z: f64 = 1.0 + 4.0 * (-20.0f64).exp();
        let p = [
            1.0 / z,
            (-20.0f64).exp() / z,
            (-20.0f64).exp() / z,
            (-20.0f64).exp() / z,
            (-20.0f64).exp() / z,
        ];
        let mut g = [0.0; 5];
        assert!(cross_entropy(&p, 0, &mut g) < 1e-3);
    }

    #[test]
    fn zero_confidence_masks_depth() {
        assert_eq!(weighted_l1(0.9, 0.1, 0.0), (0.0, 0.0));
    }

    #[test]
    fn single_weight_distortion() {
        let edges = [0.0, 0.1, 0.3, 0.6];
        let w = [0.0, 0.7, 0.0];
        let mut d = [0.0; 3];
        let v = distortion(&edges, &w, &mut d);
        assert!((v - 0.7 * 0.7 * 0.2 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distortion_gradient() {
        let edges = [0.0, 0.1, 0.25, 0.3, 0.6, 0.65];
        let w = [0.1, 0.3, 0.05, 0.4, 0.1];
        let mut d = [0.0; 5];
        distortion(&edges, &w, &mut d);
        fd_check(|x| distortion(&edges, x, &mut [0.0; 5]), &w, &d);
    }

    #[test]
    fn matching_bound_costs_nothing() {
        let w = [0.1, 0.5, 0.2];
        let mut d = [0.0; 3];
        assert_eq!(proposal_bound(&w, &w, &mut d), 0.0);
        assert_eq!(d, [0.0; 3]);
        let bound = [0.3, 0.4, 0.6];
        proposal_bound(&w, &bound, &mut d);
        fd_check(|x| proposal_bound(x, &bound, &mut [0.0; 3]), &w, &d);
    }

    #[test]
    fn smoothness_cases() {
        let mut d = [0.0; 4];
        assert_eq!(
            smoothness_patch(&[0.2; 4], &[0.1, 0.9, 0.4, 0.3], &mut d),
            0.0
        );
        let disp = [0.1, 0.3, 0.25, 0.05];
        let gray = [0.2, 0.2, 0.8, 0.1];
        let mut d = [0.0; 4];
        smoothness_patch(&disp, &gray, &mut d);
        fd_check(
            |x| smoothness_patch(&[x[0], x[1], x[2], x[3]], &gray, &mut [0.0; 4]),
            &disp,
            &d,
        );
    }

    #[test]
    fn cross_entropy_gradient() {
        let p = [0.2, 0.5, 0.3];
        let mut g = [0.0; 3];
        cross_entropy(&p, 2, &mut g);
        fd_check(|x| cross_entropy(x, 2, &mut [0.0; 3]), &p, &g);
    }
}
