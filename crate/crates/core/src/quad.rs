//! Quadrature on uniform grids.

/// Composite Simpson rule; `values.len()` must be odd and at least 3.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd node count >= 3, got {n}");
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Simpson integral of the pointwise product of two arrays.
pub fn simpson_product(a: &[f64], b: &[f64], h: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd node count >= 3, got {n}");
    let mut acc = a[0] * b[0] + a[n - 1] * b[n - 1];
    for i in 1..n - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * a[i] * b[i];
    }
    acc * h / 3.0
}

/// Composite Simpson weights, already scaled by `h`.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd node count >= 3, got {n}");
    (0..n)
        .map(|i| {
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

const W_CENTRED: [f64; 6] = [11.0, -93.0, 802.0, 802.0, -93.0, 11.0];
const W_EDGE: [f64; 6] = [475.0, 1427.0, -798.0, 482.0, -173.0, 27.0];
const W_NEAR_EDGE: [f64; 6] = [-27.0, 637.0, 1022.0, -258.0, 77.0, -11.0];

/// Node indices and weights (to be scaled by `h`) of the six-point,
/// sixth-order rule for `[y_i, y_{i+1}]` on an `n`-node grid. Centred away
/// from the ends, one-sided near them.
pub fn interval_stencil(i: usize, n: usize) -> ([usize; 6], [f64; 6]) {
    debug_assert!(n >= 6 && i + 1 < n);
    let scale = |w: [f64; 6]| w.map(|v| v / 1440.0);
    if i == 0 {
        ([0, 1, 2, 3, 4, 5], scale(W_EDGE))
    } else if i == 1 {
        ([0, 1, 2, 3, 4, 5], scale(W_NEAR_EDGE))
    } else if i == n - 2 {
        ([n - 1, n - 2, n - 3, n - 4, n - 5, n - 6], scale(W_EDGE))
    } else if i == n - 3 {
        ([n - 1, n - 2, n - 3, n - 4, n - 5, n - 6], scale(W_NEAR_EDGE))
    } else {
        ([i - 2, i - 1, i, i + 1, i + 2, i + 3], scale(W_CENTRED))
    }
}

/// Integral over `[y_i, y_{i+1}]` by the six-point rule. If `periodic`,
/// `values` holds one period with the endpoint duplicated
/// (`values[n-1] == values[0]`) and the centred stencil wraps around.
pub fn interval_integral(values: &[f64], i: usize, h: f64, periodic: bool) -> f64 {
    let n = values.len();
    if periodic {
        let m = (n - 1) as isize;
        let at = |k: isize| values[k.rem_euclid(m) as usize];
        let i = i as isize;
        let s: f64 = W_CENTRED
            .iter()
            .enumerate()
            .map(|(o, w)| w * at(i - 2 + o as isize))
            .sum();
        s * h / 1440.0
    } else {
        let (idx, w) = interval_stencil(i, n);
        idx.iter().zip(w).map(|(k, w)| w * values[*k]).sum::<f64>() * h
    }
}

/// Running integral from the first node: `out[0] = 0`, `out[j] = ∫_{y_0}^{y_j}`.
pub fn cumulative(values: &[f64], h: f64, periodic: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..values.len() - 1 {
        acc += interval_integral(values, i, h, periodic);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nodes(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
        let h = (hi - lo) / (n - 1) as f64;
        ((0..n).map(|j| lo + j as f64 * h).collect(), h)
    }

    #[test]
    fn simpson_is_exact_on_cubics() {
        let (y, h) = nodes(-1.0, 2.0, 7);
        let v: Vec<f64> = y.iter().map(|t| t * t * t - 2.0 * t + 1.0).collect();
        let exact = (16.0 / 4.0 - 4.0 + 2.0) - (0.25 - 1.0 - 1.0);
        assert!((simpson(&v, h) - exact).abs() < 1e-13);
        let ones = vec![1.0; 7];
        assert!((simpson_product(&v, &ones, h) - exact).abs() < 1e-13);
    }

    #[test]
    fn cumulative_is_exact_on_quintics() {
        let (y, h) = nodes(0.0, 1.0, 9);
        let v: Vec<f64> = y.iter().map(|t| 6.0 * t.powi(5) + 4.0 * t * t * t - 1.0).collect();
        let c = cumulative(&v, h, false);
        for (t, got) in y.iter().zip(&c) {
            assert!((got - (t.powi(6) + t.powi(4) - t)).abs() < 1e-14);
        }
    }

    #[test]
    fn interval_rule_is_sixth_order_accurate() {
        let (y, h) = nodes(0.0, 2.0, 21);
        let v: Vec<f64> = y.iter().map(|t| (1.3 * t).exp()).collect();
        for i in 0..20 {
            let exact = ((1.3 * y[i + 1]).exp() - (1.3 * y[i]).exp()) / 1.3;
            assert!((interval_integral(&v, i, h, false) - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn periodic_cumulative_closes() {
        let n = 257;
        let (y, h) = nodes(0.0, 1.0, n);
        let tau = std::f64::consts::TAU;
        let v: Vec<f64> = y.iter().map(|t| (tau * t).cos()).collect();
        let c = cumulative(&v, h, true);
        for (t, got) in y.iter().zip(&c) {
            assert!((got - (tau * t).sin() / tau).abs() < 1e-11);
        }
    }

    proptest! {
        #[test]
        fn simpson_converges_at_fourth_order(k in 1.0f64..4.0) {
            let f = |t: f64| (k * t).sin();
            let exact = (1.0 - k.cos()) / k;
            let err = |n: usize| {
                let (y, h) = nodes(0.0, 1.0, n);
                let v: Vec<f64> = y.iter().map(|t| f(*t)).collect();
                (simpson(&v, h) - exact).abs()
            };
            let (e1, e2) = (err(33), err(65));
            prop_assert!(e2 < e1 / 12.0 || e2 < 1e-14);
        }
    }
}
