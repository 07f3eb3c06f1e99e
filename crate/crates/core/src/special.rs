//! Special functions and quadrature rules used by the operator assembly.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function via the Lanczos approximation (g = 7, nine terms), with the
/// reflection formula below 1/2.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over `[a, b]` with a fixed Gauss-Legendre rule.
pub fn integrate_fixed<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const GK_WEIGHTS_G: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = fc * GK_WEIGHTS_K[7];
    let mut gauss = fc * GK_WEIGHTS_G[3];
    for j in 0..7 {
        let dx = half * GK_NODES[j];
        let pair = f(mid - dx) + f(mid + dx);
        kronrod += GK_WEIGHTS_K[j] * pair;
        if j % 2 == 1 {
            gauss += GK_WEIGHTS_G[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature by recursive bisection.
///
/// Stops refining an interval once its Kronrod-Gauss difference is below
/// `max(abs_tol, rel_tol * |local value|)` scaled to the interval length.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0u32)];
    let mut total = 0.0;
    let span = (b - a).abs();
    while let Some((lo, hi, depth)) = stack.pop() {
        let (value, err) = gauss_kronrod_15(&f, lo, hi);
        let share = (hi - lo).abs() / span;
        if err <= (abs_tol * share).max(rel_tol * value.abs()) || depth >= 50 {
            total += value;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_matches_known_values() {
        assert_relative_eq!(gamma(1.0), 1.0, max_relative = 1e-14);
        assert_relative_eq!(gamma(5.0), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(1.5), 0.5 * PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(0.1), 9.513_507_698_668_732, max_relative = 1e-13);
        assert_relative_eq!(gamma(1e-3), 999.423_772_484_595_5, max_relative = 1e-12);
    }

    #[test]
    fn gamma_recurrence() {
        for i in 1..40 {
            let x = 0.05 + 0.1 * i as f64;
            assert_relative_eq!(gamma(x + 1.0), x * gamma(x), max_relative = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(6);
        assert_relative_eq!(rule.1.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        // degree 11 is the exactness limit for six points
        let val = integrate_fixed(|x| x.powi(10) + x.powi(3), -1.0, 1.0, &rule);
        assert_relative_eq!(val, 2.0 / 11.0, max_relative = 1e-13);
        let odd = gauss_legendre(7);
        assert_relative_eq!(odd.0[3], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = integrate_adaptive(|x| x.powf(-0.5), 0.0, 1.0, 1e-12, 1e-12);
        assert_relative_eq!(v, 2.0, max_relative = 1e-8);
        let w = integrate_adaptive(|x| x.sin(), 0.0, PI, 1e-14, 1e-14);
        assert_relative_eq!(w, 2.0, max_relative = 1e-13);
    }
}
