//! Quadrature rules: Gauss–Legendre on intervals, adaptive Gauss–Kronrod, and
//! low-order symmetric rules on simplices.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
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
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Fixed Gauss–Legendre rule mapped to `[a, b]`.
pub fn integrate_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive 15-point Gauss–Kronrod quadrature with interval bisection.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol.max(1e-15 * value.abs()) || depth >= 40 {
            return value;
        }
        let m = 0.5 * (a + b);
        recurse(f, a, m, 0.5 * tol, depth + 1) + recurse(f, m, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&f, a, b, tol, 0)
}

/// Symmetric rule on the reference simplex given as barycentric points and
/// weights that sum to one (multiply by the simplex measure).
pub struct SimplexRule {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Degree-2 rule on a triangle (dim 2) or tetrahedron (dim 3).
pub fn simplex_degree2(dim: usize) -> SimplexRule {
    match dim {
        2 => {
            let a = 2.0 / 3.0;
            let b = 1.0 / 6.0;
            SimplexRule {
                points: vec![vec![a, b, b], vec![b, a, b], vec![b, b, a]],
                weights: vec![1.0 / 3.0; 3],
            }
        }
        3 => {
            let a = 0.585_410_196_624_968_5;
            let b = 0.138_196_601_125_010_5;
            SimplexRule {
                points: vec![vec![a, b, b, b], vec![b, a, b, b], vec![b, b, a, b], vec![b, b, b, a]],
                weights: vec![0.25; 4],
            }
        }
        _ => panic!("unsupported simplex dimension {dim}"),
    }
}
