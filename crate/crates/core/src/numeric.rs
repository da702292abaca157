//! Small numerical helpers shared across modules: compensated summation,
//! Gauss-Legendre rules, seed derivation and sample statistics.

use std::f64::consts::PI;

/// Neumaier-compensated accumulator. Summation order is the caller's order,
/// so results are reproducible for a fixed iteration order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
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
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over [a, b] with an `n`-point Gauss-Legendre rule.
pub fn integrate_gl<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = CompensatedSum::new();
    for (x, w) in rule.0.iter().zip(rule.1.iter()) {
        acc.add(w * f(mid + half * x));
    }
    half * acc.value()
}

/// Composite Gauss-Legendre over `panels` equal sub-intervals.
pub fn integrate_composite<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    panels: usize,
    rule: &(Vec<f64>, Vec<f64>),
) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = CompensatedSum::new();
    for p in 0..panels {
        let lo = a + h * p as f64;
        let hi = if p + 1 == panels { b } else { lo + h };
        acc.add(integrate_gl(&mut f, lo, hi, rule));
    }
    acc.value()
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of counters. Distinct
/// paths give statistically independent streams; the same path always gives
/// the same seed.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    s
}

/// Sample mean and unbiased sample standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let ss = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, (ss / (n as f64 - 1.0)).sqrt())
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let t = pos - lo as f64;
    v[lo] * (1.0 - t) + v[hi] * t
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Volume of the unit ball in dimension `d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn unit_sphere_area(d: usize) -> f64 {
    d as f64 * unit_ball_volume(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64] {
            let rule = gauss_legendre(n);
            let deg = 2 * n - 1;
            let got = integrate_gl(|x| x.powi(deg as i32 - 1) + 1.0, -1.0, 1.0, &rule);
            let want = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 } + 2.0;
            assert!((got - want).abs() < 1e-13, "n={n}: {got} vs {want}");
            assert!((rule.1.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut acc = CompensatedSum::new();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 1000.0);
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(7, &[0, 1]);
        let b = derive_seed(7, &[1, 0]);
        let c = derive_seed(7, &[0, 1]);
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-14);
    }
}
