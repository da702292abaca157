//! Brute-force reference implementations for tests. Nothing here calls the
//! kernel, graph, energy or transport code it is used to check.

use crate::domain::{BoxDomain, DensitySpec, PointCloud};
use crate::energy::DoubleWell;
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::kernel::{ConvexBody, FeatureProjection, InteractionKernel, KernelProfile};
use crate::minimize::SeedConstraint;

pub const BRUTE_PAIRS_LIMIT: usize = 2000;
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    pub method: &'static str,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `(1/(eps n)) sum V + (1/(eps n^2)) sum_{i != j} W |dmu|`.
    GlEnergy(DoubleWell),
    GtvSquared,
    /// `1/(eps n (n-1))` normalization.
    GtvUnbiased,
    /// `(1/(eps^p n^2)) sum_{i != j} W |dmu|^p`.
    PLaplacian(f64),
}

fn profile(p: &KernelProfile, t: f64) -> f64 {
    let t = t.abs();
    match *p {
        KernelProfile::Indicator { support, right_open } => {
            if right_open {
                (t < support) as u8 as f64
            } else {
                (t <= support) as u8 as f64
            }
        }
        KernelProfile::Hat { support } => {
            if t < support {
                1.0 - t / support
            } else {
                0.0
            }
        }
        KernelProfile::TruncGaussian { support } => {
            if t <= support {
                (-(t * t)).exp()
            } else {
                0.0
            }
        }
    }
}

fn in_body(b: &ConvexBody, x: &[f64]) -> bool {
    let q: f64 = match b {
        ConvexBody::Ball { center, radius } => x.iter().zip(center).map(|(a, c)| ((a - c) / radius).powi(2)).sum(),
        ConvexBody::Ellipsoid { center, semi_axes } => {
            x.iter().zip(center).zip(semi_axes).map(|((a, c), s)| ((a - c) / s).powi(2)).sum()
        }
    };
    q < 1.0
}

fn projection(p: &FeatureProjection, x: &[f64]) -> f64 {
    match p {
        FeatureProjection::WeightedEuclidean { weights } => x.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>().sqrt(),
        FeatureProjection::QuadraticForm { matrix } => {
            let mut s = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    s += matrix[i][j] * x[i].abs() * x[j].abs();
                }
            }
            s.max(0.0).sqrt()
        }
        FeatureProjection::ConvexIndicator { body } => {
            if in_body(body, x) {
                0.0
            } else {
                1.0
            }
        }
        FeatureProjection::Linear { direction } => x.iter().zip(direction).map(|(v, w)| v * w).sum(),
    }
}

/// `eta(x)` straight from the definition, averaged with `eta(-x)` when the
/// kernel asks for symmetrization.
pub fn eta(k: &InteractionKernel, x: &[f64]) -> f64 {
    let a = profile(&k.profile, projection(&k.projection, x));
    if !k.symmetrize {
        return a;
    }
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    0.5 * (a + profile(&k.profile, projection(&k.projection, &neg)))
}

fn well(v: &DoubleWell, t: f64) -> f64 {
    match v {
        DoubleWell::Quartic => t * t * (1.0 - t) * (1.0 - t),
        DoubleWell::WShaped => t.abs().min((1.0 - t).abs()),
    }
}

/// Direct double sum over ordered pairs.
pub fn brute_pairs(cloud: &PointCloud, k: &InteractionKernel, eps: f64, mu: &[f64], f: Functional) -> Result<OracleResult> {
    let n = cloud.n();
    if n > BRUTE_PAIRS_LIMIT {
        return Err(Error::LimitExceeded(format!("brute-force pair scan is limited to n <= {BRUTE_PAIRS_LIMIT}")));
    }
    if mu.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: mu.len() });
    }
    let d = cloud.dim();
    let p = if let Functional::PLaplacian(p) = f { p } else { 1.0 };
    let scale = eps.powi(-(d as i32));
    let mut tv = 0.0;
    let mut evals = 0u64;
    let mut z = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for t in 0..d {
                z[t] = (cloud.point(i)[t] - cloud.point(j)[t]) / eps;
            }
            evals += 1;
            let w = scale * eta(k, &z);
            if w != 0.0 {
                tv += w * (mu[i] - mu[j]).abs().powf(p);
            }
        }
    }
    let nf = n as f64;
    let value = match f {
        Functional::GlEnergy(v) => mu.iter().map(|&t| well(&v, t)).sum::<f64>() / (eps * nf) + tv / (eps * nf * nf),
        Functional::GtvSquared => tv / (eps * nf * nf),
        Functional::GtvUnbiased => tv / (eps * nf * (nf - 1.0)),
        Functional::PLaplacian(p) => tv / (eps.powf(p) * nf * nf),
    };
    Ok(OracleResult { value, method: "brute-pairs", evaluations: evals })
}

/// Exhaustive minimum of the squared-normalized graph TV over binary
/// labelings consistent with `seeds`.
pub fn enumerate_binary(g: &WeightedGraph, seeds: &SeedConstraint) -> Result<(Vec<f64>, OracleResult)> {
    let n = g.n();
    let mut fixed: Vec<Option<u8>> = vec![None; n];
    for &(i, c) in seeds.seeds() {
        if i >= n {
            return Err(Error::InvalidSeeds(format!("seed vertex {i} out of range")));
        }
        fixed[i] = Some(c);
    }
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
    if free.len() > ENUMERATION_LIMIT {
        return Err(Error::LimitExceeded(format!("enumeration is limited to {ENUMERATION_LIMIT} free vertices")));
    }
    let edges: Vec<(usize, usize, f64)> = g.edges().collect();
    let mut labels: Vec<u8> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
    let mut best = (f64::INFINITY, labels.clone());
    for mask in 0u64..(1u64 << free.len()) {
        for (b, &v) in free.iter().enumerate() {
            labels[v] = ((mask >> b) & 1) as u8;
        }
        let cut: f64 = edges.iter().filter(|e| labels[e.0] != labels[e.1]).map(|e| e.2).sum();
        if cut < best.0 {
            best = (cut, labels.clone());
        }
    }
    let nf = n as f64;
    let value = 2.0 * best.0 / (g.eps() * nf * nf);
    let mu = best.1.iter().map(|&c| c as f64).collect();
    Ok((mu, OracleResult { value, method: "enumeration", evaluations: 1u64 << free.len() }))
}

/// `sigma(nu) = int eta(x) |x . nu| dx` by the midpoint rule on a cube grid
/// of `cells^d` cells covering `[-r, r]^d`.
pub fn sigma_dense(k: &InteractionKernel, nu: &[f64], r: f64, cells: usize) -> Result<OracleResult> {
    let d = nu.len();
    if d == 0 || d > 3 {
        return Err(Error::LimitExceeded("dense quadrature is limited to d <= 3".into()));
    }
    let h = 2.0 * r / cells as f64;
    let total = cells.pow(d as u32);
    let mut x = vec![0.0; d];
    let mut s = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for v in x.iter_mut() {
            *v = -r + h * ((rem % cells) as f64 + 0.5);
            rem /= cells;
        }
        let dot: f64 = x.iter().zip(nu).map(|(a, b)| a * b).sum();
        s += eta(k, &x) * dot.abs();
    }
    Ok(OracleResult { value: s * h.powi(d as i32), method: "dense-midpoint", evaluations: total as u64 })
}

/// `int |mu_n(T(x)) - mu(x)| rho(x) dx` on a midpoint grid, with `T` the
/// monotone rearrangement `x -> xi_(ceil(n F(x)))`.
pub fn tl1_label_grid(data: &[f64], mu_n: &[f64], mu: impl Fn(f64) -> f64, rho: &DensitySpec, cells: usize) -> Result<f64> {
    let dom: &BoxDomain = rho.domain();
    let n = data.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| data[a].partial_cmp(&data[b]).unwrap().then(a.cmp(&b)));
    let (a, b) = (dom.lower()[0], dom.upper()[0]);
    let h = (b - a) / cells as f64;
    let mut s = 0.0;
    for c in 0..cells {
        let x = a + h * (c as f64 + 0.5);
        let f = rho.marginal_cdf(0, x)?;
        let k = ((n as f64 * f).ceil() as usize).clamp(1, n) - 1;
        s += (mu_n[idx[k]] - mu(x)).abs() * rho.pdf(&[x]) * h;
    }
    Ok(s)
}

/// Kolmogorov-Smirnov distance between the empirical law of `data` and the
/// uniform law on (0, 1).
pub fn ks_uniform(data: &[f64]) -> f64 {
    let mut v = data.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    v.iter().enumerate().fold(0.0f64, |s, (i, &x)| s.max((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
}

/// Expected edge count of the unit-ball graph on `n` uniform points in the
/// unit square (`eps <= 1`): `C(n, 2) p` with
/// `p = P(|X - Y| <= eps) = pi eps^2 - 8 eps^3 / 3 + eps^4 / 2`.
pub fn expected_edges_unit_square(n: usize, eps: f64) -> f64 {
    let p = std::f64::consts::PI * eps * eps - 8.0 * eps.powi(3) / 3.0 + eps.powi(4) / 2.0;
    (n * (n - 1)) as f64 / 2.0 * p
}

/// Exact expected unbiased GTV of `1{x_1 > 1/2}` on the uniform unit square
/// with the unit-ball kernel, `eps <= 1/2`: the 4/3 of the infinite strip
/// minus the pairs lost across the two edges parallel to the normal.
pub fn half_space_expected_gtv(eps: f64) -> f64 {
    4.0 / 3.0 - eps / 2.0
}

/// Same for the corner `1{x_1 > 1/2, x_2 > 1/2}`.
pub fn corner_expected_gtv(eps: f64) -> f64 {
    4.0 / 3.0 - 3.0 * eps / 4.0
}
