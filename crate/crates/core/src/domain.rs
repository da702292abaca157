//! Box domains, sampling densities, seeded point clouds and the
//! bandwidth schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, integrate_gl, CompensatedSum};

/// Axis-aligned open box `prod (lower_k, upper_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxDomainRaw")]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDomainRaw {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxDomainRaw> for BoxDomain {
    type Error = Error;
    fn try_from(raw: BoxDomainRaw) -> Result<Self> {
        BoxDomain::new(raw.lower, raw.upper)
    }
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        for (k, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || u <= l {
                return Err(Error::InvalidDomain(format!("axis {k}: need finite bounds with upper > lower, got ({l}, {u})")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `(0,1)^d`.
    pub fn unit(d: usize) -> Self {
        assert!(d >= 1, "dimension must be at least 1");
        Self { lower: vec![0.0; d], upper: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains_strict(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| v > self.lower[k] && v < self.upper[k])
    }

    pub fn contains_closed(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(k, &v)| v >= self.lower[k] && v <= self.upper[k])
    }
}

/// Shape of a sampling density. Polynomial coefficients are in the
/// normalized axis coordinate `s = (t - lower) / (upper - lower)`, lowest
/// degree first; piecewise values are row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityKind {
    Uniform,
    ProductPolynomial { coefficients: Vec<Vec<f64>> },
    PiecewiseConstant { cells: Vec<usize>, values: Vec<f64> },
}

/// A validated probability density on a box domain, bounded above and
/// below by positive constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensitySpecRaw")]
pub struct DensitySpec {
    kind: DensityKind,
    domain: BoxDomain,
    /// Raw integral of the unnormalized shape, divided out in `pdf`.
    normalization: f64,
    #[serde(skip_serializing)]
    bounds: (f64, f64),
}

#[derive(Deserialize)]
struct DensitySpecRaw {
    kind: DensityKind,
    domain: BoxDomain,
    #[allow(dead_code)]
    #[serde(default)]
    normalization: Option<f64>,
}

impl TryFrom<DensitySpecRaw> for DensitySpec {
    type Error = Error;
    fn try_from(raw: DensitySpecRaw) -> Result<Self> {
        DensitySpec::new(raw.kind, &raw.domain)
    }
}

const POSITIVITY_GRID: usize = 4096;

impl DensitySpec {
    pub fn uniform(domain: &BoxDomain) -> Self {
        let v = domain.volume();
        Self { kind: DensityKind::Uniform, domain: domain.clone(), normalization: v, bounds: (1.0 / v, 1.0 / v) }
    }

    pub fn new(kind: DensityKind, domain: &BoxDomain) -> Result<Self> {
        let d = domain.dim();
        match &kind {
            DensityKind::Uniform => Ok(Self::uniform(domain)),
            DensityKind::ProductPolynomial { coefficients } => {
                if coefficients.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: coefficients.len() });
                }
                let mut z = 1.0;
                let mut lo = 1.0;
                let mut hi = 1.0;
                for (k, c) in coefficients.iter().enumerate() {
                    if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidDensity(format!("axis {k}: coefficients must be finite and nonempty")));
                    }
                    let zk: f64 = c.iter().enumerate().map(|(j, cj)| cj / (j as f64 + 1.0)).sum();
                    let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
                    for i in 0..=POSITIVITY_GRID {
                        let v = poly_eval(c, i as f64 / POSITIVITY_GRID as f64);
                        mn = mn.min(v);
                        mx = mx.max(v);
                    }
                    if !(mn > 0.0) || !(zk > 0.0) {
                        return Err(Error::InvalidDensity(format!(
                            "axis {k}: polynomial density must be bounded below by a positive constant (min {mn:e})"
                        )));
                    }
                    // quadrature check of the closed-form normalization
                    let rule = gauss_legendre(c.len().div_ceil(2) + 1);
                    let q = integrate_gl(|s| poly_eval(c, s), 0.0, 1.0, &rule);
                    if ((q - zk) / zk).abs() > 1e-10 {
                        return Err(Error::InvalidDensity(format!("axis {k}: normalization check failed ({q} vs {zk})")));
                    }
                    let w = domain.width(k);
                    z *= zk * w;
                    lo *= mn / (zk * w);
                    hi *= mx / (zk * w);
                }
                Ok(Self { kind, domain: domain.clone(), normalization: z, bounds: (lo, hi) })
            }
            DensityKind::PiecewiseConstant { cells, values } => {
                if cells.len() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: cells.len() });
                }
                if cells.iter().any(|&c| c == 0) {
                    return Err(Error::InvalidDensity("every axis needs at least one cell".into()));
                }
                let total: usize = cells.iter().product();
                if values.len() != total {
                    return Err(Error::SizeMismatch { expected: total, found: values.len() });
                }
                if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::InvalidDensity(
                        "piecewise density must be bounded below by a positive constant on every cell".into(),
                    ));
                }
                let cell_vol = domain.volume() / total as f64;
                let z = values.iter().copied().collect::<CompensatedSum>().value() * cell_vol;
                let mut check = CompensatedSum::new();
                for v in values {
                    check.add(v / z * cell_vol);
                }
                if (check.value() - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidDensity("normalization check failed".into()));
                }
                let mn = values.iter().copied().fold(f64::INFINITY, f64::min);
                let mx = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok(Self { kind, domain: domain.clone(), normalization: z, bounds: (mn / z, mx / z) })
            }
        }
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, DensityKind::Uniform)
    }

    /// Whether the density factorizes over axes.
    pub fn is_product(&self) -> bool {
        !matches!(self.kind, DensityKind::PiecewiseConstant { .. }) || self.domain.dim() == 1
    }

    /// `(inf, sup)` of the density on the domain.
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn pdf(&self, x: &[f64]) -> f64 {
        if !self.domain.contains_closed(x) {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Uniform => 1.0 / self.normalization,
            DensityKind::ProductPolynomial { coefficients } => {
                let mut v = 1.0;
                for (k, c) in coefficients.iter().enumerate() {
                    v *= poly_eval(c, self.normalized(k, x[k]));
                }
                v / self.normalization
            }
            DensityKind::PiecewiseConstant { cells, values } => values[self.cell_index(cells, x)] / self.normalization,
        }
    }

    fn normalized(&self, axis: usize, t: f64) -> f64 {
        ((t - self.domain.lower[axis]) / self.domain.width(axis)).clamp(0.0, 1.0)
    }

    fn cell_index(&self, cells: &[usize], x: &[f64]) -> usize {
        let mut idx = 0;
        for (k, &nc) in cells.iter().enumerate() {
            let s = self.normalized(k, x[k]);
            let c = ((s * nc as f64) as usize).min(nc - 1);
            idx = idx * nc + c;
        }
        idx
    }

    /// Marginal CDF along one axis. Only defined for product densities.
    pub fn marginal_cdf(&self, axis: usize, t: f64) -> Result<f64> {
        let s = self.normalized(axis, t);
        match &self.kind {
            DensityKind::Uniform => Ok(s),
            DensityKind::ProductPolynomial { coefficients } => Ok(poly_cdf(&coefficients[axis], s)),
            DensityKind::PiecewiseConstant { values, .. } if self.domain.dim() == 1 => {
                let nc = values.len();
                let total: f64 = values.iter().sum();
                let pos = s * nc as f64;
                let c = (pos as usize).min(nc - 1);
                let before: f64 = values[..c].iter().sum();
                Ok(((before + values[c] * (pos - c as f64)) / total).clamp(0.0, 1.0))
            }
            DensityKind::PiecewiseConstant { .. } => {
                Err(Error::InvalidDensity("marginal CDF requires a product density".into()))
            }
        }
    }

    /// Inverse of [`marginal_cdf`](Self::marginal_cdf).
    pub fn marginal_quantile(&self, axis: usize, u: f64) -> Result<f64> {
        let lo = self.domain.lower[axis];
        let w = self.domain.width(axis);
        let u = u.clamp(0.0, 1.0);
        let s = match &self.kind {
            DensityKind::Uniform => u,
            DensityKind::ProductPolynomial { coefficients } => poly_quantile(&coefficients[axis], u),
            DensityKind::PiecewiseConstant { values, .. } if self.domain.dim() == 1 => {
                let nc = values.len() as f64;
                let total: f64 = values.iter().sum();
                let target = u * total;
                let mut acc = 0.0;
                let mut s = 1.0;
                for (c, v) in values.iter().enumerate() {
                    if acc + v >= target {
                        s = (c as f64 + (target - acc) / v) / nc;
                        break;
                    }
                    acc += v;
                }
                s.clamp(0.0, 1.0)
            }
            DensityKind::PiecewiseConstant { .. } => {
                return Err(Error::InvalidDensity("marginal quantile requires a product density".into()))
            }
        };
        Ok(lo + w * s)
    }

    /// Expected acceptance rate of uniform-proposal rejection sampling.
    pub fn acceptance_rate(&self) -> f64 {
        let (_, hi) = self.bounds;
        1.0 / (hi * self.domain.volume())
    }
}

fn poly_eval(c: &[f64], s: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &cj| acc * s + cj)
}

fn poly_cdf(c: &[f64], s: f64) -> f64 {
    let z: f64 = c.iter().enumerate().map(|(j, cj)| cj / (j as f64 + 1.0)).sum();
    let raw = c.iter().enumerate().rev().fold(0.0, |acc, (j, &cj)| acc * s + cj / (j as f64 + 1.0)) * s;
    (raw / z).clamp(0.0, 1.0)
}

fn poly_quantile(c: &[f64], u: f64) -> f64 {
    // CDF is strictly increasing on [0,1]: safeguarded Newton on a bisection bracket.
    let z: f64 = c.iter().enumerate().map(|(j, cj)| cj / (j as f64 + 1.0)).sum();
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut s = u;
    for _ in 0..200 {
        let f = poly_cdf(c, s) - u;
        if f.abs() <= 1e-16 {
            break;
        }
        if f > 0.0 {
            b = s;
        } else {
            a = s;
        }
        let d = poly_eval(c, s) / z;
        let mut next = s - f / d;
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - s).abs() < 1e-17 || b - a < 1e-16 {
            s = next;
            break;
        }
        s = next;
    }
    s
}

/// Points sampled from a density, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    domain: BoxDomain,
    density: Option<DensitySpec>,
    seed: Option<u64>,
}

/// Sidecar record written next to a cloud CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMetadata {
    pub n: usize,
    pub dim: usize,
    pub seed: Option<u64>,
    pub domain: BoxDomain,
    pub density: Option<DensitySpec>,
}

impl PointCloud {
    /// Wraps explicit coordinates; every point must lie strictly inside the domain.
    pub fn from_points(domain: &BoxDomain, points: &[Vec<f64>]) -> Result<Self> {
        let d = domain.dim();
        let mut coords = Vec::with_capacity(points.len() * d);
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: p.len() });
            }
            if !domain.contains_strict(p) {
                return Err(Error::InvalidArgument(format!("point {i} lies outside the open domain")));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim: d, coords, domain: domain.clone(), density: None, seed: None })
    }

    pub fn n(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn density(&self) -> Option<&DensitySpec> {
        self.density.as_ref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Projects each point with a linear feature map onto a 1-D cloud. The
    /// new domain is the image of the box.
    pub fn project_linear(&self, direction: &[f64]) -> Result<PointCloud> {
        if direction.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: direction.len() });
        }
        let (mut lo, mut hi) = (0.0, 0.0);
        for (k, w) in direction.iter().enumerate() {
            let a = w * self.domain.lower[k];
            let b = w * self.domain.upper[k];
            lo += a.min(b);
            hi += a.max(b);
        }
        let domain = BoxDomain::new(vec![lo], vec![hi])?;
        let coords = self.points().map(|p| p.iter().zip(direction).map(|(x, w)| x * w).sum()).collect();
        Ok(PointCloud { dim: 1, coords, domain, density: None, seed: self.seed })
    }

    pub fn metadata(&self) -> CloudMetadata {
        CloudMetadata {
            n: self.n(),
            dim: self.dim,
            seed: self.seed,
            domain: self.domain.clone(),
            density: self.density.clone(),
        }
    }

    /// Writes `x0,...,x{d-1}` CSV with shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record((0..self.dim).map(|k| format!("x{k}")))?;
        for p in self.points() {
            wtr.write_record(p.iter().map(|v| v.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, domain: &BoxDomain) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let d = domain.dim();
        let expected: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
        if headers.iter().collect::<Vec<_>>() != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Parse(format!("expected header {}", expected.join(","))));
        }
        let mut pts = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let p: std::result::Result<Vec<f64>, _> = rec.iter().map(|s| s.trim().parse::<f64>()).collect();
            pts.push(p.map_err(|e| Error::Parse(format!("row {}: {e}", line + 2)))?);
        }
        Self::from_points(domain, &pts)
    }
}

/// Draws `n` i.i.d. points. Product densities use per-axis inverse CDFs;
/// piecewise-constant densities use rejection from the uniform proposal.
pub fn sample_points(density: &DensitySpec, domain: &BoxDomain, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if density.domain() != domain {
        return Err(Error::InvalidDensity("density was built for a different domain".into()));
    }
    let d = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * d);
    let open_unit = |rng: &mut ChaCha8Rng| loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            return u;
        }
    };
    if density.is_product() {
        let mut p = vec![0.0; d];
        for _ in 0..n {
            loop {
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = density.marginal_quantile(k, open_unit(&mut rng))?;
                }
                if domain.contains_strict(&p) {
                    break;
                }
            }
            coords.extend_from_slice(&p);
        }
    } else {
        let rate = density.acceptance_rate();
        if rate < 1e-3 {
            return Err(Error::Sampling(format!("rejection acceptance rate {rate:e} is below 1e-3")));
        }
        let hi = density.bounds().1;
        let mut p = vec![0.0; d];
        for _ in 0..n {
            loop {
                for (k, pk) in p.iter_mut().enumerate() {
                    *pk = domain.lower[k] + domain.width(k) * open_unit(&mut rng);
                }
                if !domain.contains_strict(&p) {
                    continue;
                }
                let accept: f64 = rng.gen();
                if accept * hi < density.pdf(&p) {
                    break;
                }
            }
            coords.extend_from_slice(&p);
        }
    }
    Ok(PointCloud { dim: d, coords, domain: domain.clone(), density: Some(density.clone()), seed: Some(seed) })
}

/// How the bandwidth shrinks with the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EpsilonRule {
    /// `values[n-1]` is used for sample size `n`; the last entry is reused past the end.
    Explicit { values: Vec<f64> },
    /// `eps_n = c * n^(-beta)`.
    Power { c: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub dim: usize,
    pub rule: EpsilonRule,
}

impl EpsilonSchedule {
    pub fn new(dim: usize, rule: EpsilonRule) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        match &rule {
            EpsilonRule::Explicit { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidArgument("explicit schedule needs positive finite values".into()));
                }
            }
            EpsilonRule::Power { c, beta } => {
                if !(*c > 0.0 && *beta > 0.0) {
                    return Err(Error::InvalidArgument("power schedule needs c > 0 and beta > 0".into()));
                }
            }
        }
        Ok(Self { dim, rule })
    }

    pub fn epsilon(&self, n: usize) -> f64 {
        match &self.rule {
            EpsilonRule::Explicit { values } => values[n.max(1).min(values.len()) - 1],
            EpsilonRule::Power { c, beta } => c * (n as f64).powf(-beta),
        }
    }
}

/// Connectivity rate `f_d(n)` that `1/eps_n` must be little-o of.
pub fn connectivity_rate(d: usize, n: usize) -> Option<f64> {
    let nf = n as f64;
    let ln = nf.ln();
    match d {
        1 => {
            let lln = ln.ln();
            (lln > 0.0).then(|| (nf / lln).sqrt())
        }
        2 => (ln > 0.0).then(|| nf.sqrt() / ln.powf(1.5)),
        _ => (ln > 0.0).then(|| (nf / ln).powf(1.0 / d as f64)),
    }
}

/// Returns `eps_n` and an advisory admissibility flag. For power rules the
/// flag is the asymptotic test `beta < 1/2` (d <= 2) or `beta < 1/d` (d >= 3),
/// where the log factors make equality inadmissible. Explicit lists have no
/// asymptotics, so the flag is the finite-sample proxy `1/eps_n < f_d(n)`.
pub fn admissible_epsilon(n: usize, schedule: &EpsilonSchedule) -> (f64, bool) {
    let eps = schedule.epsilon(n);
    let d = schedule.dim;
    let admissible = match &schedule.rule {
        EpsilonRule::Power { beta, .. } => {
            let limit = if d <= 2 { 0.5 } else { 1.0 / d as f64 };
            *beta < limit
        }
        EpsilonRule::Explicit { .. } => connectivity_rate(d, n).is_some_and(|f| 1.0 / eps < f),
    };
    (eps, admissible)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic() {
        let dom = BoxDomain::unit(2);
        let rho = DensitySpec::uniform(&dom);
        let a = sample_points(&rho, &dom, 4, 7).unwrap();
        let b = sample_points(&rho, &dom, 4, 7).unwrap();
        assert_eq!(a.coords(), b.coords());
        assert!(a.points().all(|p| dom.contains_strict(p)));
        let c = sample_points(&rho, &dom, 4, 8).unwrap();
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn uniform_mean_is_near_half() {
        // sd of the mean is sqrt(1/12 / 1e5) ~ 9.1e-4, so 0.005 is > 5 sd
        let dom = BoxDomain::unit(1);
        let rho = DensitySpec::uniform(&dom);
        let c = sample_points(&rho, &dom, 100_000, 1).unwrap();
        let mean = c.coords().iter().sum::<f64>() / c.n() as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn piecewise_density_with_zero_cell_is_rejected() {
        let dom = BoxDomain::unit(1);
        let kind = DensityKind::PiecewiseConstant { cells: vec![2], values: vec![2.0, 0.0] };
        assert!(matches!(DensitySpec::new(kind, &dom), Err(Error::InvalidDensity(_))));
    }

    #[test]
    fn polynomial_density_normalizes_and_inverts() {
        let dom = BoxDomain::new(vec![-1.0], vec![3.0]).unwrap();
        let kind = DensityKind::ProductPolynomial { coefficients: vec![vec![1.0, 2.0, 0.5]] };
        let rho = DensitySpec::new(kind, &dom).unwrap();
        let rule = gauss_legendre(8);
        let mass = integrate_gl(|t| rho.pdf(&[t]), -1.0, 3.0, &rule);
        assert!((mass - 1.0).abs() < 1e-12);
        for u in [0.01, 0.3, 0.5, 0.77, 0.999] {
            let t = rho.marginal_quantile(0, u).unwrap();
            assert!((rho.marginal_cdf(0, t).unwrap() - u).abs() < 1e-13);
        }
    }

    #[test]
    fn polynomial_density_with_root_is_rejected() {
        let dom = BoxDomain::unit(1);
        // (s - 1/2)^2 vanishes at the midpoint
        let kind = DensityKind::ProductPolynomial { coefficients: vec![vec![0.25, -1.0, 1.0]] };
        assert!(DensitySpec::new(kind, &dom).is_err());
    }

    #[test]
    fn piecewise_rejection_sampling_is_inside_and_deterministic() {
        let dom = BoxDomain::unit(2);
        let kind = DensityKind::PiecewiseConstant { cells: vec![2, 2], values: vec![1.0, 2.0, 3.0, 4.0] };
        let rho = DensitySpec::new(kind, &dom).unwrap();
        let a = sample_points(&rho, &dom, 2000, 3).unwrap();
        let b = sample_points(&rho, &dom, 2000, 3).unwrap();
        assert_eq!(a.coords(), b.coords());
        // cell (1,1) carries mass 4/10
        let frac = a.points().filter(|p| p[0] > 0.5 && p[1] > 0.5).count() as f64 / 2000.0;
        assert!((frac - 0.4).abs() < 0.04, "{frac}");
    }

    #[test]
    fn low_acceptance_rate_aborts() {
        let dom = BoxDomain::unit(2);
        let mut values = vec![1.0; 5000];
        values[0] = 1e4;
        let kind = DensityKind::PiecewiseConstant { cells: vec![100, 50], values };
        let rho = DensitySpec::new(kind, &dom).unwrap();
        assert!(matches!(sample_points(&rho, &dom, 10, 1), Err(Error::Sampling(_))));
    }

    #[test]
    fn epsilon_schedule_examples() {
        let s = EpsilonSchedule::new(2, EpsilonRule::Power { c: 1.0, beta: 0.25 }).unwrap();
        let (eps, ok) = admissible_epsilon(10_000, &s);
        assert!((eps - 0.1).abs() < 1e-15);
        assert!(ok);
        let s = EpsilonSchedule::new(3, EpsilonRule::Power { c: 1.0, beta: 0.5 }).unwrap();
        assert!(!admissible_epsilon(10_000, &s).1);
        let s = EpsilonSchedule::new(2, EpsilonRule::Explicit { values: vec![0.2, 0.1] }).unwrap();
        assert_eq!(admissible_epsilon(1, &s).0, 0.2);
        assert_eq!(admissible_epsilon(5, &s).0, 0.1);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dom = BoxDomain::unit(3);
        let rho = DensitySpec::uniform(&dom);
        let c = sample_points(&rho, &dom, 50, 11).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x0,x1,x2\n"));
        let back = PointCloud::read_csv(&buf[..], &dom).unwrap();
        assert_eq!(back.coords(), c.coords());
    }

    #[test]
    fn density_serde_revalidates() {
        let dom = BoxDomain::unit(1);
        let rho = DensitySpec::new(DensityKind::ProductPolynomial { coefficients: vec![vec![1.0, 1.0]] }, &dom).unwrap();
        let s = serde_json::to_string(&rho).unwrap();
        let back: DensitySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, rho);
        let bad = r#"{"kind":{"kind":"piecewise-constant","cells":[2],"values":[1.0,0.0]},"domain":{"lower":[0.0],"upper":[1.0]}}"#;
        assert!(serde_json::from_str::<DensitySpec>(bad).is_err());
    }
}
