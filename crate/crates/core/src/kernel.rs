//! Interaction potentials `eta = phi(pi(x))`, their rescaling
//! `eta_eps(x) = eps^-d eta(x/eps)`, and a sampled admissibility check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radial profile `phi: [0, inf) -> [0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelProfile {
    /// `1_{[0, M]}`, or `1_{[0, M)}` when `right_open`.
    Indicator {
        #[serde(default = "one")]
        support: f64,
        #[serde(default)]
        right_open: bool,
    },
    /// `max(0, 1 - t/M)`.
    Hat {
        #[serde(default = "one")]
        support: f64,
    },
    /// `exp(-t^2) 1_{t <= M}`.
    TruncGaussian { support: f64 },
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl KernelProfile {
    pub fn indicator() -> Self {
        KernelProfile::Indicator { support: 1.0, right_open: false }
    }

    pub fn hat() -> Self {
        KernelProfile::Hat { support: 1.0 }
    }

    pub fn support(&self) -> f64 {
        match *self {
            KernelProfile::Indicator { support, .. }
            | KernelProfile::Hat { support }
            | KernelProfile::TruncGaussian { support } => support,
        }
    }

    /// Evaluates at `|t|`, i.e. the even extension.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.abs();
        match *self {
            KernelProfile::Indicator { support, right_open } => {
                if t < support || (!right_open && t == support) {
                    1.0
                } else {
                    0.0
                }
            }
            KernelProfile::Hat { support } => (1.0 - t / support).max(0.0),
            KernelProfile::TruncGaussian { support } => {
                if t <= support {
                    (-t * t).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.support();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::InvalidKernel(format!("profile support must be positive and finite, got {m}")));
        }
        Ok(())
    }

    /// Checks `phi` is nonincreasing on a uniform grid over `[0, 1.5 M]`.
    pub fn is_monotone_on_grid(&self, points: usize) -> bool {
        let m = 1.5 * self.support();
        let mut prev = self.eval(0.0);
        (1..=points).all(|i| {
            let v = self.eval(m * i as f64 / points as f64);
            let ok = v <= prev;
            prev = v;
            ok
        })
    }

    /// `int_0^M phi(s) s^k ds`, closed form where available.
    pub fn radial_moment(&self, k: u32) -> f64 {
        let m = self.support();
        let kf = k as f64;
        match self {
            KernelProfile::Indicator { .. } => m.powf(kf + 1.0) / (kf + 1.0),
            KernelProfile::Hat { .. } => m.powf(kf + 1.0) / ((kf + 1.0) * (kf + 2.0)),
            KernelProfile::TruncGaussian { .. } => {
                let rule = crate::numeric::gauss_legendre(64);
                crate::numeric::integrate_composite(|s| (-s * s).exp() * s.powi(k as i32), 0.0, m, 16, &rule)
            }
        }
    }
}

/// Convex body `E` containing the origin, used through `pi = 1_{E^c}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConvexBody {
    Ball { center: Vec<f64>, radius: f64 },
    /// Axis-aligned ellipsoid.
    Ellipsoid { center: Vec<f64>, semi_axes: Vec<f64> },
}

impl ConvexBody {
    fn center(&self) -> &[f64] {
        match self {
            ConvexBody::Ball { center, .. } | ConvexBody::Ellipsoid { center, .. } => center,
        }
    }

    fn axis(&self, k: usize) -> f64 {
        match self {
            ConvexBody::Ball { radius, .. } => *radius,
            ConvexBody::Ellipsoid { semi_axes, .. } => semi_axes[k],
        }
    }

    pub fn dim(&self) -> usize {
        self.center().len()
    }

    /// Open membership.
    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        let c = self.center();
        let mut s = 0.0;
        for k in 0..c.len() {
            let t = (x[k] - c[k]) / self.axis(k);
            s += t * t;
        }
        s < 1.0
    }

    fn scaled_center_norm(&self) -> f64 {
        let c = self.center();
        (0..c.len()).map(|k| (c[k] / self.axis(k)).powi(2)).sum::<f64>().sqrt()
    }

    /// Lower bound on the radius of a ball about 0 inside `E`.
    pub fn inner_radius(&self) -> f64 {
        let amin = (0..self.dim()).map(|k| self.axis(k)).fold(f64::INFINITY, f64::min);
        (1.0 - self.scaled_center_norm()) * amin
    }

    /// Upper bound on `sup_{x in E} |x|`.
    pub fn outer_radius(&self) -> f64 {
        let amax = (0..self.dim()).map(|k| self.axis(k)).fold(0.0, f64::max);
        let c = self.center();
        c.iter().map(|v| v * v).sum::<f64>().sqrt() + amax
    }

    /// Distance from the origin to the boundary along a unit direction `u`.
    pub fn radial(&self, u: &[f64]) -> f64 {
        // ||(r u - c)/a||^2 = 1, positive root
        let c = self.center();
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, -1.0);
        for k in 0..c.len() {
            let a = self.axis(k);
            let uk = u[k] / a;
            let ck = c[k] / a;
            qa += uk * uk;
            qb -= 2.0 * uk * ck;
            qc += ck * ck;
        }
        let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
        (-qb + disc.sqrt()) / (2.0 * qa)
    }

    pub fn is_centered(&self) -> bool {
        self.center().iter().all(|&v| v == 0.0)
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidKernel("convex body needs a dimension".into()));
        }
        if let ConvexBody::Ellipsoid { semi_axes, .. } = self {
            if semi_axes.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: semi_axes.len() });
            }
        }
        for k in 0..d {
            let a = self.axis(k);
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidKernel("convex body axes must be positive".into()));
            }
        }
        if self.center().iter().any(|v| !v.is_finite()) || self.inner_radius() <= 0.0 {
            return Err(Error::InvalidKernel("convex body must contain the origin in its interior".into()));
        }
        Ok(())
    }
}

/// Feature projection `pi: R^d -> R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureProjection {
    /// `sqrt(sum w_i x_i^2)`.
    WeightedEuclidean { weights: Vec<f64> },
    /// `sqrt(sum w_ij |x_i| |x_j|)` for a symmetric PSD matrix.
    QuadraticForm { matrix: Vec<Vec<f64>> },
    /// `1_{E^c}(x)`.
    ConvexIndicator { body: ConvexBody },
    /// `w . x`; the profile sees `|w . x|`.
    Linear { direction: Vec<f64> },
}

impl FeatureProjection {
    pub fn euclidean(d: usize) -> Self {
        FeatureProjection::WeightedEuclidean { weights: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureProjection::WeightedEuclidean { weights } => weights.len(),
            FeatureProjection::QuadraticForm { matrix } => matrix.len(),
            FeatureProjection::ConvexIndicator { body } => body.dim(),
            FeatureProjection::Linear { direction } => direction.len(),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            FeatureProjection::WeightedEuclidean { weights } => {
                let mut s = 0.0;
                for (w, v) in weights.iter().zip(x) {
                    s += w * v * v;
                }
                s.sqrt()
            }
            FeatureProjection::QuadraticForm { matrix } => {
                let mut s = 0.0;
                for (i, row) in matrix.iter().enumerate() {
                    let xi = x[i].abs();
                    for (j, w) in row.iter().enumerate() {
                        s += w * xi * x[j].abs();
                    }
                }
                s.max(0.0).sqrt()
            }
            FeatureProjection::ConvexIndicator { body } => {
                if body.contains(x) {
                    0.0
                } else {
                    1.0
                }
            }
            FeatureProjection::Linear { direction } => direction.iter().zip(x).map(|(w, v)| w * v).sum(),
        }
    }

    /// Whether `pi(x) = pi(-x)` holds identically (up to the profile's `|.|`).
    pub fn is_even(&self) -> bool {
        match self {
            FeatureProjection::ConvexIndicator { body } => body.is_centered(),
            _ => true,
        }
    }

    /// `pi(r u) = r pi(u)` for `r >= 0`.
    pub fn is_homogeneous(&self) -> bool {
        matches!(self, FeatureProjection::WeightedEuclidean { .. } | FeatureProjection::QuadraticForm { .. })
    }

    fn validate(&self) -> Result<()> {
        match self {
            FeatureProjection::WeightedEuclidean { weights } => {
                if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::InvalidKernel("weights must be finite and nonnegative".into()));
                }
                if weights.iter().all(|w| *w == 0.0) {
                    return Err(Error::InvalidKernel("weights must not all be zero".into()));
                }
            }
            FeatureProjection::QuadraticForm { matrix } => {
                let d = matrix.len();
                if d == 0 || matrix.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidKernel("quadratic form needs a square matrix".into()));
                }
                let scale = matrix.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
                for i in 0..d {
                    for j in 0..d {
                        if !matrix[i][j].is_finite() || (matrix[i][j] - matrix[j][i]).abs() > 1e-12 * scale {
                            return Err(Error::InvalidKernel("quadratic form matrix must be symmetric".into()));
                        }
                    }
                }
                let m = nalgebra::DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
                let min_eig = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
                if min_eig < -1e-12 * scale.max(1.0) {
                    return Err(Error::InvalidKernel(format!("quadratic form is not positive semidefinite (eigenvalue {min_eig:e})")));
                }
            }
            FeatureProjection::ConvexIndicator { body } => body.validate()?,
            FeatureProjection::Linear { direction } => {
                if direction.is_empty() || direction.iter().any(|w| !w.is_finite()) || direction.iter().all(|w| *w == 0.0) {
                    return Err(Error::InvalidKernel("linear direction must be finite and nonzero".into()));
                }
            }
        }
        Ok(())
    }
}

/// `min_{u >= 0, |u| = 1} u^T W u`, the smallest value of `pi^2` on the unit
/// sphere. Stationary points restricted to a support set are eigenvectors of
/// the principal submatrix, so enumerating supports finds the minimum.
fn copositive_minimum(matrix: &[Vec<f64>]) -> f64 {
    let d = matrix.len();
    assert!(d <= 16, "support enumeration is limited to d <= 16");
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << d) {
        let idx: Vec<usize> = (0..d).filter(|k| mask & (1 << k) != 0).collect();
        let s = idx.len();
        let sub = nalgebra::DMatrix::from_fn(s, s, |i, j| matrix[idx[i]][idx[j]]);
        let eig = sub.symmetric_eigen();
        for (c, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(c);
            let pos = v.iter().all(|&t| t >= -1e-12);
            let neg = v.iter().all(|&t| t <= 1e-12);
            // a repeated eigenvalue may hide a nonnegative vector in its eigenspace;
            // counting it can only lower the minimum, which keeps the radius safe
            let repeated = eig.eigenvalues.iter().enumerate().any(|(o, &mu)| o != c && (mu - lam).abs() <= 1e-10 * lam.abs().max(1.0));
            if pos || neg || repeated {
                best = best.min(lam);
            }
        }
    }
    best
}

/// `eta = phi o pi`, optionally replaced by its even part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionKernel {
    pub projection: FeatureProjection,
    pub profile: KernelProfile,
    #[serde(default = "yes")]
    pub symmetrize: bool,
}

impl InteractionKernel {
    pub fn new(projection: FeatureProjection, profile: KernelProfile, symmetrize: bool) -> Result<Self> {
        let k = Self { projection, profile, symmetrize };
        k.validate()?;
        Ok(k)
    }

    /// `eta = 1_{B(0,1)}` in dimension `d`.
    pub fn unit_ball(d: usize) -> Self {
        Self { projection: FeatureProjection::euclidean(d), profile: KernelProfile::indicator(), symmetrize: true }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.projection.validate()?;
        if !(self.eta(&vec![0.0; self.dim()]) > 0.0) {
            return Err(Error::InvalidKernel("eta(0) must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.projection.dim()
    }

    /// The unscaled potential `eta(x)`.
    #[inline]
    pub fn eta(&self, x: &[f64]) -> f64 {
        let a = self.profile.eval(self.projection.eval(x));
        if !self.symmetrize || self.projection.is_even() {
            return a;
        }
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        0.5 * (a + self.profile.eval(self.projection.eval(&neg)))
    }

    /// `R_eta` with `eta(x) = 0` for `|x| > R_eta`.
    pub fn support_radius(&self) -> Result<f64> {
        let m = self.profile.support();
        match &self.projection {
            FeatureProjection::WeightedEuclidean { weights } => {
                let wmin = weights.iter().copied().fold(f64::INFINITY, f64::min);
                if wmin > 0.0 {
                    Ok(m / wmin.sqrt())
                } else {
                    Err(Error::UnboundedKernel("a zero weight leaves eta constant along that axis".into()))
                }
            }
            FeatureProjection::QuadraticForm { matrix } => {
                let q = copositive_minimum(matrix);
                if q > 1e-14 {
                    Ok(m / q.sqrt())
                } else {
                    Err(Error::UnboundedKernel("quadratic form vanishes on a nonnegative direction".into()))
                }
            }
            FeatureProjection::ConvexIndicator { body } => {
                if self.profile.eval(1.0) == 0.0 {
                    Ok(body.outer_radius())
                } else {
                    Err(Error::UnboundedKernel("phi(1) > 0 makes eta positive outside the body".into()))
                }
            }
            FeatureProjection::Linear { direction } => {
                if direction.len() == 1 {
                    Ok(m / direction[0].abs())
                } else {
                    Err(Error::UnboundedKernel("the support of eta is not compact for a linear projection in d >= 2".into()))
                }
            }
        }
    }

    /// Radius of a ball about zero on which `eta` is known to stay positive
    /// (used to scale the admissibility search).
    fn inner_scale(&self) -> f64 {
        let m = self.profile.support();
        match &self.projection {
            FeatureProjection::WeightedEuclidean { weights } => {
                m / weights.iter().copied().fold(0.0, f64::max).sqrt()
            }
            FeatureProjection::QuadraticForm { matrix } => {
                let s: f64 = matrix.iter().flatten().map(|v| v.abs()).sum();
                m / s.sqrt()
            }
            FeatureProjection::ConvexIndicator { body } => body.inner_radius(),
            FeatureProjection::Linear { direction } => {
                m / direction.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        }
    }
}

/// `eps^-d eta(x / eps)`; zero outside the support.
#[inline]
pub fn eval_kernel(k: &InteractionKernel, x: &[f64], eps: f64, d: usize) -> f64 {
    debug_assert_eq!(x.len(), d);
    debug_assert!(eps > 0.0);
    let mut buf = [0.0f64; 8];
    let scale = eps.powi(-(d as i32));
    if d <= buf.len() {
        for (b, v) in buf.iter_mut().zip(x) {
            *b = v / eps;
        }
        scale * k.eta(&buf[..d])
    } else {
        let y: Vec<f64> = x.iter().map(|v| v / eps).collect();
        scale * k.eta(&y)
    }
}

/// Support radius, exposed as a free function for symmetry with `eval_kernel`.
pub fn support_radius(k: &InteractionKernel) -> Result<f64> {
    k.support_radius()
}

/// Best constants found for one `delta` in the scaling condition
/// `|x - y| < delta => eta(y) >= c eta(alpha x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCheck {
    pub delta: f64,
    pub c: f64,
    pub alpha: f64,
    /// Pairs for which `eta(alpha x) > 0`, i.e. that constrained `c`.
    pub active_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub compact_support: bool,
    pub support_radius: Option<f64>,
    pub eta_at_zero: f64,
    pub eta_zero_positive: bool,
    pub profile_monotone: bool,
    /// One entry per tested `delta`; empty when the support is unbounded.
    pub scaling: Vec<ScalingCheck>,
    /// Whether `c` and `alpha` approach 1 along the tested grid. This is a
    /// finite-grid statement; the condition quantifies over all `delta`.
    pub scaling_trends_to_one: Option<bool>,
    pub delta_grid: Vec<f64>,
    pub sample_count: usize,
    pub seed: u64,
    pub pass: bool,
    pub notes: Vec<String>,
}

const ALPHA_STEPS: usize = 32;

/// Report-only check of the kernel conditions on `eta`: compact support,
/// `eta(0) > 0`, and a sampled search for the scaling constants.
pub fn check_admissibility(k: &InteractionKernel, delta_grid: &[f64], sample_count: usize, seed: u64) -> AdmissibilityReport {
    let d = k.dim();
    let mut notes = Vec::new();
    let eta0 = k.eta(&vec![0.0; d]);
    let radius = k.support_radius();
    if let Err(e) = &radius {
        notes.push(e.to_string());
    }
    let profile_monotone = k.profile.is_monotone_on_grid(10_000);
    if !profile_monotone {
        notes.push("profile is not monotone on the sample grid".into());
    }
    let grid_ok = !delta_grid.is_empty()
        && delta_grid.iter().all(|v| *v > 0.0)
        && delta_grid.windows(2).all(|w| w[1] < w[0]);
    if !grid_ok {
        notes.push("delta grid must be nonempty, positive and decreasing".into());
    }

    let mut scaling = Vec::new();
    let mut trend = None;
    if let (Ok(r), true) = (&radius, grid_ok) {
        let r_in = k.inner_scale();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        let mut ax = vec![0.0; d];
        for &delta in delta_grid {
            // draw pairs once per delta, then search alpha on a grid
            let mut pairs = Vec::with_capacity(sample_count);
            for _ in 0..sample_count {
                sample_ball(&mut rng, *r, &mut x);
                sample_ball(&mut rng, delta, &mut y);
                for i in 0..d {
                    y[i] += x[i];
                }
                pairs.push((x.clone(), k.eta(&y)));
            }
            let mut best: Option<ScalingCheck> = None;
            for j in 0..=ALPHA_STEPS {
                let alpha = 1.0 + 8.0 * delta / r_in * j as f64 / ALPHA_STEPS as f64;
                let mut c = 1.0f64;
                let mut active = 0;
                for (xp, ey) in &pairs {
                    for i in 0..d {
                        ax[i] = alpha * xp[i];
                    }
                    let ea = k.eta(&ax);
                    if ea > 0.0 {
                        active += 1;
                        c = c.min(ey / ea);
                    }
                }
                let cand = ScalingCheck { delta, c, alpha, active_pairs: active };
                let score = |s: &ScalingCheck| (1.0 - s.c).abs().max(s.alpha - 1.0);
                if best.as_ref().map_or(true, |b| score(&cand) < score(b)) {
                    best = Some(cand);
                }
            }
            scaling.push(best.expect("alpha grid is nonempty"));
        }
        let dist: Vec<f64> = scaling.iter().map(|s| (1.0 - s.c).abs().max(s.alpha - 1.0)).collect();
        let positive = scaling.iter().all(|s| s.c > 0.0);
        let shrinking = dist.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let small = dist.last().copied().unwrap_or(f64::INFINITY) <= 8.0 * delta_grid.last().copied().unwrap_or(0.0) / r_in + 1e-12;
        if !positive {
            notes.push("found no positive c for some delta".into());
        }
        trend = Some(positive && shrinking && small);
    }

    let compact = radius.is_ok();
    let pass = compact && eta0 > 0.0 && trend == Some(true);
    AdmissibilityReport {
        compact_support: compact,
        support_radius: radius.ok(),
        eta_at_zero: eta0,
        eta_zero_positive: eta0 > 0.0,
        profile_monotone,
        scaling,
        scaling_trends_to_one: trend,
        delta_grid: delta_grid.to_vec(),
        sample_count,
        seed,
        pass,
        notes,
    }
}

/// Uniform sample from `B(0, r)` written into `out`.
pub(crate) fn sample_ball<R: Rng>(rng: &mut R, r: f64, out: &mut [f64]) {
    let d = out.len();
    let mut norm2 = 0.0;
    while norm2 == 0.0 {
        norm2 = 0.0;
        for v in out.iter_mut() {
            *v = StandardNormal.sample(rng);
            norm2 += *v * *v;
        }
    }
    let u: f64 = rng.gen();
    let scale = r * u.powf(1.0 / d as f64) / norm2.sqrt();
    for v in out.iter_mut() {
        *v *= scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn aniso(a: f64) -> InteractionKernel {
        InteractionKernel::new(
            FeatureProjection::WeightedEuclidean { weights: vec![1.0 - a, a] },
            KernelProfile::indicator(),
            true,
        )
        .unwrap()
    }

    #[test]
    fn eval_examples() {
        let k = InteractionKernel::unit_ball(2);
        assert_eq!(eval_kernel(&k, &[0.0, 0.0], 0.5, 2), 4.0);
        assert_eq!(eval_kernel(&k, &[0.6, 0.0], 0.5, 2), 0.0);
        let k = InteractionKernel::new(FeatureProjection::WeightedEuclidean { weights: vec![0.0, 1.0] }, KernelProfile::indicator(), true).unwrap();
        assert_eq!(eval_kernel(&k, &[5.0, 0.3], 1.0, 2), 1.0);
        assert!(k.support_radius().is_err());
    }

    #[test]
    fn support_radius_examples() {
        assert_eq!(InteractionKernel::unit_ball(2).support_radius().unwrap(), 1.0);
        let k = InteractionKernel::new(FeatureProjection::WeightedEuclidean { weights: vec![4.0, 1.0] }, KernelProfile::indicator(), true).unwrap();
        assert_eq!(k.support_radius().unwrap(), 1.0);
        let lin = InteractionKernel::new(FeatureProjection::Linear { direction: vec![1.0, 0.0] }, KernelProfile::indicator(), true).unwrap();
        assert!(matches!(lin.support_radius(), Err(Error::UnboundedKernel(_))));
    }

    #[test]
    fn quadratic_form_radius_bounds_support() {
        let q = vec![vec![2.0, -0.5], vec![-0.5, 1.0]];
        let k = InteractionKernel::new(FeatureProjection::QuadraticForm { matrix: q }, KernelProfile::indicator(), true).unwrap();
        let r = k.support_radius().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut max_in = 0.0f64;
        for _ in 0..20_000 {
            let th: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let u = [th.cos(), th.sin()];
            // pi(u)^2 on the unit circle; support reaches 1/pi(u)
            let p = k.projection.eval(&u);
            max_in = max_in.max(1.0 / p);
        }
        assert!(max_in <= r * (1.0 + 1e-9) && max_in > 0.99 * r, "{max_in} vs {r}");
    }

    #[test]
    fn non_psd_quadratic_form_is_rejected() {
        let q = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(InteractionKernel::new(FeatureProjection::QuadraticForm { matrix: q }, KernelProfile::indicator(), true).is_err());
    }

    #[test]
    fn symmetrized_kernel_is_even() {
        let body = ConvexBody::Ellipsoid { center: vec![0.2, -0.1], semi_axes: vec![0.8, 0.5] };
        let k = InteractionKernel::new(
            FeatureProjection::ConvexIndicator { body },
            KernelProfile::Indicator { support: 1.0, right_open: true },
            true,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            assert_eq!(k.eta(&x), k.eta(&[-x[0], -x[1]]));
        }
    }

    #[test]
    fn scaling_identity_and_support() {
        let k = aniso(0.3);
        let r = k.support_radius().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let eps = rng.gen_range(0.05..0.4);
            let v = eval_kernel(&k, &x, eps, 2);
            assert!(v >= 0.0);
            let y = [x[0] / eps, x[1] / eps];
            assert_eq!(v, eps.powi(-2) * eval_kernel(&k, &y, 1.0, 2));
            if (x[0] * x[0] + x[1] * x[1]).sqrt() > eps * r {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn monotone_domination() {
        // hat <= indicator pointwise
        let hat = InteractionKernel::new(FeatureProjection::euclidean(2), KernelProfile::hat(), true).unwrap();
        let ind = InteractionKernel::unit_ball(2);
        for i in 0..100 {
            for j in 0..100 {
                let x = [-1.2 + 2.4 * i as f64 / 99.0, -1.2 + 2.4 * j as f64 / 99.0];
                assert!(eval_kernel(&hat, &x, 0.7, 2) <= eval_kernel(&ind, &x, 0.7, 2));
            }
        }
    }

    #[test]
    fn admissibility_examples() {
        let hat = InteractionKernel::new(FeatureProjection::euclidean(2), KernelProfile::hat(), true).unwrap();
        let rep = check_admissibility(&hat, &[0.2, 0.1, 0.05], 4000, 9);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.scaling.last().unwrap().c > rep.scaling[0].c);

        let body = ConvexBody::Ball { center: vec![0.0, 0.0], radius: 0.8 };
        let k = InteractionKernel::new(
            FeatureProjection::ConvexIndicator { body },
            KernelProfile::Indicator { support: 1.0, right_open: true },
            true,
        )
        .unwrap();
        let rep = check_admissibility(&k, &[0.2, 0.1, 0.05], 4000, 9);
        assert!(rep.pass, "{rep:?}");

        let lin = InteractionKernel::new(FeatureProjection::Linear { direction: vec![1.0, 1.0] }, KernelProfile::indicator(), true).unwrap();
        let rep = check_admissibility(&lin, &[0.2, 0.1], 100, 1);
        assert!(!rep.compact_support && !rep.pass);
    }

    #[test]
    fn profile_moments() {
        let rule = crate::numeric::gauss_legendre(40);
        for p in [KernelProfile::indicator(), KernelProfile::Hat { support: 1.5 }, KernelProfile::TruncGaussian { support: 2.0 }] {
            for k in 0..4 {
                let m = p.support();
                let q = crate::numeric::integrate_gl(|s| p.eval(s) * s.powi(k as i32), 0.0, m, &rule);
                assert!((q - p.radial_moment(k)).abs() < 1e-12, "{p:?} {k}");
            }
        }
    }

    #[test]
    fn serde_round_trip() {
        let k = aniso(0.25);
        let s = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<InteractionKernel>(&s).unwrap(), k);
        let s = r#"{"projection":{"kind":"weighted-euclidean","weights":[1,1]},"profile":{"kind":"hat"}}"#;
        let k: InteractionKernel = serde_json::from_str(s).unwrap();
        assert!(k.symmetrize);
        assert_eq!(k.profile.support(), 1.0);
    }
}
