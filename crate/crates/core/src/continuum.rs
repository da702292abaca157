//! Continuum limit objects: the surface tension `sigma(nu)`, the weighted
//! total variation of polyhedral indicator functions, and the projected
//! one-dimensional limit energy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use crate::domain::{sample_points, BoxDomain, DensitySpec};
use crate::error::{Error, Result};
use crate::kernel::{sample_ball, FeatureProjection, InteractionKernel, KernelProfile};
use crate::numeric::{gauss_legendre, integrate_composite, unit_sphere_area, CompensatedSum};

/// Resolution of the numerical integrals in this module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    /// Gauss-Legendre nodes per panel; the error estimate halves this.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Monte-Carlo samples for `d > 3`.
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_nodes() -> usize {
    32
}

fn default_mc() -> usize {
    200_000
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { nodes: default_nodes(), mc_samples: default_mc(), seed: 0 }
    }
}

/// A value with an error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// `int_0^inf eta(r u) r^d dr` along a unit direction.
fn radial_integral(k: &InteractionKernel, u: &[f64]) -> f64 {
    let one_way = |u: &[f64]| -> f64 {
        let d = u.len() as u32;
        match &k.projection {
            FeatureProjection::ConvexIndicator { body } => {
                k.profile.eval(0.0) * body.radial(u).powi(d as i32 + 1) / (d as f64 + 1.0)
            }
            p => {
                // homogeneous: eta(r u) = phi(r |pi(u)|)
                let s = p.eval(u).abs();
                k.profile.radial_moment(d) / s.powi(d as i32 + 1)
            }
        }
    };
    let a = one_way(u);
    if k.symmetrize && !k.projection.is_even() {
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        0.5 * (a + one_way(&neg))
    } else {
        a
    }
}

fn sigma_2d(k: &InteractionKernel, nu: &[f64], nodes: usize) -> f64 {
    let th = nu[1].atan2(nu[0]);
    let mut cuts: Vec<f64> = vec![0.0, 0.5 * PI, PI, 1.5 * PI, 2.0 * PI];
    for s in [th + 0.5 * PI, th - 0.5 * PI] {
        cuts.push(s.rem_euclid(2.0 * PI));
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let rule = gauss_legendre(nodes);
    let f = |t: f64| {
        let u = [t.cos(), t.sin()];
        (u[0] * nu[0] + u[1] * nu[1]).abs() * radial_integral(k, &u)
    };
    let mut acc = CompensatedSum::new();
    for w in cuts.windows(2) {
        if w[1] > w[0] {
            acc.add(integrate_composite(f, w[0], w[1], 2, &rule));
        }
    }
    acc.value()
}

fn orthonormal_complement(nu: &[f64]) -> (Vec<f64>, Vec<f64>) {
    // Gram-Schmidt against the axis least aligned with nu
    let k = (0..3).min_by(|&a, &b| nu[a].abs().total_cmp(&nu[b].abs())).unwrap();
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let dot: f64 = (0..3).map(|i| e[i] * nu[i]).sum();
    let mut a: Vec<f64> = (0..3).map(|i| e[i] - dot * nu[i]).collect();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.iter_mut().for_each(|v| *v /= na);
    let b = vec![nu[1] * a[2] - nu[2] * a[1], nu[2] * a[0] - nu[0] * a[2], nu[0] * a[1] - nu[1] * a[0]];
    (a, b)
}

fn sigma_3d(k: &InteractionKernel, nu: &[f64], nodes: usize) -> f64 {
    let (a, b) = orthonormal_complement(nu);
    let rule = gauss_legendre(nodes);
    let nphi = 4 * nodes;
    let inner = |t: f64| {
        let s = (1.0 - t * t).max(0.0).sqrt();
        let mut acc = 0.0;
        for m in 0..nphi {
            let ph = 2.0 * PI * m as f64 / nphi as f64;
            let (c, sn) = (ph.cos(), ph.sin());
            let u: Vec<f64> = (0..3).map(|i| t * nu[i] + s * (c * a[i] + sn * b[i])).collect();
            acc += radial_integral(k, &u);
        }
        t.abs() * acc * 2.0 * PI / nphi as f64
    };
    integrate_composite(inner, -1.0, 0.0, 2, &rule) + integrate_composite(inner, 0.0, 1.0, 2, &rule)
}

fn sigma_mc(k: &InteractionKernel, nu: &[f64], samples: usize, seed: u64) -> Estimate {
    let d = nu.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = vec![0.0; d];
    let mut s = CompensatedSum::new();
    let mut s2 = CompensatedSum::new();
    for _ in 0..samples {
        sample_ball(&mut rng, 1.0, &mut u);
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= norm);
        let f = u.iter().zip(nu).map(|(a, b)| a * b).sum::<f64>().abs() * radial_integral(k, &u);
        s.add(f);
        s2.add(f * f);
    }
    let m = samples as f64;
    let mean = s.value() / m;
    let var = (s2.value() / m - mean * mean).max(0.0) * m / (m - 1.0);
    let area = unit_sphere_area(d);
    Estimate { value: area * mean, error: 3.0 * area * (var / m).sqrt() }
}

/// `sigma(nu) = int eta(x) |x . nu| dx`, evaluated in polar form. The error is
/// the change from halving the resolution (three standard errors for MC).
pub fn surface_tension(k: &InteractionKernel, nu: &[f64], quad: &QuadSpec) -> Result<Estimate> {
    k.support_radius()?;
    let d = k.dim();
    if nu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: nu.len() });
    }
    let norm = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("nu must be a unit vector (|nu| = {norm})")));
    }
    let nodes = quad.nodes.max(4);
    let est = match d {
        1 => {
            let v = radial_integral(k, &[1.0]) + radial_integral(k, &[-1.0]);
            Estimate { value: v, error: 1e-15 * v }
        }
        2 | 3 => {
            let f = |m: usize| if d == 2 { sigma_2d(k, nu, m) } else { sigma_3d(k, nu, m) };
            let hi = f(nodes);
            let lo = f(nodes / 2);
            Estimate { value: hi, error: (hi - lo).abs().max(1e-13 * hi.abs()) }
        }
        _ => sigma_mc(k, nu, quad.mc_samples.max(2), quad.seed),
    };
    Ok(est)
}

/// Memoized `sigma` for one kernel.
#[derive(Debug)]
pub struct SurfaceTension {
    kernel: InteractionKernel,
    quad: QuadSpec,
    cache: Mutex<HashMap<Vec<u64>, Estimate>>,
}

impl SurfaceTension {
    pub fn new(kernel: InteractionKernel, quad: QuadSpec) -> Result<Self> {
        kernel.support_radius()?;
        Ok(Self { kernel, quad, cache: Mutex::new(HashMap::new()) })
    }

    pub fn kernel(&self) -> &InteractionKernel {
        &self.kernel
    }

    /// Evaluates on a unit vector.
    pub fn at(&self, nu: &[f64]) -> Result<Estimate> {
        let key: Vec<u64> = nu.iter().map(|v| v.to_bits()).collect();
        if let Some(e) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(*e);
        }
        let e = surface_tension(&self.kernel, nu, &self.quad)?;
        self.cache.lock().expect("cache poisoned").insert(key, e);
        Ok(e)
    }

    /// 1-homogeneous extension `sigma(c nu) = |c| sigma(nu)`.
    pub fn extended(&self, v: &[f64]) -> Result<Estimate> {
        let c = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if c == 0.0 {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        let u: Vec<f64> = v.iter().map(|x| x / c).collect();
        let e = self.at(&u)?;
        Ok(Estimate { value: c * e.value, error: c * e.error })
    }
}

/// Closed halfspace `{x : normal . x <= offset}` with unit outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    /// Normalizes `normal` (and scales `offset` accordingly).
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let s = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(s > 0.0 && s.is_finite() && offset.is_finite()) {
            return Err(Error::InvalidPolyhedron("halfspace needs a nonzero finite normal".into()));
        }
        Ok(Self { normal: normal.iter().map(|v| v / s).collect(), offset: offset / s })
    }

    /// `{x_axis >= c}` (outward normal `-e_axis`).
    pub fn axis_above(d: usize, axis: usize, c: f64) -> Self {
        let mut n = vec![0.0; d];
        n[axis] = -1.0;
        Self { normal: n, offset: -c }
    }

    /// `{x_axis <= c}`.
    pub fn axis_below(d: usize, axis: usize, c: f64) -> Self {
        let mut n = vec![0.0; d];
        n[axis] = 1.0;
        Self { normal: n, offset: c }
    }

    #[inline]
    fn value(&self, x: &[f64]) -> f64 {
        self.normal.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetOp {
    Intersection,
    Union,
}

/// One face `dE_i cap X` with its outward normal and `H^{d-1}` measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub normal: Vec<f64>,
    pub measure: f64,
    pub halfspace: usize,
    /// Face geometry for quadrature of non-uniform densities: the point (d=1),
    /// the segment endpoints (d=2), the polygon (d=3), or the axis box
    /// `[lower..., upper...]` of the free axes (d>3).
    #[serde(skip)]
    pub(crate) geometry: Vec<Vec<f64>>,
}

/// Indicator of a polyhedral set `E` built from halfspaces by intersection or
/// union, optionally complemented, restricted to a box domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyhedralRaw", into = "PolyhedralRaw")]
pub struct PolyhedralFunction {
    halfspaces: Vec<Halfspace>,
    op: SetOp,
    complement: bool,
    domain: BoxDomain,
    faces: Vec<Face>,
    has_edges: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolyhedralRaw {
    halfspaces: Vec<Halfspace>,
    #[serde(default = "default_op")]
    op: SetOp,
    #[serde(default)]
    complement: bool,
    domain: BoxDomain,
}

fn default_op() -> SetOp {
    SetOp::Intersection
}

impl TryFrom<PolyhedralRaw> for PolyhedralFunction {
    type Error = Error;
    fn try_from(r: PolyhedralRaw) -> Result<Self> {
        let hs = r.halfspaces.into_iter().map(|h| Halfspace::new(h.normal, h.offset)).collect::<Result<Vec<_>>>()?;
        PolyhedralFunction::new(hs, r.op, r.complement, &r.domain)
    }
}

impl From<PolyhedralFunction> for PolyhedralRaw {
    fn from(p: PolyhedralFunction) -> Self {
        PolyhedralRaw { halfspaces: p.halfspaces, op: p.op, complement: p.complement, domain: p.domain }
    }
}

const TRANSVERSAL_TOL: f64 = 1e-9;

impl PolyhedralFunction {
    pub fn new(halfspaces: Vec<Halfspace>, op: SetOp, complement: bool, domain: &BoxDomain) -> Result<Self> {
        let d = domain.dim();
        for (i, h) in halfspaces.iter().enumerate() {
            if h.normal.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: h.normal.len() });
            }
            let s = h.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidPolyhedron(format!("halfspace {i} normal is not unit length")));
            }
            // a hyperplane lying in a domain facet is not transversal to the boundary
            for k in 0..d {
                let axis = h.normal[k].abs() > 1.0 - 1e-15 && h.normal.iter().enumerate().all(|(m, v)| m == k || *v == 0.0);
                if axis {
                    let pos = h.offset / h.normal[k];
                    if (pos - domain.lower()[k]).abs() < TRANSVERSAL_TOL || (pos - domain.upper()[k]).abs() < TRANSVERSAL_TOL {
                        return Err(Error::InvalidPolyhedron(format!("face {i} lies inside a domain facet")));
                    }
                }
            }
            for (j, g) in halfspaces.iter().enumerate().take(i) {
                let dot: f64 = h.normal.iter().zip(&g.normal).map(|(a, b)| a * b).sum();
                if (dot.abs() - 1.0).abs() < 1e-12 && (h.offset - dot.signum() * g.offset).abs() < TRANSVERSAL_TOL {
                    return Err(Error::InvalidPolyhedron(format!("halfspaces {j} and {i} share a hyperplane")));
                }
            }
        }
        if d > 3 {
            let axis_aligned = halfspaces.iter().all(|h| h.normal.iter().filter(|v| **v != 0.0).count() == 1);
            if !axis_aligned {
                return Err(Error::InvalidPolyhedron("faces in d > 3 are supported for axis-aligned halfspaces only".into()));
            }
        }
        let mut p = Self { halfspaces, op, complement, domain: domain.clone(), faces: Vec::new(), has_edges: false };
        p.compute_faces();
        Ok(p)
    }

    /// `1_{x_axis > c}`.
    pub fn half_space(domain: &BoxDomain, axis: usize, c: f64) -> Result<Self> {
        Self::new(vec![Halfspace::axis_above(domain.dim(), axis, c)], SetOp::Intersection, false, domain)
    }

    /// `1_{x_0 > c_0 and x_1 > c_1 and ...}` over the given corner.
    pub fn corner(domain: &BoxDomain, corner: &[f64]) -> Result<Self> {
        let d = domain.dim();
        let hs = corner.iter().enumerate().map(|(k, &c)| Halfspace::axis_above(d, k, c)).collect();
        Self::new(hs, SetOp::Intersection, false, domain)
    }

    /// The zero function.
    pub fn empty(domain: &BoxDomain) -> Self {
        Self { halfspaces: vec![], op: SetOp::Union, complement: false, domain: domain.clone(), faces: vec![], has_edges: false }
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Whether faces meet inside the domain (the set has corners/edges).
    pub fn has_edges(&self) -> bool {
        self.has_edges
    }

    /// Total `H^{d-1}` measure of the jump set inside `X`.
    pub fn boundary_measure(&self) -> f64 {
        self.faces.iter().map(|f| f.measure).sum()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let inside = match self.op {
            SetOp::Intersection => self.halfspaces.iter().all(|h| h.value(x) <= 0.0),
            SetOp::Union => self.halfspaces.iter().any(|h| h.value(x) <= 0.0),
        };
        inside != self.complement
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            1.0
        } else {
            0.0
        }
    }

    /// Constraints `a . x <= c` that cut out face `i` (besides the box).
    fn face_constraints(&self, i: usize) -> Vec<(Vec<f64>, f64)> {
        self.halfspaces
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, h)| match self.op {
                SetOp::Intersection => (h.normal.clone(), h.offset),
                SetOp::Union => (h.normal.iter().map(|v| -v).collect(), -h.offset),
            })
            .collect()
    }

    fn box_constraints(&self) -> Vec<(Vec<f64>, f64)> {
        let d = self.domain.dim();
        let mut out = Vec::with_capacity(2 * d);
        for k in 0..d {
            let mut a = vec![0.0; d];
            a[k] = 1.0;
            out.push((a.clone(), self.domain.upper()[k]));
            a[k] = -1.0;
            out.push((a, -self.domain.lower()[k]));
        }
        out
    }

    fn compute_faces(&mut self) {
        let d = self.domain.dim();
        let sign = if self.complement { -1.0 } else { 1.0 };
        let mut faces = Vec::new();
        let mut edges = false;
        for i in 0..self.halfspaces.len() {
            let h = &self.halfspaces[i];
            let others = self.face_constraints(i);
            let (measure, geometry, cut) = match d {
                1 => face_1d(h, &self.domain, &others),
                2 => face_2d(h, &self.box_constraints(), &others),
                3 => face_3d(h, &self.domain, &self.box_constraints(), &others),
                _ => face_axis(h, &self.domain, &others),
            };
            if measure > 0.0 {
                edges |= cut;
            } else {
                log::warn!("face {i} has zero measure inside the domain");
            }
            faces.push(Face { normal: h.normal.iter().map(|v| sign * v).collect(), measure, halfspace: i, geometry });
        }
        self.faces = faces;
        self.has_edges = edges;
    }
}

fn face_1d(h: &Halfspace, dom: &BoxDomain, others: &[(Vec<f64>, f64)]) -> (f64, Vec<Vec<f64>>, bool) {
    let x = h.offset / h.normal[0];
    let inside = x > dom.lower()[0] && x < dom.upper()[0] && others.iter().all(|(a, c)| a[0] * x <= *c);
    if inside {
        (1.0, vec![vec![x]], false)
    } else {
        (0.0, vec![], false)
    }
}

fn face_2d(h: &Halfspace, boxc: &[(Vec<f64>, f64)], others: &[(Vec<f64>, f64)]) -> (f64, Vec<Vec<f64>>, bool) {
    let n = &h.normal;
    let p0 = [n[0] * h.offset, n[1] * h.offset];
    let tau = [-n[1], n[0]];
    let clip = |lo: &mut f64, hi: &mut f64, a: &[f64], c: f64| {
        let base = a[0] * p0[0] + a[1] * p0[1];
        let slope = a[0] * tau[0] + a[1] * tau[1];
        if slope.abs() < 1e-15 {
            if base > c {
                *lo = f64::INFINITY;
            }
        } else if slope > 0.0 {
            *hi = hi.min((c - base) / slope);
        } else {
            *lo = lo.max((c - base) / slope);
        }
    };
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, c) in boxc {
        clip(&mut lo, &mut hi, a, *c);
    }
    let (blo, bhi) = (lo, hi);
    for (a, c) in others {
        clip(&mut lo, &mut hi, a, *c);
    }
    if hi <= lo {
        return (0.0, vec![], false);
    }
    let cut = lo > blo + 1e-12 || hi < bhi - 1e-12;
    let at = |t: f64| vec![p0[0] + t * tau[0], p0[1] + t * tau[1]];
    (hi - lo, vec![at(lo), at(hi)], cut)
}

/// Clips a polygon (plane coordinates) by `g . y <= c`; returns whether it changed.
fn clip_polygon(poly: &mut Vec<[f64; 2]>, g: [f64; 2], c: f64) -> bool {
    let f = |p: &[f64; 2]| g[0] * p[0] + g[1] * p[1] - c;
    if poly.iter().all(|p| f(p) <= 1e-14) {
        return false;
    }
    let mut out = Vec::with_capacity(poly.len() + 1);
    for idx in 0..poly.len() {
        let a = poly[idx];
        let b = poly[(idx + 1) % poly.len()];
        let (fa, fb) = (f(&a), f(&b));
        if fa <= 0.0 {
            out.push(a);
        }
        if (fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0) {
            let t = fa / (fa - fb);
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    *poly = out;
    true
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

fn face_3d(h: &Halfspace, dom: &BoxDomain, boxc: &[(Vec<f64>, f64)], others: &[(Vec<f64>, f64)]) -> (f64, Vec<Vec<f64>>, bool) {
    let n = &h.normal;
    let p0: Vec<f64> = n.iter().map(|v| v * h.offset).collect();
    let (e1, e2) = orthonormal_complement(n);
    let big = 2.0 * (p0.iter().map(|v| v * v).sum::<f64>().sqrt() + dom.diameter()
        + dom.lower().iter().chain(dom.upper()).map(|v| v.abs()).fold(0.0, f64::max))
        + 1.0;
    let mut poly = vec![[-big, -big], [big, -big], [big, big], [-big, big]];
    let to_plane = |a: &[f64], c: f64| -> ([f64; 2], f64) {
        let base: f64 = a.iter().zip(&p0).map(|(x, y)| x * y).sum();
        let g1: f64 = a.iter().zip(&e1).map(|(x, y)| x * y).sum();
        let g2: f64 = a.iter().zip(&e2).map(|(x, y)| x * y).sum();
        ([g1, g2], c - base)
    };
    for (a, c) in boxc {
        let (g, cc) = to_plane(a, *c);
        clip_polygon(&mut poly, g, cc);
        if poly.len() < 3 {
            return (0.0, vec![], false);
        }
    }
    let box_area = polygon_area(&poly);
    let mut cut = false;
    for (a, c) in others {
        let (g, cc) = to_plane(a, *c);
        cut |= clip_polygon(&mut poly, g, cc);
        if poly.len() < 3 {
            return (0.0, vec![], false);
        }
    }
    let area = polygon_area(&poly);
    let cut = cut && area < box_area * (1.0 - 1e-12);
    let geometry = poly.iter().map(|q| (0..3).map(|i| p0[i] + q[0] * e1[i] + q[1] * e2[i]).collect()).collect();
    (area, geometry, cut)
}

fn face_axis(h: &Halfspace, dom: &BoxDomain, others: &[(Vec<f64>, f64)]) -> (f64, Vec<Vec<f64>>, bool) {
    let d = dom.dim();
    let k = h.normal.iter().position(|v| *v != 0.0).expect("unit normal");
    let xk = h.offset / h.normal[k];
    if !(xk > dom.lower()[k] && xk < dom.upper()[k]) {
        return (0.0, vec![], false);
    }
    let mut lo = dom.lower().to_vec();
    let mut hi = dom.upper().to_vec();
    let mut cut = false;
    for (a, c) in others {
        let m = a.iter().position(|v| *v != 0.0).expect("unit normal");
        let bound = c / a[m];
        if m == k {
            let ok = if a[m] > 0.0 { xk <= bound } else { xk >= bound };
            if !ok {
                return (0.0, vec![], false);
            }
        } else if a[m] > 0.0 && bound < hi[m] {
            cut |= bound < hi[m] && bound > lo[m];
            hi[m] = bound;
        } else if a[m] < 0.0 && bound > lo[m] {
            cut |= bound > lo[m] && bound < hi[m];
            lo[m] = bound;
        }
    }
    lo[k] = xk;
    hi[k] = xk;
    let mut measure = 1.0;
    for m in (0..d).filter(|&m| m != k) {
        measure *= (hi[m] - lo[m]).max(0.0);
    }
    (measure, vec![lo, hi], cut && measure > 0.0)
}

/// Integrates `f` over a face with `m` Gauss-Legendre nodes per direction.
fn face_integral(face: &Face, d: usize, m: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    if face.measure == 0.0 {
        return 0.0;
    }
    let rule = gauss_legendre(m);
    match d {
        1 => f(&face.geometry[0]),
        2 => {
            let (a, b) = (&face.geometry[0], &face.geometry[1]);
            let len = face.measure;
            integrate_composite(|t| f(&[a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]), 0.0, 1.0, 8, &rule) * len
        }
        3 => {
            // fan triangulation; each triangle via the collapsed square map
            let g = &face.geometry;
            let mut acc = CompensatedSum::new();
            for t in 1..g.len() - 1 {
                let (p, q, r) = (&g[0], &g[t], &g[t + 1]);
                let u: Vec<f64> = (0..3).map(|i| q[i] - p[i]).collect();
                let v: Vec<f64> = (0..3).map(|i| r[i] - p[i]).collect();
                let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
                let jac = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
                let (xs, ws) = (&rule.0, &rule.1);
                for (xa, wa) in xs.iter().zip(ws) {
                    let s = 0.5 * (xa + 1.0);
                    for (xb, wb) in xs.iter().zip(ws) {
                        let w = 0.5 * (xb + 1.0);
                        let (a1, a2) = (s * (1.0 - w), s * w);
                        let pt: Vec<f64> = (0..3).map(|i| p[i] + a1 * u[i] + a2 * v[i]).collect();
                        acc.add(0.25 * wa * wb * s * jac * f(&pt));
                    }
                }
            }
            acc.value()
        }
        _ => {
            let (lo, hi) = (&face.geometry[0], &face.geometry[1]);
            let free: Vec<usize> = (0..d).filter(|&k| hi[k] > lo[k]).collect();
            let mm = m.min(8);
            let r = gauss_legendre(mm);
            let mut idx = vec![0usize; free.len()];
            let mut pt = lo.clone();
            let mut acc = CompensatedSum::new();
            loop {
                let mut w = 1.0;
                for (slot, &k) in free.iter().enumerate() {
                    let half = 0.5 * (hi[k] - lo[k]);
                    pt[k] = lo[k] + half * (1.0 + r.0[idx[slot]]);
                    w *= half * r.1[idx[slot]];
                }
                acc.add(w * f(&pt));
                let mut s = 0;
                loop {
                    if s == free.len() {
                        return acc.value();
                    }
                    idx[s] += 1;
                    if idx[s] < mm {
                        break;
                    }
                    idx[s] = 0;
                    s += 1;
                }
            }
        }
    }
}

/// Per-face breakdown of a continuum TV evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceTerm {
    pub normal: Vec<f64>,
    pub measure: f64,
    pub sigma: f64,
    pub rho_sq_integral: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvEstimate {
    pub value: f64,
    pub error: f64,
    pub faces: Vec<FaceTerm>,
}

/// `TV(mu; rho, eta) = sum_i sigma(n_i) int_{face_i} rho^2 dH^{d-1}`; exact face
/// integral for uniform densities, Gauss-Legendre face quadrature otherwise.
pub fn continuum_tv(mu: &PolyhedralFunction, rho: &DensitySpec, k: &InteractionKernel, quad: &QuadSpec) -> Result<TvEstimate> {
    let st = SurfaceTension::new(k.clone(), quad.clone())?;
    continuum_tv_with(mu, rho, &st, quad)
}

/// As [`continuum_tv`], reusing a memoized surface tension.
pub fn continuum_tv_with(mu: &PolyhedralFunction, rho: &DensitySpec, st: &SurfaceTension, quad: &QuadSpec) -> Result<TvEstimate> {
    let d = mu.domain().dim();
    if rho.domain() != mu.domain() {
        return Err(Error::InvalidDensity("density and polyhedral function live on different domains".into()));
    }
    if st.kernel().dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: st.kernel().dim() });
    }
    let mut value = CompensatedSum::new();
    let mut error = 0.0;
    let mut terms = Vec::new();
    for face in mu.faces() {
        if face.measure == 0.0 {
            log::warn!("degenerate face with zero measure contributes 0");
            terms.push(FaceTerm { normal: face.normal.clone(), measure: 0.0, sigma: 0.0, rho_sq_integral: 0.0, contribution: 0.0 });
            continue;
        }
        let s = st.at(&face.normal)?;
        let (r2, r2_err) = if rho.is_uniform() {
            let r = 1.0 / rho.domain().volume();
            (r * r * face.measure, 0.0)
        } else {
            let f = |x: &[f64]| rho.pdf(x).powi(2);
            let m = quad.nodes.max(4);
            let hi = face_integral(face, d, m, &f);
            let lo = face_integral(face, d, m / 2, &f);
            (hi, (hi - lo).abs())
        };
        let c = s.value * r2;
        value.add(c);
        error += s.error * r2 + s.value * r2_err;
        terms.push(FaceTerm { normal: face.normal.clone(), measure: face.measure, sigma: s.value, rho_sq_integral: r2, contribution: c });
    }
    Ok(TvEstimate { value: value.value(), error, faces: terms })
}

/// `int_R phi(|x|) |x| dx`.
pub fn hat_sigma(phi: &KernelProfile) -> f64 {
    2.0 * phi.radial_moment(1)
}

/// Binary step function on the line: `left_value` below the first jump,
/// flipping at every jump (the value at a jump is the left value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepFunction {
    pub jumps: Vec<f64>,
    #[serde(default)]
    pub left_value: u8,
}

impl StepFunction {
    pub fn new(mut jumps: Vec<f64>, left_value: u8) -> Result<Self> {
        if left_value > 1 || jumps.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("step function needs finite jumps and a 0/1 left value".into()));
        }
        jumps.sort_by(f64::total_cmp);
        jumps.dedup();
        Ok(Self { jumps, left_value })
    }

    pub fn constant(v: u8) -> Self {
        Self { jumps: vec![], left_value: v }
    }

    pub fn value(&self, t: f64) -> f64 {
        let crossed = self.jumps.iter().filter(|&&j| j < t).count();
        ((self.left_value as usize + crossed) % 2) as f64
    }
}

/// Density of `sum_k c_k U_k + shift` with independent uniforms on (0,1),
/// by inclusion-exclusion over subsets.
fn uniform_sum_density(c: &[f64], shift: f64, y: f64) -> f64 {
    let m = c.len();
    let z = y - shift;
    if m == 0 {
        return 0.0;
    }
    let total: f64 = c.iter().sum();
    if z <= 0.0 || z >= total {
        return 0.0;
    }
    let mut fact = 1.0;
    for i in 1..m {
        fact *= i as f64;
    }
    let prod: f64 = c.iter().product();
    let mut acc = 0.0;
    for mask in 0u32..(1 << m) {
        let mut s = z;
        let mut parity = 1.0;
        for (k, ck) in c.iter().enumerate() {
            if mask & (1 << k) != 0 {
                s -= ck;
                parity = -parity;
            }
        }
        if s > 0.0 {
            acc += parity * if m == 1 { 1.0 } else { s.powi(m as i32 - 1) };
        }
    }
    (acc / (fact * prod)).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HatEnergy {
    pub value: f64,
    pub sigma_hat: f64,
    /// `(jump, pushforward density)` pairs.
    pub jump_densities: Vec<(f64, f64)>,
    /// True when densities came from a kernel density estimate.
    pub approximate: bool,
    pub bandwidth: Option<f64>,
    pub warnings: Vec<String>,
}

/// `sigma_hat * sum_{x in J} (pi_# rho (x))^2` for a linear projection.
pub fn hat_energy(mu: &StepFunction, pi: &FeatureProjection, rho: &DensitySpec, phi: &KernelProfile, quad: &QuadSpec) -> Result<HatEnergy> {
    let FeatureProjection::Linear { direction } = pi else {
        return Err(Error::InvalidArgument("projected energy needs a linear projection".into()));
    };
    let dom = rho.domain();
    if direction.len() != dom.dim() {
        return Err(Error::DimensionMismatch { expected: dom.dim(), found: direction.len() });
    }
    let sh = hat_sigma(phi);
    let mut warnings = Vec::new();
    let mut approximate = false;
    let mut bandwidth = None;
    let densities: Vec<f64> = if rho.is_uniform() {
        let mut c = Vec::new();
        let mut shift = 0.0;
        for (k, &w) in direction.iter().enumerate() {
            let (a, b) = (w * dom.lower()[k], w * dom.upper()[k]);
            shift += a.min(b);
            if w != 0.0 {
                c.push((b - a).abs());
            }
        }
        mu.jumps.iter().map(|&t| uniform_sum_density(&c, shift, t)).collect()
    } else {
        approximate = true;
        let m = quad.mc_samples.max(1000);
        let cloud = sample_points(rho, dom, m, quad.seed)?;
        let proj: Vec<f64> = cloud.points().map(|p| p.iter().zip(direction).map(|(x, w)| x * w).sum()).collect();
        let (_, sd) = crate::numeric::mean_sd(&proj);
        let iqr = crate::numeric::quantile(&proj, 0.75) - crate::numeric::quantile(&proj, 0.25);
        let h = 0.9 * sd.min(iqr / 1.34) * (m as f64).powf(-0.2);
        bandwidth = Some(h);
        mu.jumps
            .iter()
            .map(|&t| {
                let s: f64 = proj.iter().map(|&p| (-0.5 * ((t - p) / h).powi(2)).exp()).sum();
                s / (m as f64 * h * (2.0 * PI).sqrt())
            })
            .collect()
    };
    let mut acc = 0.0;
    let mut pairs = Vec::new();
    for (&t, &f) in mu.jumps.iter().zip(&densities) {
        if f == 0.0 {
            warnings.push(format!("jump at {t} lies outside the support of the projected density"));
            log::warn!("jump at {t} lies outside the support of the projected density");
        }
        acc += f * f;
        pairs.push((t, f));
    }
    Ok(HatEnergy { value: sh * acc, sigma_hat: sh, jump_densities: pairs, approximate, bandwidth, warnings })
}
