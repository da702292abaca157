//! TL1 machinery: quantile transport maps on the line, their sup-norm
//! deviation, and assignment-based TL1 estimates in any dimension.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_exact, solve_heuristic};
use crate::continuum::{PolyhedralFunction, StepFunction};
use crate::domain::{sample_points, DensityKind, DensitySpec, PointCloud};
use crate::energy::LabelFunction;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, gauss_legendre, integrate_gl, quantile, CompensatedSum};

/// Largest instance solved exactly; larger ones use the heuristic.
pub const EXACT_ASSIGNMENT_LIMIT: usize = 3000;

/// Monotone map sending the quantile cell `(q_{i-1}, q_i]` to the `i`-th
/// smallest data value.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap1D {
    sorted: Vec<f64>,
    /// Original index of each sorted value (ties keep index order).
    order: Vec<usize>,
    bounds: Vec<f64>,
    density: DensitySpec,
}

impl TransportMap1D {
    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_data(&self) -> &[f64] {
        &self.sorted
    }

    /// Cell boundaries `q_0 < ... < q_n`.
    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Cell containing `x`, using half-open cells `(q_{i-1}, q_i]` (the first
    /// cell also takes `q_0`).
    pub fn cell_of(&self, x: f64) -> usize {
        let n = self.n();
        // first boundary index >= x among q_1..q_n
        let p = self.bounds[1..].partition_point(|&q| q < x);
        p.min(n - 1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted[self.cell_of(x)]
    }

    /// `rho`-mass of each cell.
    pub fn cell_masses(&self) -> Vec<f64> {
        let cdf: Vec<f64> = self.bounds.iter().map(|&q| self.density.marginal_cdf(0, q).expect("1-d density")).collect();
        cdf.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Builds the quantile map for `data` (any order) under a 1-D density.
pub fn quantile_map_1d(rho: &DensitySpec, data: &[f64]) -> Result<TransportMap1D> {
    let dom = rho.domain();
    if dom.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: dom.dim() });
    }
    if data.is_empty() {
        return Err(Error::InvalidArgument("no data".into()));
    }
    if let Some(bad) = data.iter().find(|&&x| !dom.contains_strict(&[x])) {
        return Err(Error::Transport(format!("data value {bad} lies outside the open support")));
    }
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data[a].total_cmp(&data[b]).then(a.cmp(&b)));
    let sorted = order.iter().map(|&i| data[i]).collect();
    let mut bounds = Vec::with_capacity(n + 1);
    bounds.push(dom.lower()[0]);
    for i in 1..n {
        bounds.push(rho.marginal_quantile(0, i as f64 / n as f64)?);
    }
    bounds.push(dom.upper()[0]);
    Ok(TransportMap1D { sorted, order, bounds, density: rho.clone() })
}

/// `sup_x |T(x) - x| = max_i max(|xi_(i) - q_{i-1}|, |xi_(i) - q_i|)`.
pub fn sup_deviation(map: &TransportMap1D) -> f64 {
    let mut s = 0.0f64;
    for (i, &x) in map.sorted.iter().enumerate() {
        s = s.max((x - map.bounds[i]).abs()).max((x - map.bounds[i + 1]).abs());
    }
    s
}

/// `sqrt(log log n / n)` for `n >= 3`.
pub fn delta_n(n: usize) -> f64 {
    let nf = n as f64;
    (nf.ln().ln() / nf).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub n: usize,
    pub seeds: usize,
    pub mean_ratio: f64,
    pub p95_ratio: f64,
    pub max_ratio: f64,
}

/// Distribution of `sup_deviation / delta_n` over seeded uniform clouds on
/// `(0, 1)`. Seed `s` at size index `k` is `derive_seed(base, [k, s])`.
pub fn rate_envelope(ns: &[usize], seeds: usize, base_seed: u64) -> Result<Vec<EnvelopeRow>> {
    let dom = crate::domain::BoxDomain::unit(1);
    let rho = DensitySpec::uniform(&dom);
    ns.iter()
        .enumerate()
        .map(|(k, &n)| {
            let ratios: Vec<f64> = (0..seeds)
                .into_par_iter()
                .map(|s| {
                    let cloud = sample_points(&rho, &dom, n, derive_seed(base_seed, &[k as u64, s as u64]))?;
                    let map = quantile_map_1d(&rho, cloud.coords())?;
                    Ok(sup_deviation(&map) / delta_n(n))
                })
                .collect::<Result<_>>()?;
            let mean = ratios.iter().sum::<f64>() / seeds as f64;
            Ok(EnvelopeRow {
                n,
                seeds,
                mean_ratio: mean,
                p95_ratio: quantile(&ratios, 0.95),
                max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// Continuum labeling compared against a cloud labeling.
#[derive(Debug, Clone, Copy)]
pub enum ContinuumLabel<'a> {
    Polyhedral(&'a PolyhedralFunction),
    Step(&'a StepFunction),
}

impl ContinuumLabel<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            ContinuumLabel::Polyhedral(p) => p.value(x),
            ContinuumLabel::Step(s) => s.value(x[0]),
        }
    }

    /// Jump locations inside `(a, b)` for 1-D labels.
    fn jumps_1d(&self, a: f64, b: f64) -> Vec<f64> {
        let all: Vec<f64> = match self {
            ContinuumLabel::Polyhedral(p) => p.halfspaces().iter().map(|h| h.offset / h.normal[0]).collect(),
            ContinuumLabel::Step(s) => s.jumps.clone(),
        };
        let mut v: Vec<f64> = all.into_iter().filter(|&t| t > a && t < b).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tl1Method {
    Exact1d,
    Assignment,
}

/// How the continuum measure is discretized for the assignment method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferencePoints {
    /// Fresh i.i.d. samples from `rho`.
    #[default]
    Fresh,
    /// Centres of a product quantile grid (`m = k^d`, product densities only).
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tl1Result {
    pub displacement: f64,
    pub label: f64,
    pub total: f64,
    pub method: Tl1Method,
    pub reference: Option<ReferencePoints>,
    pub m: usize,
    pub seed: u64,
    /// Assignment estimates upper-bound the continuum infimum.
    pub upper_bound: bool,
    /// Certified gap to the discrete optimum (0 when solved exactly).
    pub gap: f64,
}

fn density_breakpoints_1d(rho: &DensitySpec) -> Vec<f64> {
    let dom = rho.domain();
    match rho.kind() {
        DensityKind::PiecewiseConstant { cells, .. } => {
            (1..cells[0]).map(|c| dom.lower()[0] + dom.width(0) * c as f64 / cells[0] as f64).collect()
        }
        _ => vec![],
    }
}

fn exact_1d(map: &TransportMap1D, mu_n: &[f64], mu: ContinuumLabel<'_>, rho: &DensitySpec) -> (f64, f64) {
    let rule = gauss_legendre(12);
    let breaks = density_breakpoints_1d(rho);
    let cdf = |t: f64| rho.marginal_cdf(0, t).expect("1-d density");
    let mut label = CompensatedSum::new();
    let mut disp = CompensatedSum::new();
    for i in 0..map.n() {
        let (a, b) = (map.bounds[i], map.bounds[i + 1]);
        let xi = map.sorted[i];
        let c = mu_n[map.order[i]];
        let mut pts = vec![a];
        pts.extend(mu.jumps_1d(a, b));
        pts.push(b);
        for w in pts.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            label.add((c - mu.value(&[mid])).abs() * (cdf(w[1]) - cdf(w[0])));
        }
        let mut pts = vec![a];
        if xi > a && xi < b {
            pts.push(xi);
        }
        pts.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
        pts.push(b);
        pts.sort_by(f64::total_cmp);
        for w in pts.windows(2) {
            disp.add(integrate_gl(|x| (x - xi).abs() * rho.pdf(&[x]), w[0], w[1], &rule));
        }
    }
    (disp.value(), label.value())
}

fn stratified_points(rho: &DensitySpec, m: usize) -> Result<Vec<Vec<f64>>> {
    let d = rho.domain().dim();
    if !rho.is_product() {
        return Err(Error::Transport("stratified reference points need a product density".into()));
    }
    let k = (m as f64).powf(1.0 / d as f64).round() as usize;
    if k.pow(d as u32) != m {
        return Err(Error::Transport(format!("stratified reference points need m = k^d, got m={m}, d={d}")));
    }
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..k).map(|c| rho.marginal_quantile(a, (c as f64 + 0.5) / k as f64)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(m);
    let mut idx = vec![0usize; d];
    for _ in 0..m {
        out.push((0..d).map(|a| axes[a][idx[a]]).collect());
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < k {
                break;
            }
            idx[a] = 0;
        }
    }
    Ok(out)
}

/// TL1 distance between `(rho, mu)` and `(P_n, mu_n)`.
///
/// `Exact1d` integrates both components cell by cell under the quantile map.
/// `Assignment` discretizes `rho` with `m` reference points (a multiple of `n`;
/// each data point receives `m/n` of them) and solves the balanced assignment
/// for `|x - y| + |mu(x) - mu_n(y)|`, an upper bound on the continuum value.
#[allow(clippy::too_many_arguments)]
pub fn tl1_distance(
    cloud: &PointCloud,
    mu_n: &LabelFunction,
    mu: ContinuumLabel<'_>,
    rho: &DensitySpec,
    method: Tl1Method,
    reference: ReferencePoints,
    m: usize,
    seed: u64,
) -> Result<Tl1Result> {
    let n = cloud.n();
    let d = cloud.dim();
    if mu_n.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: mu_n.len() });
    }
    if rho.domain().dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.domain().dim() });
    }
    if let ContinuumLabel::Polyhedral(p) = mu {
        if p.domain().dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.domain().dim() });
        }
    }
    if matches!(mu, ContinuumLabel::Step(_)) && d != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: d });
    }
    match method {
        Tl1Method::Exact1d => {
            if d != 1 {
                return Err(Error::DimensionMismatch { expected: 1, found: d });
            }
            let map = quantile_map_1d(rho, cloud.coords())?;
            let (disp, label) = exact_1d(&map, mu_n.values(), mu, rho);
            Ok(Tl1Result { displacement: disp, label, total: disp + label, method, reference: None, m: n, seed, upper_bound: false, gap: 0.0 })
        }
        Tl1Method::Assignment => {
            if m < n || m % n != 0 {
                return Err(Error::Transport(format!("assignment needs m to be a positive multiple of n (m={m}, n={n})")));
            }
            let refs: Vec<Vec<f64>> = match reference {
                ReferencePoints::Fresh => sample_points(rho, rho.domain(), m, seed)?.points().map(|p| p.to_vec()).collect(),
                ReferencePoints::Stratified => stratified_points(rho, m)?,
            };
            let ref_labels: Vec<f64> = refs.iter().map(|x| mu.value(x)).collect();
            let rep = m / n;
            let labels = mu_n.values();
            let pieces = |i: usize, j: usize| -> (f64, f64) {
                let y = cloud.point(j / rep);
                let dist = refs[i].iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                (dist, (ref_labels[i] - labels[j / rep]).abs())
            };
            let cost = |i: usize, j: usize| {
                let (a, b) = pieces(i, j);
                a + b
            };
            let sol = if m <= EXACT_ASSIGNMENT_LIMIT {
                solve_exact(m, cost)
            } else {
                solve_heuristic(m, cost, derive_seed(seed, &[1]), 8)
            };
            let mut disp = CompensatedSum::new();
            let mut lab = CompensatedSum::new();
            for (i, &j) in sol.row_to_col.iter().enumerate() {
                let (a, b) = pieces(i, j);
                disp.add(a);
                lab.add(b);
            }
            let mf = m as f64;
            let (disp, label) = (disp.value() / mf, lab.value() / mf);
            if !(disp + label).is_finite() {
                return Err(Error::Transport("assignment produced a non-finite cost".into()));
            }
            Ok(Tl1Result {
                displacement: disp,
                label,
                total: disp + label,
                method,
                reference: Some(reference),
                m,
                seed,
                upper_bound: true,
                gap: sol.gap() / mf,
            })
        }
    }
}
