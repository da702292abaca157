//! Discrete functionals on weighted graphs: double-well potentials, the
//! Ginzburg-Landau energy, graph total variation and the p-Laplacian.
//!
//! All pair sums use ordered-pair semantics, `sum_{i,j} W_ij |mu_i - mu_j|`,
//! which is twice the sum over stored undirected edges.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::numeric::CompensatedSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelKind {
    Soft,
    Hard,
}

/// Per-vertex labels. Hard labels are exactly 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFunction {
    values: Vec<f64>,
    kind: LabelKind,
}

impl LabelFunction {
    pub fn soft(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLabels("labels must be finite".into()));
        }
        Ok(Self { values, kind: LabelKind::Soft })
    }

    pub fn hard(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidLabels(format!("hard label {i} is {} (must be 0 or 1)", values[i])));
        }
        Ok(Self { values, kind: LabelKind::Hard })
    }

    pub fn from_bools(flags: &[bool]) -> Self {
        Self { values: flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(), kind: LabelKind::Hard }
    }

    pub fn constant(n: usize, v: f64) -> Self {
        let kind = if v == 0.0 || v == 1.0 { LabelKind::Hard } else { LabelKind::Soft };
        Self { values: vec![v; n], kind }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Rounds at 1/2 with ties going to 0.
    pub fn rounded(&self) -> LabelFunction {
        Self { values: self.values.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect(), kind: LabelKind::Hard }
    }

    pub fn scaled(&self, c: f64) -> LabelFunction {
        Self { values: self.values.iter().map(|v| c * v).collect(), kind: LabelKind::Soft }
    }
}

/// Double-well potential vanishing exactly on {0, 1}.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DoubleWell {
    /// `t^2 (t - 1)^2`.
    #[default]
    Quartic,
    /// `min(|t|, |t - 1|)`: piecewise linear with linear tails.
    WShaped,
}

impl DoubleWell {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DoubleWell::Quartic => {
                let a = t * (t - 1.0);
                a * a
            }
            DoubleWell::WShaped => t.abs().min((t - 1.0).abs()),
        }
    }

    /// Derivative (a subgradient at kinks).
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            DoubleWell::Quartic => 2.0 * t * (t - 1.0) * (2.0 * t - 1.0),
            DoubleWell::WShaped => {
                if t < 0.0 || (0.5..1.0).contains(&t) {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    }

    /// `(r, tau)` with `V(t) >= tau |t|` whenever `|t| >= r`.
    pub fn growth_constants(&self) -> (f64, f64) {
        match self {
            // t (t-1)^2 is increasing for t >= 2, and (t-1)^2 |t| >= 18 for t <= -2
            DoubleWell::Quartic => (2.0, 2.0),
            DoubleWell::WShaped => (2.0, 0.5),
        }
    }

    /// Grid check of the potential's conditions: zeros exactly at 0 and 1,
    /// positivity elsewhere, and the linear growth bound. Continuity holds by
    /// construction for both variants.
    pub fn check_conditions(&self, grid_points: usize) -> bool {
        if self.eval(0.0) != 0.0 || self.eval(1.0) != 0.0 {
            return false;
        }
        let (r, tau) = self.growth_constants();
        let span = 4.0 * r;
        (0..=grid_points).all(|i| {
            let t = -span + 2.0 * span * i as f64 / grid_points as f64;
            let v = self.eval(t);
            let zero_ok = t == 0.0 || t == 1.0 || v > 0.0;
            let growth_ok = t.abs() < r || v >= tau * t.abs();
            v >= 0.0 && zero_ok && growth_ok
        })
    }
}

/// `V(t)` for the given potential.
pub fn double_well(v: &DoubleWell, t: f64) -> f64 {
    v.eval(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TvNormalization {
    /// `1 / (eps n^2)`.
    Squared,
    /// `1 / (eps n (n - 1))`.
    Unbiased,
}

/// Energy record as emitted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub term_v: f64,
    pub term_tv: f64,
    pub total: f64,
    pub normalization: TvNormalization,
    pub eps: f64,
    pub n: usize,
}

const CHUNK: usize = 8192;

/// Sum of `f(edge)` over stored edges: fixed-size chunks, each compensated,
/// then folded in chunk order. The result does not depend on the thread count.
pub(crate) fn edge_sum(g: &WeightedGraph, f: impl Fn(usize, usize, f64) -> f64 + Sync) -> f64 {
    let (ei, ej, ew) = g.edge_arrays();
    let m = ew.len();
    let chunks: Vec<CompensatedSum> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut s = CompensatedSum::new();
            for e in c * CHUNK..((c + 1) * CHUNK).min(m) {
                s.add(f(ei[e] as usize, ej[e] as usize, ew[e]));
            }
            s
        })
        .collect();
    let mut total = CompensatedSum::new();
    for c in &chunks {
        total.merge(c);
    }
    total.value()
}

fn check_labels(g: &WeightedGraph, mu: &LabelFunction) -> Result<()> {
    if mu.len() != g.n() {
        return Err(Error::SizeMismatch { expected: g.n(), found: mu.len() });
    }
    Ok(())
}

fn check_eps(g: &WeightedGraph, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if (eps - g.eps()).abs() > 1e-12 * g.eps() {
        return Err(Error::InvalidArgument(format!("eps {eps} differs from the graph's eps {}", g.eps())));
    }
    Ok(())
}

/// Ordered-pair sum `sum_{i,j} W_ij |mu_i - mu_j|`.
pub fn ordered_tv_sum(g: &WeightedGraph, mu: &[f64]) -> f64 {
    2.0 * edge_sum(g, |i, j, w| w * (mu[i] - mu[j]).abs())
}

fn v_sum(v: &DoubleWell, mu: &[f64]) -> f64 {
    mu.iter().map(|&t| v.eval(t)).collect::<CompensatedSum>().value()
}

/// `(1/(eps n)) sum V(mu_i) + (1/(eps n^2)) sum_{i,j} W_ij |mu_i - mu_j|`.
pub fn gl_energy(g: &WeightedGraph, mu: &LabelFunction, v: &DoubleWell, eps: f64) -> Result<f64> {
    Ok(energy_report(g, mu, v, eps)?.total)
}

pub fn energy_report(g: &WeightedGraph, mu: &LabelFunction, v: &DoubleWell, eps: f64) -> Result<EnergyReport> {
    check_labels(g, mu)?;
    check_eps(g, eps)?;
    let n = g.n() as f64;
    let term_v = v_sum(v, mu.values()) / (eps * n);
    let term_tv = ordered_tv_sum(g, mu.values()) / (eps * n * n);
    Ok(EnergyReport { term_v, term_tv, total: term_v + term_tv, normalization: TvNormalization::Squared, eps, n: g.n() })
}

/// Graph total variation with the chosen normalization.
pub fn graph_tv(g: &WeightedGraph, mu: &LabelFunction, eps: f64, norm: TvNormalization) -> Result<f64> {
    check_labels(g, mu)?;
    check_eps(g, eps)?;
    let n = g.n() as f64;
    let denom = match norm {
        TvNormalization::Squared => n * n,
        TvNormalization::Unbiased => {
            if g.n() < 2 {
                return Err(Error::InvalidArgument("unbiased normalization needs n >= 2".into()));
            }
            n * (n - 1.0)
        }
    };
    Ok(ordered_tv_sum(g, mu.values()) / (eps * denom))
}

/// `(1/(eps^p n^2)) sum_{i,j} W_ij |mu_i - mu_j|^p`.
pub fn p_laplacian(g: &WeightedGraph, mu: &LabelFunction, eps: f64, p: f64) -> Result<f64> {
    check_labels(g, mu)?;
    check_eps(g, eps)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidArgument(format!("p must be at least 1, got {p}")));
    }
    let m = mu.values();
    let sum = if p == 1.0 {
        ordered_tv_sum(g, m)
    } else {
        2.0 * edge_sum(g, |i, j, w| w * (m[i] - m[j]).abs().powf(p))
    };
    let n = g.n() as f64;
    let scale = if p == 1.0 { eps } else { eps.powf(p) };
    Ok(sum / (scale * n * n))
}

/// Raw cut weight `sum_{i in A0, j in A1} W_ij` of a binary labeling.
pub fn graph_cut(g: &WeightedGraph, mu: &LabelFunction) -> Result<f64> {
    check_labels(g, mu)?;
    if !mu.is_binary() {
        return Err(Error::InvalidLabels("graph cut needs binary labels".into()));
    }
    let m = mu.values();
    Ok(edge_sum(g, |i, j, w| if m[i] != m[j] { w } else { 0.0 }))
}

/// `gl_energy(mu1) - gl_energy(mu2)`.
pub fn delta_energy(g: &WeightedGraph, mu1: &LabelFunction, mu2: &LabelFunction, v: &DoubleWell, eps: f64) -> Result<f64> {
    Ok(gl_energy(g, mu1, v, eps)? - gl_energy(g, mu2, v, eps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn three_point() -> WeightedGraph {
        WeightedGraph::from_edges(3, 0.15, &[(0, 1, 1.0 / 0.15)]).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> WeightedGraph {
        let mut e = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    e.push((i, j, rng.gen_range(0.1..3.0)));
                }
            }
        }
        WeightedGraph::from_edges(n, 0.1, &e).unwrap()
    }

    #[test]
    fn double_well_examples() {
        assert_eq!(double_well(&DoubleWell::Quartic, 0.0), 0.0);
        assert_eq!(double_well(&DoubleWell::Quartic, 1.0), 0.0);
        assert_eq!(double_well(&DoubleWell::Quartic, 0.5), 0.0625);
        assert!(DoubleWell::Quartic.check_conditions(100_000));
        assert!(DoubleWell::WShaped.check_conditions(100_000));
    }

    #[test]
    fn double_well_derivative_matches_finite_differences() {
        for t in [-1.3, 0.2, 0.7, 1.9] {
            let h = 1e-6;
            let fd = (DoubleWell::Quartic.eval(t + h) - DoubleWell::Quartic.eval(t - h)) / (2.0 * h);
            assert!((fd - DoubleWell::Quartic.derivative(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn gl_energy_examples() {
        let g = WeightedGraph::from_edges(2, 0.1, &[(0, 1, 2.0)]).unwrap();
        let one = LabelFunction::constant(2, 1.0);
        assert_eq!(gl_energy(&g, &one, &DoubleWell::Quartic, 0.1).unwrap(), 0.0);
        let half = LabelFunction::constant(2, 0.5);
        assert!((gl_energy(&g, &half, &DoubleWell::Quartic, 0.1).unwrap() - 0.625).abs() < 1e-15);

        let g = three_point();
        let mu = LabelFunction::hard(vec![0.0, 1.0, 1.0]).unwrap();
        let r = energy_report(&g, &mu, &DoubleWell::Quartic, 0.15).unwrap();
        assert_eq!(r.term_v, 0.0);
        assert!((r.term_tv - 2.0 / (0.15 * 0.15 * 9.0)).abs() < 1e-12);
        assert!((r.term_tv - 9.8765).abs() < 1e-3);
        let mu = LabelFunction::hard(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(graph_tv(&g, &mu, 0.15, TvNormalization::Squared).unwrap(), 0.0);
    }

    #[test]
    fn size_and_eps_mismatch_are_errors() {
        let g = three_point();
        assert!(gl_energy(&g, &LabelFunction::constant(2, 0.0), &DoubleWell::Quartic, 0.15).is_err());
        assert!(gl_energy(&g, &LabelFunction::constant(3, 0.0), &DoubleWell::Quartic, 0.2).is_err());
        let g1 = WeightedGraph::from_edges(1, 0.1, &[]).unwrap();
        assert!(graph_tv(&g1, &LabelFunction::constant(1, 0.0), 0.1, TvNormalization::Unbiased).is_err());
    }

    #[test]
    fn p_laplacian_examples() {
        let g = WeightedGraph::from_edges(2, 0.5, &[(0, 1, 3.0)]).unwrap();
        let mu = LabelFunction::hard(vec![0.0, 1.0]).unwrap();
        assert!((p_laplacian(&g, &mu, 0.5, 2.0).unwrap() - 6.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let g = random_graph(&mut rng, 15, 0.4);
            let mu = LabelFunction::soft((0..15).map(|_| rng.gen_range(-1.0..2.0)).collect()).unwrap();
            assert_eq!(
                p_laplacian(&g, &mu, 0.1, 1.0).unwrap(),
                graph_tv(&g, &mu, 0.1, TvNormalization::Squared).unwrap()
            );
            assert_eq!(p_laplacian(&g, &LabelFunction::constant(15, 0.3), 0.1, 2.5).unwrap(), 0.0);
        }
    }

    #[test]
    fn tv_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 20, 0.3);
            let mu = LabelFunction::soft((0..20).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let c: f64 = rng.gen_range(-3.0..3.0);
            let a = graph_tv(&g, &mu.scaled(c), 0.1, TvNormalization::Squared).unwrap();
            let b = c.abs() * graph_tv(&g, &mu, 0.1, TvNormalization::Squared).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            let sq = graph_tv(&g, &mu, 0.1, TvNormalization::Squared).unwrap();
            let ub = graph_tv(&g, &mu, 0.1, TvNormalization::Unbiased).unwrap();
            assert!((ub / sq - 20.0 / 19.0).abs() < 1e-14);
        }
    }

    #[test]
    fn tv_vanishes_iff_constant_on_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..30 {
            let g = random_graph(&mut rng, 40, 0.04);
            let (comp, _) = g.connected_components();
            let per: Vec<f64> = (0..40).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mu = LabelFunction::soft(comp.iter().map(|&c| per[c]).collect()).unwrap();
            assert_eq!(graph_tv(&g, &mu, 0.1, TvNormalization::Squared).unwrap(), 0.0);
            // perturbing a vertex with a neighbour makes it positive
            if let Some(v) = (0..40).find(|&v| g.degree(v) > 0) {
                let mut vals = mu.values().to_vec();
                vals[v] += 0.5;
                let mu = LabelFunction::soft(vals).unwrap();
                assert!(graph_tv(&g, &mu, 0.1, TvNormalization::Squared).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn binary_energy_is_tv_and_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_graph(&mut rng, 30, 0.3);
        let mu = LabelFunction::hard((0..30).map(|_| if rng.gen::<bool>() { 1.0 } else { 0.0 }).collect()).unwrap();
        let e = gl_energy(&g, &mu, &DoubleWell::Quartic, 0.1).unwrap();
        let tv = graph_tv(&g, &mu, 0.1, TvNormalization::Squared).unwrap();
        assert_eq!(e, tv);
        let cut = graph_cut(&g, &mu).unwrap();
        assert!((tv - 2.0 * cut / (0.1 * 900.0)).abs() < 1e-12 * tv);
        assert_eq!(delta_energy(&g, &mu, &mu, &DoubleWell::Quartic, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn edge_sum_is_thread_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let g = random_graph(&mut rng, 400, 0.3);
        let mu: Vec<f64> = (0..400).map(|_| rng.gen()).collect();
        let a = ordered_tv_sum(&g, &mu);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| ordered_tv_sum(&g, &mu));
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
