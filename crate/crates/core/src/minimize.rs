//! Minimizers of the discrete functionals: exact binary cuts by max-flow and
//! a smoothed, projected descent for soft labels.

use std::collections::VecDeque;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{gl_energy, graph_tv, DoubleWell, LabelFunction, TvNormalization};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::numeric::{derive_seed, CompensatedSum};

/// Vertices with fixed binary labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeedConstraint {
    seeds: Vec<(usize, u8)>,
}

impl SeedConstraint {
    pub fn new(seeds: Vec<(usize, u8)>) -> Result<Self> {
        let mut idx: Vec<usize> = seeds.iter().map(|s| s.0).collect();
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSeeds("duplicate seed vertex".into()));
        }
        if let Some(s) = seeds.iter().find(|s| s.1 > 1) {
            return Err(Error::InvalidSeeds(format!("seed label {} at vertex {} is not 0 or 1", s.1, s.0)));
        }
        Ok(SeedConstraint { seeds })
    }

    pub fn none() -> Self {
        SeedConstraint::default()
    }

    pub fn seeds(&self) -> &[(usize, u8)] {
        &self.seeds
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }

    pub fn has_both_classes(&self) -> bool {
        self.seeds.iter().any(|s| s.1 == 0) && self.seeds.iter().any(|s| s.1 == 1)
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self.seeds.iter().find(|s| s.0 >= n) {
            Some(s) => Err(Error::InvalidSeeds(format!("seed vertex {} out of range for n={n}", s.0))),
            None => Ok(()),
        }
    }
}

/// `(lambda / n) sum_i |mu_i - zeta_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityTerm {
    pub lambda: f64,
    pub reference: Vec<f64>,
}

impl FidelityTerm {
    pub fn new(lambda: f64, reference: Vec<f64>) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("fidelity weight must be finite and >= 0, got {lambda}")));
        }
        if reference.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidLabels("non-finite fidelity reference".into()));
        }
        Ok(FidelityTerm { lambda, reference })
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        let s: f64 = mu.iter().zip(&self.reference).map(|(a, b)| (a - b).abs()).collect::<CompensatedSum>().value();
        self.lambda * s / mu.len() as f64
    }
}

// ---------------------------------------------------------------------------
// max-flow

struct FlowNet {
    head: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
    next: Vec<usize>,
}

const NIL: usize = usize::MAX;

impl FlowNet {
    fn new(nodes: usize) -> Self {
        FlowNet { head: vec![NIL; nodes], to: vec![], cap: vec![], next: vec![] }
    }

    /// Arc pair `u -> v` (capacity `c`) and `v -> u` (capacity `rc`).
    fn add(&mut self, u: usize, v: usize, c: f64, rc: f64) {
        for (a, b, cc) in [(u, v, c), (v, u, rc)] {
            self.to.push(b);
            self.cap.push(cc);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
    }

    fn bfs(&self, s: usize, level: &mut [usize]) {
        level.iter_mut().for_each(|l| *l = NIL);
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                if self.cap[e] > 0.0 && level[self.to[e]] == NIL {
                    level[self.to[e]] = level[u] + 1;
                    q.push_back(self.to[e]);
                }
                e = self.next[e];
            }
        }
    }

    fn dfs(&mut self, u: usize, t: usize, f: f64, level: &[usize], it: &mut [usize]) -> f64 {
        if u == t {
            return f;
        }
        while it[u] != NIL {
            let e = it[u];
            let v = self.to[e];
            if self.cap[e] > 0.0 && level[v] == level[u] + 1 {
                let d = self.dfs(v, t, f.min(self.cap[e]), level, it);
                if d > 0.0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            it[u] = self.next[e];
        }
        0.0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.head.len();
        let mut level = vec![NIL; n];
        let mut flow = 0.0;
        loop {
            self.bfs(s, &mut level);
            if level[t] == NIL {
                return flow;
            }
            let mut it = self.head.clone();
            loop {
                let f = self.dfs(s, t, f64::INFINITY, &level, &mut it);
                if f <= 0.0 {
                    break;
                }
                flow += f;
            }
        }
    }

    /// Nodes that can reach `t` through residual arcs.
    fn reaches(&self, t: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        seen[t] = true;
        let mut q = VecDeque::from([t]);
        while let Some(v) = q.pop_front() {
            let mut e = self.head[v];
            while e != NIL {
                // arc e: v -> w; its twin w -> v carries residual cap[e ^ 1]
                let w = self.to[e];
                if !seen[w] && self.cap[e ^ 1] > 0.0 {
                    seen[w] = true;
                    q.push_back(w);
                }
                e = self.next[e];
            }
        }
        seen
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutResult {
    pub labels: LabelFunction,
    /// `graph_tv` (squared normalization) of `labels`.
    pub value: f64,
    /// Raw cut weight.
    pub cut_weight: f64,
    pub components: usize,
}

/// Exact minimizer of the graph total variation over seed-feasible binary
/// labelings, by s-t max-flow. Vertices labelled 1 are those that can still
/// reach the sink in the residual network, so unseeded components get 0.
pub fn min_cut_binary(g: &WeightedGraph, seeds: &SeedConstraint) -> Result<CutResult> {
    let n = g.n();
    seeds.validate(n)?;
    if !seeds.has_both_classes() {
        return Err(Error::InvalidSeeds("min-cut needs at least one seed of each class".into()));
    }
    let (_, comps) = g.connected_components();
    if comps > 1 {
        warn!("graph has {comps} connected components; each is cut independently");
    }
    let (s, t) = (n, n + 1);
    let mut net = FlowNet::new(n + 2);
    for (i, j, w) in g.edges() {
        net.add(i, j, w, w);
    }
    for &(v, c) in seeds.seeds() {
        if c == 0 {
            net.add(s, v, f64::INFINITY, 0.0);
        } else {
            net.add(v, t, f64::INFINITY, 0.0);
        }
    }
    let flow = net.max_flow(s, t);
    let side = net.reaches(t);
    let labels = LabelFunction::from_bools(&side[..n]);
    let value = graph_tv(g, &labels, g.eps(), TvNormalization::Squared)?;
    let cut_weight = value * g.eps() * (n * n) as f64 / 2.0;
    if (cut_weight - flow).abs() > 1e-9 * flow.max(1.0) {
        warn!("cut weight {cut_weight} differs from max-flow value {flow}");
    }
    Ok(CutResult { labels, value, cut_weight, components: comps })
}

// ---------------------------------------------------------------------------
// relaxation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxParams {
    /// Iteration cap per smoothing stage.
    pub max_iters: usize,
    /// Initial step multiplier on the diagonal majorizer.
    pub step: f64,
    /// Initial smoothing; defaults to eps.
    pub smoothing: Option<f64>,
    pub stages: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Relative objective change at which a stage stops.
    pub tol: f64,
}

impl Default for RelaxParams {
    fn default() -> Self {
        RelaxParams { max_iters: 2000, step: 1.0, smoothing: None, stages: 4, restarts: 4, seed: 0, tol: 1e-10 }
    }
}

impl RelaxParams {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.stages == 0 || self.restarts == 0 {
            return Err(Error::InvalidArgument("max_iters, stages and restarts must be positive".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument("step must be positive and tol non-negative".into()));
        }
        if let Some(d) = self.smoothing {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidArgument(format!("smoothing must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub index: usize,
    pub seed: u64,
    pub energy: Option<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxResult {
    pub labels: LabelFunction,
    /// Unsmoothed objective: GL energy (or TV alone) plus fidelity.
    pub energy: f64,
    pub best_restart: usize,
    /// Smoothed objective per iteration, one vector per stage.
    pub trace: Vec<Vec<f64>>,
    pub smoothing_schedule: Vec<f64>,
    pub restarts: Vec<RestartOutcome>,
}

struct Problem<'a> {
    g: &'a WeightedGraph,
    v: Option<&'a DoubleWell>,
    eps: f64,
    fidelity: Option<&'a FidelityTerm>,
    free: Vec<bool>,
}

impl Problem<'_> {
    fn n(&self) -> f64 {
        self.g.n() as f64
    }

    fn smoothed(&self, mu: &[f64], ds: f64) -> f64 {
        let n = self.n();
        let d2 = ds * ds;
        let (src, dst, w) = self.g.edge_arrays();
        let mut tv = CompensatedSum::new();
        for k in 0..w.len() {
            let t = mu[src[k] as usize] - mu[dst[k] as usize];
            tv.add(w[k] * (t * t + d2).sqrt());
        }
        let mut total = 2.0 * tv.value() / (self.eps * n * n);
        if let Some(v) = self.v {
            total += mu.iter().map(|&t| v.eval(t)).collect::<CompensatedSum>().value() / (self.eps * n);
        }
        if let Some(f) = self.fidelity {
            let s: f64 = mu.iter().zip(&f.reference).map(|(a, b)| ((a - b).powi(2) + d2).sqrt()).collect::<CompensatedSum>().value();
            total += f.lambda * s / n;
        }
        total
    }

    fn exact(&self, mu: &LabelFunction) -> Result<f64> {
        let base = match self.v {
            Some(v) => gl_energy(self.g, mu, v, self.eps)?,
            None => graph_tv(self.g, mu, self.eps, TvNormalization::Squared)?,
        };
        Ok(base + self.fidelity.map_or(0.0, |f| f.eval(mu.values())))
    }

    /// Gradient of the smoothed objective and a diagonal curvature bound.
    fn gradient(&self, mu: &[f64], ds: f64, grad: &mut [f64], diag: &mut [f64]) {
        let n = self.n();
        let d2 = ds * ds;
        let ctv = 2.0 * 2.0 / (self.eps * n * n);
        for i in 0..mu.len() {
            let mut gi = 0.0;
            let mut li = 0.0;
            for (j, w) in self.g.neighbors(i) {
                let t = mu[i] - mu[j];
                gi += w * t / (t * t + d2).sqrt();
                li += w;
            }
            // each unordered pair enters twice in the ordered sum
            gi *= ctv / 2.0;
            li *= ctv / (2.0 * ds);
            if let Some(v) = self.v {
                gi += v.derivative(mu[i]) / (self.eps * n);
                li += 2.0 / (self.eps * n);
            }
            if let Some(f) = self.fidelity {
                let t = mu[i] - f.reference[i];
                gi += f.lambda * t / ((t * t + d2).sqrt() * n);
                li += f.lambda / (ds * n);
            }
            grad[i] = gi;
            diag[i] = li.max(f64::MIN_POSITIVE);
        }
    }

    fn run(&self, mut mu: Vec<f64>, schedule: &[f64], p: &RelaxParams) -> std::result::Result<(Vec<f64>, Vec<Vec<f64>>), String> {
        let m = mu.len();
        let mut grad = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut trial = mu.clone();
        let mut trace = Vec::with_capacity(schedule.len());
        for &ds in schedule {
            let mut stage = Vec::new();
            let mut f = self.smoothed(&mu, ds);
            if !f.is_finite() {
                return Err("objective is not finite".into());
            }
            stage.push(f);
            let mut scale = p.step;
            for _ in 0..p.max_iters {
                self.gradient(&mu, ds, &mut grad, &mut diag);
                let mut accepted = false;
                for _ in 0..40 {
                    for i in 0..m {
                        trial[i] = if self.free[i] { (mu[i] - scale * grad[i] / diag[i]).clamp(0.0, 1.0) } else { mu[i] };
                    }
                    let ft = self.smoothed(&trial, ds);
                    if ft.is_nan() {
                        return Err("objective became NaN".into());
                    }
                    if ft <= f {
                        accepted = ft < f;
                        let rel = (f - ft) / f.abs().max(f64::MIN_POSITIVE);
                        std::mem::swap(&mut mu, &mut trial);
                        f = ft;
                        stage.push(f);
                        if rel <= p.tol {
                            accepted = false;
                        }
                        break;
                    }
                    scale *= 0.5;
                }
                if !accepted {
                    break;
                }
                scale = (scale * 1.5).min(p.step * 4.0);
            }
            trace.push(stage);
        }
        Ok((mu, trace))
    }
}

/// Minimizes the GL energy (or, with `v = None`, the graph TV alone) plus an
/// optional fidelity term over soft labels in `[0,1]^n` with seeds clamped.
///
/// `|t|` is smoothed as `sqrt(t^2 + d^2)`; `d` starts at the smoothing
/// parameter and halves at each stage. Each stage runs projected,
/// diagonally preconditioned gradient steps with backtracking, so the
/// smoothed trace never increases within a stage. Restarts begin from
/// independent uniform draws and the lowest energy wins (ties to the lower
/// index).
pub fn relax_minimize(
    g: &WeightedGraph,
    v: Option<&DoubleWell>,
    eps: f64,
    seeds: &SeedConstraint,
    fidelity: Option<&FidelityTerm>,
    params: &RelaxParams,
) -> Result<RelaxResult> {
    params.validate()?;
    let n = g.n();
    seeds.validate(n)?;
    if let Some(f) = fidelity {
        if f.reference.len() != n {
            return Err(Error::SizeMismatch { expected: n, found: f.reference.len() });
        }
    }
    if !(eps > 0.0) || ((eps - g.eps()).abs() > 1e-12 * eps) {
        return Err(Error::InvalidArgument(format!("eps {eps} does not match the graph's eps {}", g.eps())));
    }
    let mut free = vec![true; n];
    for &(i, _) in seeds.seeds() {
        free[i] = false;
    }
    let prob = Problem { g, v, eps, fidelity, free };
    let d0 = params.smoothing.unwrap_or(eps);
    let schedule: Vec<f64> = (0..params.stages).map(|s| d0 / f64::powi(2.0, s as i32)).collect();

    let runs: Vec<(RestartOutcome, Option<(Vec<f64>, Vec<Vec<f64>>)>)> = (0..params.restarts)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(params.seed, &[r as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut mu: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            for &(i, c) in seeds.seeds() {
                mu[i] = c as f64;
            }
            match prob.run(mu, &schedule, params) {
                Ok((mu, trace)) => {
                    let e = LabelFunction::soft(mu.clone()).and_then(|l| prob.exact(&l));
                    match e {
                        Ok(e) if e.is_finite() => (RestartOutcome { index: r, seed, energy: Some(e), failure: None }, Some((mu, trace))),
                        Ok(_) => (RestartOutcome { index: r, seed, energy: None, failure: Some("non-finite energy".into()) }, None),
                        Err(err) => (RestartOutcome { index: r, seed, energy: None, failure: Some(err.to_string()) }, None),
                    }
                }
                Err(msg) => {
                    warn!("restart {r} aborted: {msg}");
                    (RestartOutcome { index: r, seed, energy: None, failure: Some(msg) }, None)
                }
            }
        })
        .collect();

    let mut best: Option<usize> = None;
    for (k, (o, _)) in runs.iter().enumerate() {
        if let Some(e) = o.energy {
            if best.map_or(true, |b| e < runs[b].0.energy.unwrap()) {
                best = Some(k);
            }
        }
    }
    let b = best.ok_or_else(|| Error::Solver("every restart failed".into()))?;
    let restarts: Vec<RestartOutcome> = runs.iter().map(|r| r.0.clone()).collect();
    let (mu, trace) = runs.into_iter().nth(b).and_then(|r| r.1).expect("best restart has a solution");
    Ok(RelaxResult {
        labels: LabelFunction::soft(mu)?,
        energy: restarts[b].energy.unwrap(),
        best_restart: b,
        trace,
        smoothing_schedule: schedule,
        restarts,
    })
}

/// Best superlevel set `{mu > t}` of a soft labeling, measured by the graph
/// cut. Any level set of an exact TV minimizer is itself a minimizer, so this
/// is the natural rounding for the TV relaxation. Seed vertices keep their
/// labels for every `t` in `[0, 1)`; ties between thresholds go to the larger `t`.
pub fn threshold_round(g: &WeightedGraph, mu: &LabelFunction) -> Result<(LabelFunction, f64)> {
    let n = g.n();
    if mu.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: mu.len() });
    }
    let x = mu.values();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut inside = vec![false; n];
    // candidate k: the first k vertices of `order` form the set
    let mut cut = 0.0;
    let mut best = (f64::INFINITY, 0usize, 0.0);
    let mut k = 0;
    while k < n {
        let level = x[order[k]];
        if level < 1.0 && cut < best.0 {
            best = (cut, k, level);
        }
        while k < n && x[order[k]] == level {
            let v = order[k];
            for (u, w) in g.neighbors(v) {
                cut += if inside[u] { -w } else { w };
            }
            inside[v] = true;
            k += 1;
        }
    }
    if x[order[n - 1]] > 0.0 && cut < best.0 {
        best = (cut, n, 0.0);
    }
    let mut flags = vec![false; n];
    for &v in &order[..best.1] {
        flags[v] = true;
    }
    Ok((LabelFunction::from_bools(&flags), best.2))
}

/// Fraction of vertices with labels strictly inside `(c, 1 - c)`.
pub fn phase_width(mu: &LabelFunction, c: f64) -> Result<f64> {
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::InvalidArgument(format!("phase width cutoff must lie in (0, 1/2), got {c}")));
    }
    if mu.is_empty() {
        return Ok(0.0);
    }
    let k = mu.values().iter().filter(|&&t| t > c && t < 1.0 - c).count();
    Ok(k as f64 / mu.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{sample_points, BoxDomain, DensitySpec};
    use crate::graph::build_graph;
    use crate::kernel::InteractionKernel;

    fn path() -> WeightedGraph {
        WeightedGraph::from_edges(3, 1.0, &[(0, 1, 5.0), (1, 2, 1.0)]).unwrap()
    }

    fn enumerate(g: &WeightedGraph, seeds: &SeedConstraint) -> f64 {
        let n = g.n();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if seeds.seeds().iter().any(|&(i, c)| (mask >> i) & 1 != c as u32) {
                continue;
            }
            let cut: f64 = g.edges().filter(|&(i, j, _)| (mask >> i) & 1 != (mask >> j) & 1).map(|e| e.2).sum();
            best = best.min(cut);
        }
        best
    }

    #[test]
    fn path_graph_cut() {
        let r = min_cut_binary(&path(), &SeedConstraint::new(vec![(0, 0), (2, 1)]).unwrap()).unwrap();
        assert_eq!(r.labels.values(), &[0.0, 0.0, 1.0]);
        assert!((r.cut_weight - 1.0).abs() < 1e-12);
        assert!((r.value - 2.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_seed_gives_empty_cut() {
        let g = WeightedGraph::from_edges(4, 1.0, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let s = SeedConstraint::new(vec![(0, 0), (1, 0), (2, 0), (3, 1)]).unwrap();
        let r = min_cut_binary(&g, &s).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.components, 2);
    }

    #[test]
    fn seed_errors() {
        assert!(SeedConstraint::new(vec![(0, 0), (0, 1)]).is_err());
        assert!(SeedConstraint::new(vec![(0, 2)]).is_err());
        let g = path();
        assert!(min_cut_binary(&g, &SeedConstraint::new(vec![(0, 0)]).unwrap()).is_err());
        assert!(min_cut_binary(&g, &SeedConstraint::new(vec![(0, 0), (7, 1)]).unwrap()).is_err());
    }

    #[test]
    fn cut_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(3..=12);
            let mut edges = vec![];
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(0.4) {
                        edges.push((i, j, rng.gen_range(0.1..3.0)));
                    }
                }
            }
            let g = WeightedGraph::from_edges(n, 0.5, &edges).unwrap();
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n);
            while b == a {
                b = rng.gen_range(0..n);
            }
            let mut seeds = vec![(a, 0u8), (b, 1u8)];
            for v in 0..n {
                if v != a && v != b && rng.gen_bool(0.2) {
                    seeds.push((v, rng.gen_range(0..2)));
                }
            }
            let s = SeedConstraint::new(seeds).unwrap();
            let r = min_cut_binary(&g, &s).unwrap();
            assert!((r.cut_weight - enumerate(&g, &s)).abs() < 1e-9);
            for &(i, c) in s.seeds() {
                assert_eq!(r.labels.values()[i], c as f64);
            }
        }
    }

    fn cloud_graph(n: usize, eps: f64, seed: u64) -> (crate::domain::PointCloud, WeightedGraph) {
        let dom = BoxDomain::unit(2);
        let c = sample_points(&DensitySpec::uniform(&dom), &dom, n, seed).unwrap();
        let g = build_graph(&c, &InteractionKernel::unit_ball(2), eps).unwrap();
        (c, g)
    }

    #[test]
    fn relaxed_tv_matches_cut() {
        let params = RelaxParams { restarts: 2, max_iters: 3000, ..Default::default() };
        for inst in 0..20u64 {
            let (c, g) = cloud_graph(60 + 7 * inst as usize, 0.3, 100 + inst);
            let left = (0..c.n()).min_by(|&a, &b| c.point(a)[0].total_cmp(&c.point(b)[0])).unwrap();
            let right = (0..c.n()).max_by(|&a, &b| c.point(a)[0].total_cmp(&c.point(b)[0])).unwrap();
            let s = SeedConstraint::new(vec![(left, 0), (right, 1)]).unwrap();
            let exact = min_cut_binary(&g, &s).unwrap();
            let r = relax_minimize(&g, None, 0.3, &s, None, &RelaxParams { seed: inst, ..params.clone() }).unwrap();
            let rounded = graph_tv(&g, &r.labels.rounded(), 0.3, TvNormalization::Squared).unwrap();
            assert!(rounded <= exact.value * 1.02 + 1e-12, "instance {inst}: {rounded} vs {}", exact.value);
            assert_eq!(r.labels.values()[left], 0.0);
            assert_eq!(r.labels.values()[right], 1.0);
            for stage in &r.trace {
                assert!(stage.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn unconstrained_relaxation_is_constant() {
        let (_, g) = cloud_graph(150, 0.4, 3);
        let r = relax_minimize(&g, Some(&DoubleWell::Quartic), 0.4, &SeedConstraint::none(), None, &RelaxParams::default()).unwrap();
        assert!(r.energy < 1e-6, "{}", r.energy);
        assert_eq!(phase_width(&r.labels, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn relaxation_respects_cut_lower_bound() {
        let (_, g) = cloud_graph(120, 0.3, 9);
        let s = SeedConstraint::new(vec![(0, 0), (1, 1), (2, 0), (3, 1)]).unwrap();
        let exact = min_cut_binary(&g, &s).unwrap();
        let r = relax_minimize(&g, Some(&DoubleWell::Quartic), 0.3, &s, None, &RelaxParams::default()).unwrap();
        assert!(r.energy >= exact.value * (1.0 - 1e-3) - 1e-12, "{} < {}", r.energy, exact.value);
    }

    #[test]
    fn fidelity_pulls_toward_reference() {
        let (_, g) = cloud_graph(80, 0.3, 4);
        let zeta = vec![1.0; 80];
        let f = FidelityTerm::new(50.0, zeta).unwrap();
        let r = relax_minimize(&g, Some(&DoubleWell::Quartic), 0.3, &SeedConstraint::none(), Some(&f), &RelaxParams::default()).unwrap();
        assert!(r.labels.values().iter().all(|&t| t > 0.9));
        assert!(FidelityTerm::new(-1.0, vec![]).is_err());
    }

    #[test]
    fn threshold_rounding_recovers_cut() {
        for seed in 0..5 {
            let (_, g) = cloud_graph(120, 0.3, 20 + seed);
            let s = SeedConstraint::new(vec![(0, 0), (1, 1)]).unwrap();
            let exact = min_cut_binary(&g, &s).unwrap();
            let r = relax_minimize(&g, None, 0.3, &s, None, &RelaxParams::default()).unwrap();
            let (rounded, _) = threshold_round(&g, &r.labels).unwrap();
            assert_eq!(rounded.values()[0], 0.0);
            assert_eq!(rounded.values()[1], 1.0);
            let tv = graph_tv(&g, &rounded, 0.3, TvNormalization::Squared).unwrap();
            assert!(tv <= exact.value * 1.02 + 1e-12, "{tv} vs {}", exact.value);
        }
        let (_, g) = cloud_graph(30, 0.4, 1);
        let mu = LabelFunction::soft((0..30).map(|i| i as f64 / 29.0).collect()).unwrap();
        let (r, t) = threshold_round(&g, &mu).unwrap();
        let direct = graph_tv(&g, &r, 0.4, TvNormalization::Squared).unwrap();
        for k in 0..29 {
            let c = LabelFunction::from_bools(&mu.values().iter().map(|&v| v > k as f64 / 29.0).collect::<Vec<_>>());
            assert!(direct <= graph_tv(&g, &c, 0.4, TvNormalization::Squared).unwrap() + 1e-12);
        }
        assert!((0.0..1.0).contains(&t));
    }

    #[test]
    fn phase_width_examples() {
        assert_eq!(phase_width(&LabelFunction::hard(vec![0.0, 1.0, 1.0]).unwrap(), 0.2).unwrap(), 0.0);
        assert_eq!(phase_width(&LabelFunction::constant(5, 0.5), 0.1).unwrap(), 1.0);
        assert!(phase_width(&LabelFunction::constant(5, 0.5), 0.5).is_err());
    }
}
