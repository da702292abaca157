//! Sparse proximity graphs built with uniform cell lists under the
//! kernel's compact-support cutoff.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

use crate::domain::PointCloud;
use crate::error::{Error, Result};
use crate::kernel::{eval_kernel, InteractionKernel};
use crate::numeric::CompensatedSum;

/// Weights below this (after the `eps^-d` scaling) are not stored.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Provenance recorded with every graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetadata {
    pub n: usize,
    pub edges: usize,
    pub eps: f64,
    /// `eps * R_eta`; infinite for all-pairs construction.
    pub cutoff: f64,
    pub kernel: Option<InteractionKernel>,
    /// Positive weights discarded for falling below [`WEIGHT_FLOOR`].
    pub dropped_small_weights: usize,
    /// Set when the cutoff exceeds the domain diameter.
    pub dense: bool,
}

/// Undirected weighted graph. Each unordered pair is stored once in the edge
/// arrays (`i < j`, lexicographic order) and mirrored into a CSR adjacency
/// whose neighbour lists are sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    meta: GraphMetadata,
    edge_i: Vec<u32>,
    edge_j: Vec<u32>,
    edge_w: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl WeightedGraph {
    /// Builds a graph from explicit undirected edges. Zero weights are skipped;
    /// self-loops, duplicate pairs and negative weights are rejected.
    pub fn from_edges(n: usize, eps: f64, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument("eps must be positive".into()));
        }
        let mut list = Vec::with_capacity(edges.len());
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::InvalidArgument(format!("edge ({a},{b}) out of range for n={n}")));
            }
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at vertex {a}")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidArgument(format!("edge ({a},{b}) has invalid weight {w}")));
            }
            if w > 0.0 {
                list.push((a.min(b) as u32, a.max(b) as u32, w));
            }
        }
        list.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        if list.windows(2).any(|p| p[0].0 == p[1].0 && p[0].1 == p[1].1) {
            return Err(Error::InvalidArgument("duplicate edge".into()));
        }
        let meta = GraphMetadata {
            n,
            edges: 0,
            eps,
            cutoff: f64::INFINITY,
            kernel: None,
            dropped_small_weights: 0,
            dense: false,
        };
        Ok(Self::assemble(meta, list))
    }

    fn assemble(mut meta: GraphMetadata, list: Vec<(u32, u32, f64)>) -> Self {
        let n = meta.n;
        meta.edges = list.len();
        let mut deg = vec![0usize; n + 1];
        for &(i, j, _) in &list {
            deg[i as usize + 1] += 1;
            deg[j as usize + 1] += 1;
        }
        for v in 0..n {
            deg[v + 1] += deg[v];
        }
        let offsets = deg;
        let mut fill = offsets.clone();
        let m = list.len();
        let mut neighbors = vec![0u32; 2 * m];
        let mut weights = vec![0.0; 2 * m];
        // edges are sorted by (i, j): for a fixed vertex v, partners j < v arrive
        // (as the first endpoint) in increasing order before partners j > v
        for &(i, j, w) in &list {
            let (iu, ju) = (i as usize, j as usize);
            neighbors[fill[ju]] = i;
            weights[fill[ju]] = w;
            fill[ju] += 1;
            neighbors[fill[iu]] = j;
            weights[fill[iu]] = w;
            fill[iu] += 1;
        }
        let mut edge_i = Vec::with_capacity(m);
        let mut edge_j = Vec::with_capacity(m);
        let mut edge_w = Vec::with_capacity(m);
        for (i, j, w) in list {
            edge_i.push(i);
            edge_j.push(j);
            edge_w.push(w);
        }
        let g = Self { meta, edge_i, edge_j, edge_w, offsets, neighbors, weights };
        debug_assert!(g.neighbor_lists_sorted());
        g
    }

    fn neighbor_lists_sorted(&self) -> bool {
        (0..self.n()).all(|v| self.neighbor_indices(v).windows(2).all(|p| p[0] < p[1]))
    }

    pub fn n(&self) -> usize {
        self.meta.n
    }

    pub fn eps(&self) -> f64 {
        self.meta.eps
    }

    pub fn edge_count(&self) -> usize {
        self.edge_w.len()
    }

    pub fn metadata(&self) -> &GraphMetadata {
        &self.meta
    }

    /// Iterates unordered edges `(i, j, W_ij)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.edge_w.len()).map(move |e| (self.edge_i[e] as usize, self.edge_j[e] as usize, self.edge_w[e]))
    }

    /// Edge arrays `(i, j, w)` for bulk numeric loops.
    pub fn edge_arrays(&self) -> (&[u32], &[u32], &[f64]) {
        (&self.edge_i, &self.edge_j, &self.edge_w)
    }

    pub fn neighbor_indices(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn neighbor_weights(&self, v: usize) -> &[f64] {
        &self.weights[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.neighbor_indices(v).iter().zip(self.neighbor_weights(v)).map(|(&j, &w)| (j as usize, w))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn weighted_degree(&self, v: usize) -> f64 {
        self.neighbor_weights(v).iter().sum()
    }

    /// `W_ij`, or 0 when the pair is not an edge.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.neighbor_indices(i).binary_search(&(j as u32)) {
            Ok(p) => self.neighbor_weights(i)[p],
            Err(_) => 0.0,
        }
    }

    /// Component label per vertex (labels are the smallest member index) and
    /// the number of components.
    pub fn connected_components(&self) -> (Vec<usize>, usize) {
        let n = self.n();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (i, j, _) in self.edges() {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
        let labels: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
        let count = labels.iter().enumerate().filter(|(v, &l)| *v == l).count();
        (labels, count)
    }

    /// Writes `i,j,weight` rows, one per unordered edge.
    pub fn write_edge_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["i", "j", "weight"])?;
        for (i, j, wt) in self.edges() {
            wtr.write_record([i.to_string(), j.to_string(), wt.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads an edge list written by [`write_edge_csv`](Self::write_edge_csv).
    pub fn read_edge_csv<R: Read>(r: R, meta: GraphMetadata) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut edges = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse(format!("row {}: bad {what}", line + 2));
            let i: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("i"))?;
            let j: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("j"))?;
            let w: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("weight"))?;
            edges.push((i, j, w));
        }
        let mut g = Self::from_edges(meta.n, meta.eps, &edges)?;
        let edges = g.meta.edges;
        g.meta = GraphMetadata { edges, ..meta };
        Ok(g)
    }
}

/// Uniform grid of cells of side at least the cutoff; each point lives in one
/// cell, so every pair within the cutoff sits in the same or adjacent cells.
pub(crate) struct CellGrid {
    dims: Vec<usize>,
    lower: Vec<f64>,
    side: Vec<f64>,
    start: Vec<usize>,
    items: Vec<u32>,
}

impl CellGrid {
    /// Indexes the points `ids` of `cloud`. The cell count is capped near
    /// `2 * max(points, 1)` by coarsening.
    pub(crate) fn new(cloud: &PointCloud, ids: &[u32], cutoff: f64) -> Self {
        let d = cloud.dim();
        let dom = cloud.domain();
        let cap = (2 * ids.len()).max(1) as f64;
        let mut s = cutoff * (1.0 + 1e-9);
        let dims_for = |s: f64| -> Vec<usize> { (0..d).map(|k| ((dom.width(k) / s).floor() as usize).max(1)).collect() };
        let mut dims = dims_for(s);
        while dims.iter().map(|&c| c as f64).product::<f64>() > cap {
            s *= 1.25;
            dims = dims_for(s);
        }
        let side: Vec<f64> = (0..d).map(|k| dom.width(k) / dims[k] as f64).collect();
        let lower = dom.lower().to_vec();
        let total: usize = dims.iter().product();
        let mut grid = Self { dims, lower, side, start: vec![0; total + 1], items: vec![0; ids.len()] };
        let cells: Vec<usize> = ids.iter().map(|&i| grid.cell_of(cloud.point(i as usize))).collect();
        for &c in &cells {
            grid.start[c + 1] += 1;
        }
        for c in 0..total {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (&i, &c) in ids.iter().zip(&cells) {
            grid.items[fill[c]] = i;
            fill[c] += 1;
        }
        grid
    }

    fn coord(&self, k: usize, x: f64) -> usize {
        (((x - self.lower[k]) / self.side[k]).floor().max(0.0) as usize).min(self.dims[k] - 1)
    }

    pub(crate) fn cell_of(&self, p: &[f64]) -> usize {
        let mut c = 0;
        for k in 0..self.dims.len() {
            c = c * self.dims[k] + self.coord(k, p[k]);
        }
        c
    }

    pub(crate) fn cell_count(&self) -> usize {
        self.start.len() - 1
    }

    pub(crate) fn members(&self, c: usize) -> &[u32] {
        &self.items[self.start[c]..self.start[c + 1]]
    }

    fn unflatten(&self, mut c: usize, out: &mut [isize]) {
        for k in (0..self.dims.len()).rev() {
            out[k] = (c % self.dims[k]) as isize;
            c /= self.dims[k];
        }
    }

    /// Calls `f` with every cell adjacent to `c` (including `c`). With `half`,
    /// only `c` itself and lexicographically later neighbours are visited, so
    /// each adjacent pair of cells is seen once.
    pub(crate) fn for_each_adjacent(&self, c: usize, half: bool, mut f: impl FnMut(usize)) {
        let d = self.dims.len();
        let mut base = vec![0isize; d];
        self.unflatten(c, &mut base);
        let mut off = vec![-1isize; d];
        loop {
            let later = off.iter().find(|&&o| o != 0).map_or(0, |&o| o);
            if !half || later >= 0 {
                let mut idx = 0usize;
                let mut ok = true;
                for k in 0..d {
                    let v = base[k] + off[k];
                    if v < 0 || v >= self.dims[k] as isize {
                        ok = false;
                        break;
                    }
                    idx = idx * self.dims[k] + v as usize;
                }
                if ok {
                    f(idx);
                }
            }
            // odometer over {-1, 0, 1}^d
            let mut k = d;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if off[k] < 1 {
                    off[k] += 1;
                    break;
                }
                off[k] = -1;
            }
        }
    }
}

/// Symmetrized weight for the ordered displacement `x_i - x_j`: stored graphs
/// are undirected, and the ordered double sums only see the even part.
#[inline]
fn pair_weight(k: &InteractionKernel, diff: &mut [f64], eps: f64) -> f64 {
    let d = diff.len();
    let a = eval_kernel(k, diff, eps, d);
    if k.symmetrize || k.projection.is_even() {
        return a;
    }
    for v in diff.iter_mut() {
        *v = -*v;
    }
    0.5 * (a + eval_kernel(k, diff, eps, d))
}

fn check_inputs(cloud: &PointCloud, k: &InteractionKernel, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    if k.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch { expected: cloud.dim(), found: k.dim() });
    }
    if cloud.n() > u32::MAX as usize {
        return Err(Error::LimitExceeded("too many vertices".into()));
    }
    Ok(())
}

/// Builds `W_ij = eps^-d eta((x_i - x_j)/eps)` over all pairs within
/// `eps * R_eta`, using cell lists. Rejects kernels with unbounded support.
pub fn build_graph(cloud: &PointCloud, k: &InteractionKernel, eps: f64) -> Result<WeightedGraph> {
    check_inputs(cloud, k, eps)?;
    let r = k.support_radius()?;
    let cutoff = eps * r;
    let dense = cutoff > cloud.domain().diameter();
    if dense {
        log::warn!("cutoff {cutoff} exceeds the domain diameter; the graph will be dense");
    }
    let n = cloud.n();
    let d = cloud.dim();
    let ids: Vec<u32> = (0..n as u32).collect();
    let grid = CellGrid::new(cloud, &ids, cutoff);
    let c2 = cutoff * cutoff;

    let per_cell: Vec<(Vec<(u32, u32, f64)>, usize)> = (0..grid.cell_count())
        .into_par_iter()
        .map(|c| {
            let mut out = Vec::new();
            let mut dropped = 0;
            let mut diff = vec![0.0; d];
            let here = grid.members(c);
            if here.is_empty() {
                return (out, 0);
            }
            grid.for_each_adjacent(c, true, |o| {
                let there = grid.members(o);
                for (a, &i) in here.iter().enumerate() {
                    let pi = cloud.point(i as usize);
                    let rest = if o == c { &there[a + 1..] } else { there };
                    for &j in rest {
                        let pj = cloud.point(j as usize);
                        let mut dist2 = 0.0;
                        for t in 0..d {
                            diff[t] = pi[t] - pj[t];
                            dist2 += diff[t] * diff[t];
                        }
                        if dist2 > c2 {
                            continue;
                        }
                        let w = pair_weight(k, &mut diff, eps);
                        if w >= WEIGHT_FLOOR {
                            out.push((i.min(j), i.max(j), w));
                        } else if w > 0.0 {
                            dropped += 1;
                        }
                    }
                }
            });
            (out, dropped)
        })
        .collect();

    let dropped = per_cell.iter().map(|p| p.1).sum();
    let mut list: Vec<(u32, u32, f64)> = per_cell.into_iter().flat_map(|p| p.0).collect();
    list.par_sort_unstable_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    let meta = GraphMetadata {
        n,
        edges: 0,
        eps,
        cutoff,
        kernel: Some(k.clone()),
        dropped_small_weights: dropped,
        dense,
    };
    Ok(WeightedGraph::assemble(meta, list))
}

/// All-pairs construction, O(n^2). Works for kernels without compact support,
/// which [`build_graph`] rejects.
pub fn build_graph_all_pairs(cloud: &PointCloud, k: &InteractionKernel, eps: f64) -> Result<WeightedGraph> {
    check_inputs(cloud, k, eps)?;
    let n = cloud.n();
    if n > 20_000 {
        return Err(Error::LimitExceeded(format!("all-pairs construction refuses n={n} > 20000")));
    }
    let d = cloud.dim();
    let rows: Vec<(Vec<(u32, u32, f64)>, usize)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            let mut dropped = 0;
            let mut diff = vec![0.0; d];
            let pi = cloud.point(i);
            for j in i + 1..n {
                let pj = cloud.point(j);
                for t in 0..d {
                    diff[t] = pi[t] - pj[t];
                }
                let w = pair_weight(k, &mut diff, eps);
                if w >= WEIGHT_FLOOR {
                    out.push((i as u32, j as u32, w));
                } else if w > 0.0 {
                    dropped += 1;
                }
            }
            (out, dropped)
        })
        .collect();
    let dropped = rows.iter().map(|r| r.1).sum();
    let list = rows.into_iter().flat_map(|r| r.0).collect();
    let meta = GraphMetadata {
        n,
        edges: 0,
        eps,
        cutoff: f64::INFINITY,
        kernel: Some(k.clone()),
        dropped_small_weights: dropped,
        dense: true,
    };
    Ok(WeightedGraph::assemble(meta, list))
}

/// `sum_{i in A, j not in A} W_ij` over unordered cross pairs, where `A` is
/// the set of vertices with `inside[i]`. Equivalent to building the graph and
/// summing cut edges, without storing any edges. Summation order is fixed.
pub fn cross_weight_sum(cloud: &PointCloud, inside: &[bool], k: &InteractionKernel, eps: f64) -> Result<f64> {
    check_inputs(cloud, k, eps)?;
    if inside.len() != cloud.n() {
        return Err(Error::SizeMismatch { expected: cloud.n(), found: inside.len() });
    }
    let r = k.support_radius()?;
    let cutoff = eps * r;
    let c2 = cutoff * cutoff;
    let d = cloud.dim();
    let ones: Vec<u32> = (0..cloud.n() as u32).filter(|&i| inside[i as usize]).collect();
    if ones.is_empty() || ones.len() == cloud.n() {
        return Ok(0.0);
    }
    let grid = CellGrid::new(cloud, &ones, cutoff);
    let mut acc = CompensatedSum::new();
    let mut diff = vec![0.0; d];
    for j in 0..cloud.n() {
        if inside[j] {
            continue;
        }
        let pj = cloud.point(j);
        grid.for_each_adjacent(grid.cell_of(pj), false, |o| {
            for &i in grid.members(o) {
                let pi = cloud.point(i as usize);
                let mut dist2 = 0.0;
                for t in 0..d {
                    diff[t] = pi[t] - pj[t];
                    dist2 += diff[t] * diff[t];
                }
                if dist2 <= c2 {
                    let w = pair_weight(k, &mut diff, eps);
                    if w >= WEIGHT_FLOOR {
                        acc.add(w);
                    }
                }
            }
        });
    }
    Ok(acc.value())
}
