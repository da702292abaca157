//! Small reproducible data sets shared by tests, examples and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{sample_points, BoxDomain, DensitySpec, PointCloud};
use crate::error::Result;
use crate::graph::WeightedGraph;
use crate::kernel::{FeatureProjection, InteractionKernel, KernelProfile};

/// Points `{0.1, 0.2, 0.9}` on `(0, 1)`; with `eps = 0.15` only the first two
/// interact.
pub fn three_point() -> PointCloud {
    let dom = BoxDomain::unit(1);
    PointCloud::from_points(&dom, &[vec![0.1], vec![0.2], vec![0.9]]).expect("valid fixture")
}

pub const THREE_POINT_EPS: f64 = 0.15;

/// Path `a - b - c` with `W_ab = 5`, `W_bc = 1`.
pub fn path_graph() -> WeightedGraph {
    WeightedGraph::from_edges(3, 1.0, &[(0, 1, 5.0), (1, 2, 1.0)]).expect("valid fixture")
}

/// Cluster centres of the anisotropy data, laid out on a 2 x 2 grid.
pub const CLUSTER_CENTRES: [[f64; 2]; 4] = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
pub const CLUSTER_HALF_WIDTH: f64 = 0.15;
pub const ANISO_EPS: f64 = 0.3;

/// Four square clusters of `per_cluster` uniform points each, separated by
/// gaps of 0.2 in both coordinates.
pub fn aniso_clusters(per_cluster: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = CLUSTER_HALF_WIDTH;
    let pts: Vec<Vec<f64>> = CLUSTER_CENTRES
        .iter()
        .flat_map(|c| (0..per_cluster).map(|_| vec![c[0] + rng.gen_range(-h..h), c[1] + rng.gen_range(-h..h)]).collect::<Vec<_>>())
        .collect();
    PointCloud::from_points(&BoxDomain::unit(2), &pts).expect("clusters lie inside the unit square")
}

/// `pi(x) = sqrt((1 - alpha) x_1^2 + alpha x_2^2)` with the unit indicator.
pub fn aniso_kernel(alpha: f64) -> InteractionKernel {
    InteractionKernel {
        projection: FeatureProjection::WeightedEuclidean { weights: vec![1.0 - alpha, alpha] },
        profile: KernelProfile::indicator(),
        symmetrize: true,
    }
}

/// `mu_1 = 1{x_2 <= c}` (split by the second coordinate) and
/// `mu_2 = 1{x_1 <= c}` (split by the first).
pub fn aniso_labels(cloud: &PointCloud, c1: f64, c2: f64) -> (Vec<bool>, Vec<bool>) {
    let m1 = cloud.points().map(|p| p[1] <= c1).collect();
    let m2 = cloud.points().map(|p| p[0] <= c2).collect();
    (m1, m2)
}

/// Uniform cloud on the unit square together with the `per_corner` vertices
/// nearest to each corner, ordered bottom-left, bottom-right, top-left,
/// top-right. Ties in distance go to the lower index.
pub fn corner_cloud(n: usize, per_corner: usize, seed: u64) -> Result<(PointCloud, [Vec<usize>; 4])> {
    let dom = BoxDomain::unit(2);
    let cloud = sample_points(&DensitySpec::uniform(&dom), &dom, n, seed)?;
    let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let patches = corners.map(|c| {
        let d2 = |i: usize| {
            let p = cloud.point(i);
            (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
        };
        let mut idx: Vec<usize> = (0..cloud.n()).collect();
        idx.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
        idx.truncate(per_corner);
        idx
    });
    Ok((cloud, patches))
}
