use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gtv_core::domain::{sample_points, admissible_epsilon, BoxDomain, DensitySpec, EpsilonSchedule, PointCloud};
use gtv_core::energy::{delta_energy, energy_report, gl_energy, graph_tv, p_laplacian, LabelFunction, TvNormalization};
use gtv_core::fixtures;
use gtv_core::graph::{build_graph, build_graph_all_pairs, WeightedGraph};
use gtv_core::kernel::InteractionKernel;
use gtv_core::minimize::{min_cut_binary, phase_width, relax_minimize, threshold_round, FidelityTerm, SeedConstraint};
use gtv_core::numeric::derive_seed;
use gtv_core::ratelab::{mc_mse, RateConfig};
use gtv_core::transport::{tl1_distance, ContinuumLabel};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, CloudSection, CornerPattern, ExperimentConfig, LabelSpec, SeedSpec, Solver};
use crate::output::{sha256_hex, Manifest, Staging, MANIFEST_FORMAT};

/// Per-task seed paths below the master seed.
const SEED_CLOUD: u64 = 1;
const SEED_SOLVER: u64 = 2;
const SEED_TL1: u64 = 3;
const SEED_RATE: u64 = 4;

pub struct Ctx<'a> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub base_dir: &'a Path,
    seeds: BTreeMap<String, u64>,
    staging: Staging,
}

impl<'a> Ctx<'a> {
    pub fn new(command: &'a str, config: &'a ExperimentConfig, base_dir: &'a Path, out: &Path) -> Result<Self> {
        Ok(Ctx { command, config, base_dir, seeds: BTreeMap::new(), staging: Staging::new(out)? })
    }

    fn seed(&mut self, name: &str, path: u64) -> u64 {
        let s = derive_seed(self.config.seed, &[path]);
        self.seeds.insert(name.to_string(), s);
        s
    }

    fn resolve(&self, p: &Path) -> std::path::PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn finish(mut self) -> Result<std::path::PathBuf> {
        let toml = config::to_toml(self.config)?;
        let manifest = Manifest {
            format_version: MANIFEST_FORMAT,
            tool: "gtvlab",
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            schema_version: self.config.schema_version,
            config_sha256: sha256_hex(toml.as_bytes()),
            master_seed: self.config.seed,
            derived_seeds: std::mem::take(&mut self.seeds),
            artifacts: self.staging.digests(),
            config: toml,
        };
        self.staging.write_json("manifest.json", &manifest)?;
        self.staging.commit()
    }
}

fn section<'c, T>(s: &'c Option<T>, name: &str) -> Result<&'c T> {
    s.as_ref().ok_or_else(|| anyhow!("this command needs a [{name}] section"))
}

fn load_cloud(ctx: &mut Ctx) -> Result<PointCloud> {
    let c = section(&ctx.config.cloud, "cloud")?.clone();
    Ok(match c {
        CloudSection::Sample { domain, density, n } => {
            let rho = match density {
                Some(k) => DensitySpec::new(k, &domain)?,
                None => DensitySpec::uniform(&domain),
            };
            let seed = ctx.seed("cloud", SEED_CLOUD);
            sample_points(&rho, &domain, n, seed)?
        }
        CloudSection::File { path, domain } => {
            let p = ctx.resolve(&path);
            let f = File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            PointCloud::read_csv(f, &domain)?
        }
        CloudSection::ThreePoint {} => fixtures::three_point(),
        CloudSection::AnisoClusters { per_cluster } => {
            let seed = ctx.seed("cloud", SEED_CLOUD);
            fixtures::aniso_clusters(per_cluster, seed)
        }
        CloudSection::CornerCloud { n } => {
            let seed = ctx.seed("cloud", SEED_CLOUD);
            fixtures::corner_cloud(n, 0, seed)?.0
        }
    })
}

fn kernel(ctx: &Ctx, d: usize) -> Result<InteractionKernel> {
    let k = ctx.config.kernel.clone().unwrap_or_else(|| InteractionKernel::unit_ball(d));
    k.validate()?;
    if k.dim() != d {
        bail!("kernel dimension {} does not match the cloud dimension {d}", k.dim());
    }
    Ok(k)
}

#[derive(Serialize)]
struct EpsInfo {
    eps: f64,
    admissible: Option<bool>,
}

fn resolve_eps(ctx: &Ctx, cloud: &PointCloud) -> Result<EpsInfo> {
    let g = section(&ctx.config.graph, "graph")?;
    match (&g.eps, &g.schedule) {
        (Some(e), _) => Ok(EpsInfo { eps: *e, admissible: None }),
        (None, Some(rule)) => {
            let sched = EpsilonSchedule::new(cloud.dim(), rule.clone())?;
            let (eps, ok) = admissible_epsilon(cloud.n(), &sched);
            Ok(EpsInfo { eps, admissible: Some(ok) })
        }
        (None, None) => unreachable!("validated"),
    }
}

fn make_graph(ctx: &Ctx, cloud: &PointCloud, k: &InteractionKernel, eps: f64) -> Result<WeightedGraph> {
    let all_pairs = ctx.config.graph.as_ref().is_some_and(|g| g.all_pairs);
    Ok(if all_pairs { build_graph_all_pairs(cloud, k, eps)? } else { build_graph(cloud, k, eps)? })
}

fn load_labels(ctx: &Ctx, spec: &LabelSpec, cloud: &PointCloud) -> Result<LabelFunction> {
    let l = match spec {
        LabelSpec::Values { values } => LabelFunction::soft(values.clone())?,
        LabelSpec::File { path } => {
            let p = ctx.resolve(path);
            let mut r = csv::Reader::from_path(&p).with_context(|| format!("opening {}", p.display()))?;
            let mut vals = vec![f64::NAN; cloud.n()];
            for (line, rec) in r.deserialize::<(usize, f64)>().enumerate() {
                let (i, v) = rec.with_context(|| format!("{}: record {}", p.display(), line + 1))?;
                if i >= vals.len() {
                    bail!("{}: index {i} out of range for n={}", p.display(), cloud.n());
                }
                vals[i] = v;
            }
            if let Some(i) = vals.iter().position(|v| v.is_nan()) {
                bail!("{}: no label for vertex {i}", p.display());
            }
            LabelFunction::soft(vals)?
        }
        LabelSpec::Region { set } => LabelFunction::from_bools(&cloud.points().map(|p| set.contains(p)).collect::<Vec<_>>()),
    };
    if l.len() != cloud.n() {
        bail!("{} labels for {} points", l.len(), cloud.n());
    }
    Ok(l)
}

fn labels_csv(mu: &LabelFunction) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["index", "label"])?;
    for (i, v) in mu.values().iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    Ok(w.into_inner().map_err(|e| anyhow!("{e}"))?)
}

fn points_csv(cloud: &PointCloud) -> Result<Vec<u8>> {
    let mut buf = vec![];
    cloud.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn sample(ctx: &mut Ctx) -> Result<()> {
    let cloud = load_cloud(ctx)?;
    ctx.staging.write("points.csv", &points_csv(&cloud)?)?;
    ctx.staging.write_json("cloud.json", &cloud.metadata())
}

pub fn graph(ctx: &mut Ctx) -> Result<()> {
    let cloud = load_cloud(ctx)?;
    let k = kernel(ctx, cloud.dim())?;
    let eps = resolve_eps(ctx, &cloud)?;
    let g = make_graph(ctx, &cloud, &k, eps.eps)?;
    let mut edges = vec![];
    g.write_edge_csv(&mut edges)?;
    let (_, components) = g.connected_components();
    ctx.staging.write("points.csv", &points_csv(&cloud)?)?;
    ctx.staging.write("edges.csv", &edges)?;
    ctx.staging.write_json("graph.json", &json!({ "metadata": g.metadata(), "eps": eps, "components": components }))
}

pub fn energy(ctx: &mut Ctx) -> Result<()> {
    let sec = section(&ctx.config.energy, "energy")?.clone();
    let cloud = load_cloud(ctx)?;
    let k = kernel(ctx, cloud.dim())?;
    let eps = resolve_eps(ctx, &cloud)?.eps;
    let g = make_graph(ctx, &cloud, &k, eps)?;
    let mu = load_labels(ctx, &sec.labels, &cloud)?;
    let mut report = serde_json::to_value(energy_report(&g, &mu, &sec.well, eps)?)?;
    let tv = graph_tv(&g, &mu, eps, sec.normalization)?;
    report["graph_tv"] = json!({ "normalization": sec.normalization, "value": tv });
    if let Some(p) = sec.p {
        report["p_laplacian"] = json!({ "p": p, "value": p_laplacian(&g, &mu, eps, p)? });
    }
    ctx.staging.write_json("energy.json", &report)
}

fn seeds_for(spec: &SeedSpec, cloud: &PointCloud) -> Result<SeedConstraint> {
    Ok(match spec {
        SeedSpec::List { seeds } => SeedConstraint::new(seeds.clone())?,
        SeedSpec::Strips { axis, below, above } => {
            if *axis >= cloud.dim() {
                bail!("seed strip axis {axis} out of range");
            }
            let mut s = vec![];
            for (i, p) in cloud.points().enumerate() {
                if p[*axis] < *below {
                    s.push((i, 0));
                } else if p[*axis] > *above {
                    s.push((i, 1));
                }
            }
            SeedConstraint::new(s)?
        }
        SeedSpec::CornerPatches { per_corner, pattern } => {
            if cloud.dim() != 2 {
                bail!("corner patches need a 2-d cloud");
            }
            let corners = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
            let labels: [u8; 4] = match pattern {
                CornerPattern::TwoPhase => [0, 0, 1, 1],
                CornerPattern::Cross => [0, 1, 1, 0],
            };
            let mut s: Vec<(usize, u8)> = vec![];
            for (c, lab) in corners.iter().zip(labels) {
                let d2 = |i: usize| {
                    let p = cloud.point(i);
                    (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)
                };
                let mut idx: Vec<usize> = (0..cloud.n()).collect();
                idx.sort_by(|&a, &b| d2(a).total_cmp(&d2(b)).then(a.cmp(&b)));
                for &i in idx.iter().take(*per_corner) {
                    if !s.iter().any(|x| x.0 == i) {
                        s.push((i, lab));
                    }
                }
            }
            SeedConstraint::new(s)?
        }
        SeedSpec::None {} => SeedConstraint::none(),
    })
}

pub fn minimize(ctx: &mut Ctx) -> Result<()> {
    let sec = section(&ctx.config.minimize, "minimize")?.clone();
    let cloud = load_cloud(ctx)?;
    let k = kernel(ctx, cloud.dim())?;
    let eps = resolve_eps(ctx, &cloud)?.eps;
    let g = make_graph(ctx, &cloud, &k, eps)?;
    let seeds = seeds_for(&sec.seeds, &cloud)?;
    let mut summary = serde_json::Map::new();
    summary.insert("eps".into(), json!(eps));
    summary.insert("n".into(), json!(cloud.n()));
    summary.insert("seed_count".into(), json!(seeds.seeds().len()));
    for solver in &sec.solvers {
        match solver {
            Solver::Cut => {
                let r = min_cut_binary(&g, &seeds)?;
                let e = gl_energy(&g, &r.labels, &sec.well, eps)?;
                ctx.staging.write("labels_cut.csv", &labels_csv(&r.labels)?)?;
                summary.insert("cut".into(), json!({ "graph_tv": r.value, "cut_weight": r.cut_weight, "gl_energy": e, "components": r.components }));
            }
            Solver::Relax => {
                let fidelity = match &sec.fidelity {
                    Some(f) => Some(FidelityTerm::new(f.lambda, load_labels(ctx, &f.reference, &cloud)?.values().to_vec())?),
                    None => None,
                };
                let mut params = sec.relax.clone();
                params.seed = ctx.seed("solver", SEED_SOLVER);
                let v = (!sec.tv_only).then_some(&sec.well);
                let r = relax_minimize(&g, v, eps, &seeds, fidelity.as_ref(), &params)?;
                let (level_set, threshold) = threshold_round(&g, &r.labels)?;
                ctx.staging.write("labels_relax.csv", &labels_csv(&r.labels)?)?;
                ctx.staging.write("labels_relax_rounded.csv", &labels_csv(&level_set)?)?;
                summary.insert(
                    "relax".into(),
                    json!({
                        "energy": r.energy,
                        "best_restart": r.best_restart,
                        "restarts": r.restarts,
                        "smoothing_schedule": r.smoothing_schedule,
                        "stage_iterations": r.trace.iter().map(|t| t.len()).collect::<Vec<_>>(),
                        "final_smoothed": r.trace.last().and_then(|t| t.last()),
                        "phase_width": phase_width(&r.labels, sec.width_cutoff)?,
                        "width_cutoff": sec.width_cutoff,
                        "rounding_threshold": threshold,
                        "rounded_graph_tv": graph_tv(&g, &level_set, eps, TvNormalization::Squared)?,
                    }),
                );
            }
        }
    }
    ctx.staging.write_json("minimize.json", &summary)
}

pub fn tl1(ctx: &mut Ctx) -> Result<()> {
    let sec = section(&ctx.config.tl1, "tl1")?.clone();
    let cloud = load_cloud(ctx)?;
    let mu_n = load_labels(ctx, &sec.labels, &cloud)?;
    let dom: &BoxDomain = sec.target.domain();
    let rho = match &sec.density {
        Some(k) => DensitySpec::new(k.clone(), dom)?,
        None => DensitySpec::uniform(dom),
    };
    let seed = ctx.seed("tl1", SEED_TL1);
    let m = sec.m.unwrap_or(cloud.n());
    let r = tl1_distance(&cloud, &mu_n, ContinuumLabel::Polyhedral(&sec.target), &rho, sec.method, sec.reference, m, seed)?;
    ctx.staging.write_json("tl1.json", &r)
}

pub fn rate(ctx: &mut Ctx) -> Result<()> {
    let sec = section(&ctx.config.rate, "rate")?.clone();
    let d = sec.mu.domain().dim();
    let base_seed = ctx.seed("rate", SEED_RATE);
    let cfg = RateConfig {
        kernel: kernel(ctx, d)?,
        mu: sec.mu,
        ns: sec.ns,
        epsilons: sec.epsilons,
        replications: sec.replications,
        base_seed,
        extended: sec.extended,
        quad: sec.quad,
        v_samples: sec.v_samples,
    };
    let report = mc_mse(&cfg)?;
    let mut csv = vec![];
    report.write_csv(&mut csv)?;
    ctx.staging.write("rate.csv", &csv)?;
    ctx.staging.write_json("rate.json", &report)
}

pub fn aniso(ctx: &mut Ctx) -> Result<()> {
    let sec = section(&ctx.config.aniso, "aniso")?.clone();
    if ctx.config.cloud.is_none() {
        bail!("aniso needs a [cloud] section (e.g. source = \"aniso-clusters\")");
    }
    let cloud = load_cloud(ctx)?;
    if cloud.dim() != 2 {
        bail!("aniso needs a 2-d cloud");
    }
    let (m1, m2) = fixtures::aniso_labels(&cloud, sec.c1, sec.c2);
    let (l1, l2) = (LabelFunction::from_bools(&m1), LabelFunction::from_bools(&m2));
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["alpha", "energy_mu1", "energy_mu2", "delta_energy"])?;
    let mut deltas = vec![];
    for &alpha in &sec.alphas {
        // the weights vanish along one axis at the ends of the sweep
        let g = build_graph_all_pairs(&cloud, &fixtures::aniso_kernel(alpha), sec.eps)?;
        let e1 = gl_energy(&g, &l1, &sec.well, sec.eps)?;
        let e2 = gl_energy(&g, &l2, &sec.well, sec.eps)?;
        let de = delta_energy(&g, &l1, &l2, &sec.well, sec.eps)?;
        w.write_record([alpha.to_string(), e1.to_string(), e2.to_string(), de.to_string()])?;
        deltas.push(de);
    }
    let signs: Vec<f64> = deltas.iter().filter(|d| **d != 0.0).map(|d| d.signum()).collect();
    let changes = signs.windows(2).filter(|p| p[0] != p[1]).count();
    let favoured = |d: f64| if d > 0.0 { "mu2" } else if d < 0.0 { "mu1" } else { "tie" };
    ctx.staging.write("aniso.csv", &w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    ctx.staging.write_json(
        "aniso.json",
        &json!({
            "sign_changes": changes,
            "favoured_first": deltas.first().map(|d| favoured(*d)),
            "favoured_last": deltas.last().map(|d| favoured(*d)),
            "mu1": format!("1{{x2 <= {}}}", sec.c1),
            "mu2": format!("1{{x1 <= {}}}", sec.c2),
        }),
    )
}

