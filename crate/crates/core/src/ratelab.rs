//! Monte-Carlo harness for the bias and mean-square error of the graph total
//! variation against its continuum limit.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::continuum::{continuum_tv, surface_tension, Estimate, PolyhedralFunction, QuadSpec};
use crate::domain::{sample_points, DensitySpec};
use crate::error::{Error, Result};
use crate::graph::cross_weight_sum;
use crate::kernel::{sample_ball, InteractionKernel};
use crate::numeric::{derive_seed, mean_sd, ols, unit_ball_volume, CompensatedSum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub mu: PolyhedralFunction,
    pub kernel: InteractionKernel,
    pub ns: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub replications: usize,
    pub base_seed: u64,
    /// Allow kernels/domains outside the setting of the rate formulas; no
    /// predictions are produced then.
    #[serde(default)]
    pub extended: bool,
    #[serde(default)]
    pub quad: QuadSpec,
    /// Monte-Carlo samples for the constant `V`.
    #[serde(default = "default_v_samples")]
    pub v_samples: usize,
}

fn default_v_samples() -> usize {
    1_000_000
}

impl RateConfig {
    pub fn new(mu: PolyhedralFunction, ns: Vec<usize>, epsilons: Vec<f64>, replications: usize, base_seed: u64) -> Result<Self> {
        let d = mu.domain().dim();
        let c = RateConfig {
            mu,
            kernel: InteractionKernel::unit_ball(d),
            ns,
            epsilons,
            replications,
            base_seed,
            extended: false,
            quad: QuadSpec::default(),
            v_samples: default_v_samples(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidArgument("at least two replications are needed".into()));
        }
        if self.ns.is_empty() || self.epsilons.is_empty() {
            return Err(Error::InvalidArgument("n and eps grids must be nonempty".into()));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
        }
        if let Some(&e) = self.epsilons.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument(format!("eps must be positive, got {e}")));
        }
        let d = self.mu.domain().dim();
        if self.kernel.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.kernel.dim() });
        }
        self.kernel.validate()?;
        if !self.extended {
            let dom = self.mu.domain();
            let unit = (0..d).all(|a| dom.lower()[a] == 0.0 && dom.upper()[a] == 1.0);
            if !unit || self.kernel != InteractionKernel::unit_ball(d) {
                return Err(Error::InvalidArgument(
                    "rate formulas assume the unit box and the unit-ball indicator kernel; set `extended` for exploratory runs".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `(1/2) int int_{B x B} min(|z_d|, |y_d|) dz dy` by uniform sampling of
/// unit-ball pairs; `error` is one standard error.
pub fn constant_v(d: usize, mc_samples: usize, seed: u64) -> Result<Estimate> {
    if d == 0 || mc_samples < 2 {
        return Err(Error::InvalidArgument("constant_v needs d >= 1 and at least two samples".into()));
    }
    const CHUNK: usize = 1 << 16;
    let chunks = mc_samples.div_ceil(CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
            let (mut z, mut y) = (vec![0.0; d], vec![0.0; d]);
            let (mut s, mut s2) = (CompensatedSum::new(), CompensatedSum::new());
            let len = CHUNK.min(mc_samples - c * CHUNK);
            for _ in 0..len {
                sample_ball(&mut rng, 1.0, &mut z);
                sample_ball(&mut rng, 1.0, &mut y);
                let m = z[d - 1].abs().min(y[d - 1].abs());
                s.add(m);
                s2.add(m * m);
            }
            (s.value(), s2.value())
        })
        .collect();
    let n = mc_samples as f64;
    let sum: f64 = parts.iter().map(|p| p.0).sum();
    let sum2: f64 = parts.iter().map(|p| p.1).sum();
    let mean = sum / n;
    let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let scale = 0.5 * unit_ball_volume(d).powi(2);
    Ok(Estimate { value: scale * mean, error: scale * (var / n).sqrt() })
}

/// Unbiased graph TV of `mu` on one seeded uniform cloud.
pub fn unbiased_gtv_sample(mu: &PolyhedralFunction, k: &InteractionKernel, n: usize, eps: f64, seed: u64) -> Result<f64> {
    let dom = mu.domain();
    let cloud = sample_points(&DensitySpec::uniform(dom), dom, n, seed)?;
    let inside: Vec<bool> = cloud.points().map(|p| mu.contains(p)).collect();
    let s = cross_weight_sum(&cloud, &inside, k, eps)?;
    Ok(2.0 * s / (eps * n as f64 * (n as f64 - 1.0)))
}

/// Mean of the single-pair statistic `eps^{-1} eta_eps(X1 - X2) |mu(X1) - mu(X2)|`
/// under the uniform law, sampling `X2 = X1 + eps z` with `z` uniform on the
/// kernel's support ball.
pub fn pair_statistic_mean(mu: &PolyhedralFunction, k: &InteractionKernel, eps: f64, samples: usize, seed: u64) -> Result<Estimate> {
    let d = mu.domain().dim();
    let r = k.support_radius()?;
    let dom = mu.domain();
    let vol = unit_ball_volume(d) * r.powi(d as i32) * dom.volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut z, mut y) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut vals = Vec::with_capacity(samples);
    for _ in 0..samples {
        for a in 0..d {
            x[a] = rng.gen_range(dom.lower()[a]..dom.upper()[a]);
        }
        sample_ball(&mut rng, r, &mut z);
        for a in 0..d {
            y[a] = x[a] + eps * z[a];
        }
        let v = if dom.contains_strict(&y) {
            // density of X1 times density of X2, relative to the proposal
            let jump = (mu.value(&x) - mu.value(&y)).abs();
            vol * k.eta(&z) * jump / (eps * dom.volume() * dom.volume())
        } else {
            0.0
        };
        vals.push(v);
    }
    let (m, sd) = mean_sd(&vals);
    Ok(Estimate { value: m, error: sd / (samples as f64).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub eps: f64,
    pub replications: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub bias: f64,
    pub mse: f64,
    pub mse_se: f64,
    pub alpha: Option<f64>,
    /// `kappa1 / (n eps)`.
    pub kappa1_term: Option<f64>,
    /// `kappa2 / (n^2 eps^{d+1})`.
    pub kappa2_term: Option<f64>,
    /// Sum of the two leading terms.
    pub predicted_leading: Option<f64>,
    /// Full expansion including the alpha and `1/n` terms.
    pub predicted_full: Option<f64>,
    pub min_sample: f64,
    pub max_sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    pub log_eps: Vec<f64>,
    pub log_abs_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub tv: f64,
    pub tv_error: f64,
    pub sigma: f64,
    pub boundary_measure: f64,
    pub has_edges: bool,
    pub v_constant: Option<Estimate>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    /// `c` in the fitted bias model `alpha = c eps` (edge-bearing sets only).
    pub alpha_fit: Option<f64>,
    pub alpha_fitted: bool,
    pub slope: Option<SlopeFit>,
    pub bias_indistinguishable: bool,
    pub extended: bool,
    pub warnings: Vec<String>,
}

/// Per-cell samples, indexed `[n_index][eps_index][replication]`.
pub fn gtv_samples(config: &RateConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    config.validate()?;
    config
        .ns
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            config
                .epsilons
                .iter()
                .enumerate()
                .map(|(ei, &eps)| {
                    (0..config.replications)
                        .into_par_iter()
                        .map(|r| {
                            let seed = derive_seed(config.base_seed, &[ni as u64, ei as u64, r as u64]);
                            unbiased_gtv_sample(&config.mu, &config.kernel, n, eps, seed)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect()
        })
        .collect()
}

fn summarize(config: &RateConfig, samples: &[Vec<Vec<f64>>], with_mse_prediction: bool) -> Result<RateReport> {
    let d = config.mu.domain().dim();
    let rho = DensitySpec::uniform(config.mu.domain());
    let tv = continuum_tv(&config.mu, &rho, &config.kernel, &config.quad)?;
    let mut e1 = vec![0.0; d];
    e1[0] = 1.0;
    let sigma = surface_tension(&config.kernel, &e1, &config.quad)?.value;
    let mut warnings = vec![];
    let boundary = config.mu.boundary_measure();
    let has_edges = config.mu.has_edges();

    let mut rows = vec![];
    for (ni, &n) in config.ns.iter().enumerate() {
        for (ei, &eps) in config.epsilons.iter().enumerate() {
            let xs = &samples[ni][ei];
            let r = xs.len() as f64;
            let (mean, sd) = mean_sd(xs);
            let sq: Vec<f64> = xs.iter().map(|x| (x - tv.value).powi(2)).collect();
            let (mse, sq_sd) = mean_sd(&sq);
            rows.push(RateRow {
                n,
                eps,
                replications: xs.len(),
                mean,
                sd,
                se: sd / r.sqrt(),
                bias: mean - tv.value,
                mse,
                mse_se: sq_sd / r.sqrt(),
                alpha: None,
                kappa1_term: None,
                kappa2_term: None,
                predicted_leading: None,
                predicted_full: None,
                min_sample: xs.iter().copied().fold(f64::INFINITY, f64::min),
                max_sample: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }

    let bias_indistinguishable = rows.iter().all(|r| r.se > r.bias.abs());
    if bias_indistinguishable {
        warnings.push("bias indistinguishable from noise at every grid point".into());
    }

    let n_max = *config.ns.iter().max().unwrap();
    let at_max: Vec<&RateRow> = rows.iter().filter(|r| r.n == n_max).collect();
    let slope = if at_max.len() >= 2 && at_max.iter().all(|r| r.bias != 0.0) {
        let lx: Vec<f64> = at_max.iter().map(|r| r.eps.ln()).collect();
        let ly: Vec<f64> = at_max.iter().map(|r| r.bias.abs().ln()).collect();
        let (s, b) = ols(&lx, &ly);
        Some(SlopeFit { n: n_max, slope: s, intercept: b, log_eps: lx, log_abs_bias: ly })
    } else {
        None
    };

    // alpha: exactly zero without edges, otherwise a through-origin fit of bias on eps
    let (alpha_fit, alpha_fitted) = if has_edges {
        let num: f64 = rows.iter().map(|r| r.bias * r.eps).sum();
        let den: f64 = rows.iter().map(|r| r.eps * r.eps).sum();
        warnings.push("alpha_n for an edge-bearing set is a fitted c*eps, not a closed form".into());
        (Some(num / den), true)
    } else {
        (None, false)
    };

    let mut v_constant = None;
    let (mut kappa1, mut kappa2) = (None, None);
    if config.extended {
        warnings.push("extended run: no predicted values".into());
    } else if with_mse_prediction {
        let v = constant_v(d, config.v_samples, derive_seed(config.base_seed, &[u64::MAX]))?;
        let k1 = 4.0 * boundary * v.value;
        let k2 = 2.0 * tv.value;
        for row in rows.iter_mut() {
            let (n, eps) = (row.n as f64, row.eps);
            let alpha = alpha_fit.map_or(0.0, |c| c * eps);
            let t1 = k1 / (n * eps);
            let t2 = k2 / (n * n * eps.powi(d as i32 + 1));
            let nn = n * (n - 1.0);
            let full = -2.0 * alpha * tv.value
                + 4.0 * (n - 2.0) * boundary * v.value / (nn * eps)
                + 2.0 * tv.value / (nn * eps.powi(d as i32 + 1))
                + (n - 2.0) * (n - 3.0) * alpha * alpha / nn
                + (6.0 - 4.0 * n) * tv.value * tv.value / nn;
            row.alpha = Some(alpha);
            row.kappa1_term = Some(t1);
            row.kappa2_term = Some(t2);
            row.predicted_leading = Some(t1 + t2);
            row.predicted_full = Some(full);
        }
        v_constant = Some(v);
        kappa1 = Some(k1);
        kappa2 = Some(k2);
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(RateReport {
        rows,
        tv: tv.value,
        tv_error: tv.error,
        sigma,
        boundary_measure: boundary,
        has_edges,
        v_constant,
        kappa1,
        kappa2,
        alpha_fit,
        alpha_fitted,
        slope,
        bias_indistinguishable,
        extended: config.extended,
        warnings,
    })
}

/// Bias of the unbiased graph TV per `(n, eps)` and the log-log slope of
/// `|bias|` against `eps` at the largest `n`.
pub fn mc_bias(config: &RateConfig) -> Result<RateReport> {
    let s = gtv_samples(config)?;
    summarize(config, &s, false)
}

/// As [`mc_bias`], with measured MSE and the predicted expansion filled in.
pub fn mc_mse(config: &RateConfig) -> Result<RateReport> {
    let s = gtv_samples(config)?;
    summarize(config, &s, true)
}

/// Both reports from one set of samples.
pub fn rate_report(config: &RateConfig) -> Result<RateReport> {
    mc_mse(config)
}

impl RateReport {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::BoxDomain;

    #[test]
    fn v_constant_one_dimension() {
        let v = constant_v(1, 1_000_000, 1).unwrap();
        assert!((v.value - 2.0 / 3.0).abs() < 3.0 * v.error, "{v:?}");
    }

    #[test]
    fn v_constant_two_seeds_agree() {
        let a = constant_v(2, 400_000, 1).unwrap();
        let b = constant_v(2, 400_000, 2).unwrap();
        assert!((a.value - b.value).abs() < 3.0 * (a.error.hypot(b.error)));
    }

    #[test]
    fn empty_set_has_zero_bias_and_mse() {
        let dom = BoxDomain::unit(2);
        let cfg = RateConfig::new(PolyhedralFunction::empty(&dom), vec![200], vec![0.2], 3, 0).unwrap();
        let r = mc_mse(&cfg).unwrap();
        assert_eq!(r.tv, 0.0);
        assert_eq!(r.rows[0].bias, 0.0);
        assert_eq!(r.rows[0].mse, 0.0);
    }

    #[test]
    fn config_validation() {
        let dom = BoxDomain::unit(2);
        let hs = PolyhedralFunction::half_space(&dom, 0, 0.5).unwrap();
        assert!(RateConfig::new(hs.clone(), vec![100], vec![0.1], 1, 0).is_err());
        assert!(RateConfig::new(hs.clone(), vec![], vec![0.1], 4, 0).is_err());
        let other = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let hs2 = PolyhedralFunction::half_space(&other, 0, 1.0).unwrap();
        assert!(RateConfig::new(hs2, vec![100], vec![0.1], 4, 0).is_err());
    }

    #[test]
    fn samples_are_reproducible() {
        let dom = BoxDomain::unit(2);
        let hs = PolyhedralFunction::half_space(&dom, 0, 0.5).unwrap();
        let cfg = RateConfig::new(hs, vec![300], vec![0.1, 0.2], 4, 9).unwrap();
        let a = gtv_samples(&cfg).unwrap();
        let b = gtv_samples(&cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0][0][0], a[0][0][1]);
    }

    #[test]
    fn pair_statistic_matches_half_space_expectation() {
        // For a half-space in the unit square the exact mean is 4/3 - eps/2.
        let dom = BoxDomain::unit(2);
        let hs = PolyhedralFunction::half_space(&dom, 0, 0.5).unwrap();
        let eps = 0.1;
        let e = pair_statistic_mean(&hs, &InteractionKernel::unit_ball(2), eps, 400_000, 3).unwrap();
        assert!((e.value - (4.0 / 3.0 - eps / 2.0)).abs() < 4.0 * e.error, "{e:?}");
    }
}
