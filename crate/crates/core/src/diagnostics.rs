//! Posterior summarization, convergence assessment, and simulation-study
//! scoring.
//!
//! Summaries pool all retained draws across chains. Convergence is measured
//! by the corrected potential scale reduction factor computed from
//! between-chain and within-chain variances with its sampling-variability
//! degrees-of-freedom adjustment. Monte Carlo standard errors come from
//! batch means with sqrt(n) batches. Quantiles use the empirical inverse
//! CDF with linear interpolation, so an equal-tailed 95% interval is the
//! interpolated 2.5% and 97.5% order statistics.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::histories::{classify, ObservedClass};
use crate::model::{xi, Hyper, PriorConfig, Theta};
use crate::sampler::Chain;
use crate::scalar::{sigmoid, Real};
use crate::simulator::simulate_captured_individual;

/// Linear-interpolation empirical quantile of an ascending-sorted sample:
/// position h = (n - 1) q, interpolating between the bracketing order
/// statistics.
pub fn quantile<F: Real>(sorted: &[F], q: F) -> F {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = F::of((n - 1) as f64) * q.max(F::zero()).min(F::one());
    let lo = h.floor().as_f64() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - F::of(lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Batch-means Monte Carlo standard error of the sample mean with
/// b = floor(sqrt(n)) batches of length floor(n / b), dropping the earliest
/// draws that do not fill a batch. Sequences too short to batch fall back
/// to sd / sqrt(n).
pub fn batch_means_mcse<F: Real>(draws: &[F]) -> F {
    let n = draws.len();
    let b = (n as f64).sqrt().floor() as usize;
    if b < 2 {
        if n < 2 {
            return F::zero();
        }
        return (sample_variance(draws) / F::of(n as f64)).sqrt();
    }
    let len = n / b;
    let trimmed = &draws[n - b * len..];
    let means: Vec<F> = trimmed
        .chunks_exact(len)
        .map(|c| c.iter().copied().sum::<F>() / F::of(len as f64))
        .collect();
    let grand = means.iter().copied().sum::<F>() / F::of(b as f64);
    let ss: F = means.iter().map(|&m| (m - grand) * (m - grand)).sum();
    (ss / F::of((b * (b - 1)) as f64)).sqrt()
}

fn sample_mean<F: Real>(draws: &[F]) -> F {
    draws.iter().copied().sum::<F>() / F::of(draws.len() as f64)
}

fn sample_variance<F: Real>(draws: &[F]) -> F {
    let mean = sample_mean(draws);
    draws
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<F>()
        / F::of((draws.len() - 1) as f64)
}

fn sample_cov<F: Real>(a: &[F], b: &[F]) -> F {
    let (ma, mb) = (sample_mean(a), sample_mean(b));
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - ma) * (y - mb))
        .sum::<F>()
        / F::of((a.len() - 1) as f64)
}

/// Corrected potential scale reduction factor over per-chain draws of one
/// parameter. Returns (psrf, degenerate); degenerate runs (a single chain,
/// or no within-chain variance) report 1.0 with the flag set.
fn psrf_columns<F: Real>(cols: &[&[F]]) -> (F, bool) {
    let m = cols.len();
    if m < 2 {
        return (F::one(), true);
    }
    let n = cols[0].len();
    if n < 2 {
        return (F::one(), true);
    }
    let nf = F::of(n as f64);
    let mf = F::of(m as f64);
    let means: Vec<F> = cols.iter().map(|c| sample_mean(c)).collect();
    let vars: Vec<F> = cols.iter().map(|c| sample_variance(c)).collect();
    let grand = sample_mean(&means);
    let w = sample_mean(&vars);
    if !(w > F::zero()) || !w.is_finite() {
        return (F::one(), true);
    }
    let b = nf * sample_variance(&means);
    let sig2 = (nf - F::one()) / nf * w + b / nf;
    let vhat = sig2 + b / (mf * nf);
    // sampling variance of vhat for the degrees-of-freedom correction
    let means_sq: Vec<F> = means.iter().map(|&x| x * x).collect();
    let var_w = sample_variance(&vars) / mf;
    let var_b = F::of(2.0) * b * b / (mf - F::one());
    let cov_wb = nf / mf
        * (sample_cov(&vars, &means_sq) - F::of(2.0) * grand * sample_cov(&vars, &means));
    let c1 = (nf - F::one()) / nf;
    let c2 = (mf + F::one()) / (mf * nf);
    let var_v = c1 * c1 * var_w + c2 * c2 * var_b
        + F::of(2.0) * (mf + F::one()) * (nf - F::one()) / (mf * nf * nf) * cov_wb;
    let ratio = vhat / w;
    let corr = if var_v > F::zero() && var_v.is_finite() && vhat > F::zero() {
        let d = F::of(2.0) * vhat * vhat / var_v;
        (d + F::of(3.0)) / (d + F::one())
    } else {
        F::one()
    };
    ((corr * ratio).sqrt(), false)
}

/// Summary of one scalar parameter's pooled posterior draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary<F> {
    pub name: String,
    pub mean: F,
    pub sd: F,
    /// 2.5% quantile of the pooled draws.
    pub lower: F,
    /// 97.5% quantile of the pooled draws.
    pub upper: F,
    pub psrf: F,
    /// True when the PSRF was not computable (one chain, or no variance).
    pub psrf_degenerate: bool,
    pub mcse: F,
    pub ess: F,
}

impl<F: Real> ParamSummary<F> {
    pub fn width(&self) -> F {
        self.upper - self.lower
    }

    pub fn covers(&self, truth: F) -> bool {
        self.lower <= truth && truth <= self.upper
    }
}

/// Per-parameter posterior summaries in chain column order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary<F> {
    params: Vec<ParamSummary<F>>,
}

impl<F: Real> PosteriorSummary<F> {
    pub fn new(params: Vec<ParamSummary<F>>) -> Result<PosteriorSummary<F>> {
        for p in &params {
            if p.lower > p.upper {
                return Err(Error::InvalidParameter(format!(
                    "interval for {} is inverted",
                    p.name
                )));
            }
        }
        Ok(PosteriorSummary { params })
    }

    pub fn params(&self) -> &[ParamSummary<F>] {
        &self.params
    }

    pub fn get(&self, name: &str) -> Option<&ParamSummary<F>> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Summarize chains of one fit: pooled moments and quantiles, per-parameter
/// PSRF across chains, and batch-means Monte Carlo errors combined over
/// chains. All chains must share columns and retained length.
pub fn summarize<F: Real>(chains: &[Chain<F>]) -> Result<PosteriorSummary<F>> {
    let first = chains.first().ok_or(Error::EmptyData)?;
    if first.is_empty() {
        return Err(Error::EmptyData);
    }
    for c in chains {
        if c.names() != first.names() {
            return Err(Error::InvalidParameter(
                "chains disagree on parameter columns".to_string(),
            ));
        }
        if c.len() != first.len() {
            return Err(Error::ChainLengthMismatch(c.len(), first.len()));
        }
    }
    let n_total = chains.len() * first.len();
    let mut params = Vec::with_capacity(first.names().len());
    for (j, name) in first.names().iter().enumerate() {
        let cols: Vec<&[F]> = chains.iter().map(|c| c.col_at(j)).collect();
        let mut pooled = Vec::with_capacity(n_total);
        for c in &cols {
            pooled.extend_from_slice(c);
        }
        let mean = sample_mean(&pooled);
        let var = if pooled.len() > 1 {
            sample_variance(&pooled)
        } else {
            F::zero()
        };
        let mut sorted = pooled;
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite draw"));
        let (psrf, degenerate) = psrf_columns(&cols);
        let mcse_sq: F = cols
            .iter()
            .map(|c| {
                let m = batch_means_mcse(c);
                m * m
            })
            .sum();
        let mcse = mcse_sq.sqrt() / F::of(cols.len() as f64);
        let ess = if var > F::zero() && mcse > F::zero() {
            var / (mcse * mcse)
        } else {
            F::of(n_total as f64)
        };
        params.push(ParamSummary {
            name: name.clone(),
            mean,
            sd: var.sqrt(),
            lower: quantile(&sorted, F::of(0.025)),
            upper: quantile(&sorted, F::of(0.975)),
            psrf,
            psrf_degenerate: degenerate,
            mcse,
            ess,
        });
    }
    PosteriorSummary::new(params)
}

/// Generating values of one replicate, indexed as the chain columns are:
/// survival, recruitment, and growth per occasion gap.
#[derive(Debug, Clone)]
pub struct ReplicateTruth<F> {
    pub phi: Vec<F>,
    pub recruitment: Vec<F>,
    pub growth: Vec<F>,
}

impl<F: Real> ReplicateTruth<F> {
    pub fn from_theta(theta: &Theta<F>) -> ReplicateTruth<F> {
        ReplicateTruth {
            phi: theta.phi.clone(),
            recruitment: theta.gamma.clone(),
            growth: crate::model::growth_rate(theta),
        }
    }
}

/// Scores of one parameter family across a study.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyScore<F> {
    pub mse: F,
    pub median_width: F,
    pub coverage: F,
    /// Intervals scored (replicates times occasions).
    pub n: usize,
}

/// Per-family study scores, with mean squared error of the posterior mean,
/// median credible-interval width, and empirical 95% coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyScore<F> {
    pub phi: FamilyScore<F>,
    pub recruitment: FamilyScore<F>,
    pub growth: FamilyScore<F>,
}

impl<F: Real> StudyScore<F> {
    /// MSE of each family relative to a reference model's MSE, ordered
    /// (phi, recruitment, growth).
    pub fn relative_mse(&self, reference: &StudyScore<F>) -> [F; 3] {
        [
            self.phi.mse / reference.phi.mse,
            self.recruitment.mse / reference.recruitment.mse,
            self.growth.mse / reference.growth.mse,
        ]
    }
}

fn score_family<F: Real>(
    reps: &[(ReplicateTruth<F>, PosteriorSummary<F>)],
    prefix: &str,
    truth_of: impl Fn(&ReplicateTruth<F>) -> &[F],
) -> Result<FamilyScore<F>> {
    let mut sq = F::zero();
    let mut covered = 0usize;
    let mut widths = Vec::new();
    for (truth, summary) in reps {
        let values = truth_of(truth);
        for (i, &tv) in values.iter().enumerate() {
            let name = format!("{prefix}_{}", i + 1);
            let p = summary
                .get(&name)
                .ok_or_else(|| Error::MissingParameter(name.clone()))?;
            let err = p.mean - tv;
            sq = sq + err * err;
            if p.covers(tv) {
                covered += 1;
            }
            widths.push(p.width());
        }
    }
    if widths.is_empty() {
        return Err(Error::EmptyData);
    }
    widths.sort_by(|a, b| a.partial_cmp(b).expect("non-finite width"));
    let n = widths.len();
    Ok(FamilyScore {
        mse: sq / F::of(n as f64),
        median_width: quantile(&widths, F::of(0.5)),
        coverage: F::of(covered as f64) / F::of(n as f64),
        n,
    })
}

/// Score a simulation study: mean squared error of posterior means, median
/// interval width, and 95% interval coverage per family, pooling occasions
/// and replicates.
pub fn score_study<F: Real>(
    reps: &[(ReplicateTruth<F>, PosteriorSummary<F>)],
) -> Result<StudyScore<F>> {
    if reps.is_empty() {
        return Err(Error::EmptyData);
    }
    Ok(StudyScore {
        phi: score_family(reps, "phi", |t| &t.phi)?,
        recruitment: score_family(reps, "gamma", |t| &t.recruitment)?,
        growth: score_family(reps, "lambda", |t| &t.growth)?,
    })
}

/// Rejection-sampling setup for the prior distribution of N given the shape
/// of an observed dataset.
#[derive(Debug, Clone)]
pub struct PriorPredictiveConfig<F> {
    pub t: usize,
    /// Conditioning event: simulated datasets must produce exactly this many
    /// observed histories.
    pub observed_total: u64,
    /// Conditioning event: at least this many captured individuals.
    pub min_n: u64,
    pub prior: PriorConfig<F>,
    pub n_draws: usize,
    pub max_attempts: u64,
    /// Restrict the event probabilities instead of drawing them from the
    /// flat Dirichlet prior.
    pub fixed_rho: Option<[F; 4]>,
}

/// Accepted draws of N from the conditioned prior predictive.
#[derive(Debug, Clone)]
pub struct PriorPredictiveN {
    pub draws: Vec<u64>,
    pub attempts: u64,
}

impl PriorPredictiveN {
    pub fn acceptance_rate(&self) -> f64 {
        self.draws.len() as f64 / self.attempts as f64
    }
}

fn draw_prior_theta<F: Real, R: Rng>(cfg: &PriorPredictiveConfig<F>, rng: &mut R) -> Theta<F> {
    let normal = |loc: F, var: F, rng: &mut R| {
        loc + var.sqrt() * F::of(rng.sample::<f64, _>(StandardNormal))
    };
    let half_t = |df: F, scale: F, rng: &mut R| {
        let t: f64 = StudentT::new(df.as_f64()).unwrap().sample(rng);
        scale * F::of(t.abs())
    };
    let p = &cfg.prior;
    let hyper = Hyper {
        mu_phi: normal(p.mu_phi_prior.0, p.mu_phi_prior.1, rng),
        sigma_phi: half_t(p.sigma_df, p.sigma_scale, rng),
        mu_p: normal(p.mu_p_prior.0, p.mu_p_prior.1, rng),
        sigma_p: half_t(p.sigma_df, p.sigma_scale, rng),
        mu_gamma: normal(p.mu_gamma_prior.0, p.mu_gamma_prior.1, rng),
        sigma_gamma: half_t(p.sigma_df, p.sigma_scale, rng),
    };
    let var = |s: F| s * s;
    let phi: Vec<F> = (1..cfg.t)
        .map(|_| sigmoid(normal(hyper.mu_phi, var(hyper.sigma_phi), rng)))
        .collect();
    let pp: Vec<F> = (0..cfg.t)
        .map(|_| sigmoid(normal(hyper.mu_p, var(hyper.sigma_p), rng)))
        .collect();
    let gamma: Vec<F> = (1..cfg.t)
        .map(|_| normal(hyper.mu_gamma, var(hyper.sigma_gamma), rng).exp())
        .collect();
    let rho = cfg.fixed_rho.unwrap_or_else(|| {
        let mut g = [F::zero(); 4];
        let mut total = F::zero();
        for v in g.iter_mut() {
            *v = F::of(Gamma::new(1.0, 1.0).unwrap().sample(rng));
            total = total + *v;
        }
        [g[0] / total, g[1] / total, g[2] / total, g[3] / total]
    });
    Theta {
        phi,
        p: pp,
        gamma,
        rho,
        hyper,
    }
}

/// Draw from the prior distribution of N conditioned on the dataset shape:
/// simulate (N, theta) and the implied observed histories from the prior,
/// and keep N when the observed count hits `observed_total` with
/// N >= `min_n`. Fails if the attempt budget produces no acceptances.
pub fn prior_predictive_n<F: Real, R: Rng>(
    cfg: &PriorPredictiveConfig<F>,
    rng: &mut R,
) -> Result<PriorPredictiveN> {
    let mut draws = Vec::with_capacity(cfg.n_draws);
    let mut attempts = 0u64;
    while attempts < cfg.max_attempts && draws.len() < cfg.n_draws {
        attempts += 1;
        let theta = draw_prior_theta(cfg, rng);
        let n = rng.random_range(0..=cfg.prior.u_max);
        if n < cfg.min_n {
            continue;
        }
        let xis = xi(&theta);
        let mut observed = 0u64;
        for _ in 0..n {
            let h = simulate_captured_individual(&theta, &xis, rng);
            observed += match classify(&h)? {
                ObservedClass::Unobservable => 2,
                _ => 1,
            };
            if observed > cfg.observed_total {
                break;
            }
        }
        if observed == cfg.observed_total {
            draws.push(n);
        }
    }
    if draws.is_empty() {
        return Err(Error::NoAcceptedDraws { attempts });
    }
    Ok(PriorPredictiveN { draws, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain_of(name: &str, draws: Vec<f64>) -> Chain<f64> {
        let sweeps = (1..=draws.len() as u64).collect();
        Chain::from_columns(vec![name.to_string()], sweeps, vec![draws]).unwrap()
    }

    #[test]
    fn quantiles_interpolate_order_statistics() {
        let sorted: Vec<f64> = (1..=40).map(|i| i as f64).collect();
        assert!((quantile(&sorted, 0.025) - 1.975).abs() < 1e-12);
        assert!((quantile(&sorted, 0.975) - 39.025).abs() < 1e-12);
        assert_eq!(quantile(&sorted, 0.0), 1.0);
        assert_eq!(quantile(&sorted, 1.0), 40.0);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
        let pair = [1.0f64, 3.0];
        assert!((quantile(&pair, 0.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn batch_means_matches_fixtures() {
        let y = [
            2.1f64, 1.9, 2.3, 2.0, 2.4, 2.2, 1.8, 2.1, 2.0, 2.5, 2.2, 1.9, 2.3, 2.1, 2.0, 2.2,
        ];
        assert!((batch_means_mcse(&y) - 0.017677669529663678).abs() < 1e-15);
        let y2 = [1.0f64, 2.0, 1.5, 1.8, 2.2, 1.1, 1.7, 1.9, 2.0, 1.4];
        assert!((batch_means_mcse(&y2) - 0.03333333333333329).abs() < 1e-15);
    }

    #[test]
    fn psrf_matches_fixture() {
        let a = [1.0f64, 1.2, 0.8, 1.1, 0.9, 1.3, 1.05, 0.95];
        let b = [1.4, 1.1, 1.2, 1.3, 1.15, 1.25, 1.35, 1.05];
        let c = [0.9, 0.85, 1.0, 0.95, 1.05, 0.9, 1.1, 0.8];
        let (psrf, degenerate) = psrf_columns(&[&a, &b, &c]);
        assert!(!degenerate);
        assert!((psrf - 1.8098673910438443).abs() < 1e-12, "psrf {psrf}");
    }

    #[test]
    fn psrf_degenerate_cases_flag() {
        let flat = [2.0; 6];
        let (v, flag) = psrf_columns(&[&flat, &flat]);
        assert_eq!(v, 1.0);
        assert!(flag);
        let single = [1.0, 2.0, 3.0];
        let (v, flag) = psrf_columns::<f64>(&[&single]);
        assert_eq!(v, 1.0);
        assert!(flag);
    }

    #[test]
    fn psrf_near_one_for_iid_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..10_000)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let (psrf, degenerate) = psrf_columns(&[&a[..], &b[..]]);
        assert!(!degenerate);
        assert!((0.98..1.05).contains(&psrf), "psrf {psrf}");
    }

    #[test]
    fn summarize_pools_chains_and_reports_intervals() {
        let y = vec![
            2.1, 1.9, 2.3, 2.0, 2.4, 2.2, 1.8, 2.1, 2.0, 2.5, 2.2, 1.9, 2.3, 2.1, 2.0, 2.2,
        ];
        let s = summarize(&[chain_of("x", y.clone())]).unwrap();
        let p = s.get("x").unwrap();
        assert!(p.psrf_degenerate);
        assert!((p.mean - 2.125).abs() < 1e-12);
        assert!((p.mcse - 0.017677669529663678).abs() < 1e-15);
        assert!((p.ess - 117.33333333333346).abs() < 1e-9);
        assert!((p.lower - 1.8375).abs() < 1e-12);
        assert!((p.upper - 2.4625).abs() < 1e-12);
        assert!(s.get("missing").is_none());
    }

    #[test]
    fn summarize_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..400).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
        };
        let (a, b) = (chain_of("x", draw(&mut rng)), chain_of("x", draw(&mut rng)));
        let s1 = summarize(&[a.clone(), b.clone()]).unwrap();
        let s2 = summarize(&[b, a]).unwrap();
        let (p1, p2) = (s1.get("x").unwrap(), s2.get("x").unwrap());
        assert!((p1.mean - p2.mean).abs() < 1e-12);
        assert!((p1.sd - p2.sd).abs() < 1e-12);
        assert_eq!(p1.lower, p2.lower);
        assert_eq!(p1.upper, p2.upper);
        assert!((p1.psrf - p2.psrf).abs() < 1e-12);
    }

    #[test]
    fn summarize_validates_inputs() {
        assert!(summarize::<f64>(&[]).is_err());
        let a = chain_of("x", vec![1.0, 2.0]);
        let b = chain_of("y", vec![1.0, 2.0]);
        assert!(summarize(&[a.clone(), b]).is_err());
        let c = chain_of("x", vec![1.0, 2.0, 3.0]);
        assert!(summarize(&[a, c]).is_err());
    }

    fn summary_fixture(
        names: &[&str],
        means: &[f64],
        los: &[f64],
        his: &[f64],
    ) -> PosteriorSummary<f64> {
        let params = names
            .iter()
            .enumerate()
            .map(|(i, n)| ParamSummary {
                name: n.to_string(),
                mean: means[i],
                sd: 0.1,
                lower: los[i],
                upper: his[i],
                psrf: 1.0,
                psrf_degenerate: false,
                mcse: 0.01,
                ess: 100.0,
            })
            .collect();
        PosteriorSummary::new(params).unwrap()
    }

    #[test]
    fn score_study_matches_hand_fixture() {
        let names = ["phi_1", "phi_2", "gamma_1", "gamma_2", "lambda_1", "lambda_2"];
        let truth = |phi: [f64; 2]| ReplicateTruth {
            phi: phi.to_vec(),
            recruitment: phi.to_vec(),
            growth: phi.to_vec(),
        };
        // one family's worth of numbers reused for all three
        let reps = vec![
            (
                truth([0.8, 0.7]),
                summary_fixture(
                    &names,
                    &[0.82, 0.66, 0.82, 0.66, 0.82, 0.66],
                    &[0.70, 0.60, 0.70, 0.60, 0.70, 0.60],
                    &[0.90, 0.72, 0.90, 0.72, 0.90, 0.72],
                ),
            ),
            (
                truth([0.6, 0.9]),
                summary_fixture(
                    &names,
                    &[0.55, 0.95, 0.55, 0.95, 0.55, 0.95],
                    &[0.40, 0.80, 0.40, 0.80, 0.40, 0.80],
                    &[0.65, 1.10, 0.65, 1.10, 0.65, 1.10],
                ),
            ),
            (
                truth([0.75, 0.65]),
                summary_fixture(
                    &names,
                    &[0.80, 0.61, 0.80, 0.61, 0.80, 0.61],
                    &[0.60, 0.50, 0.60, 0.50, 0.60, 0.50],
                    &[0.85, 0.70, 0.85, 0.70, 0.85, 0.70],
                ),
            ),
        ];
        let score = score_study(&reps).unwrap();
        for fam in [&score.phi, &score.recruitment, &score.growth] {
            assert!((fam.mse - 0.00185).abs() < 1e-15);
            assert_eq!(fam.coverage, 1.0);
            assert!((fam.median_width - 0.225).abs() < 1e-12);
            assert_eq!(fam.n, 6);
        }
        let mut reference = score.clone();
        reference.phi.mse = score.phi.mse * 2.0;
        reference.recruitment.mse = score.recruitment.mse * 2.0;
        reference.growth.mse = score.growth.mse * 2.0;
        let rel = score.relative_mse(&reference);
        assert!(rel.iter().all(|&r| (r - 0.5).abs() < 1e-12));
    }

    #[test]
    fn score_study_flags_missing_parameters() {
        let truth = ReplicateTruth {
            phi: vec![0.8],
            recruitment: vec![0.2],
            growth: vec![1.0],
        };
        let s = summary_fixture(&["phi_1"], &[0.8], &[0.7], &[0.9]);
        assert!(matches!(
            score_study(&[(truth, s)]),
            Err(Error::MissingParameter(_))
        ));
    }

    #[test]
    fn conjugate_toy_coverage_is_calibrated() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut covered = 0;
        let reps = 200;
        for _ in 0..reps {
            let truth: f64 = rng.sample(StandardNormal);
            let y = truth + rng.sample::<f64, _>(StandardNormal);
            // posterior for a N(0,1) prior and one N(mu,1) observation
            let (post_mean, post_sd) = (y / 2.0, (0.5f64).sqrt());
            let chains: Vec<Chain<f64>> = (0..2)
                .map(|_| {
                    let draws: Vec<f64> = (0..500)
                        .map(|_| post_mean + post_sd * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    chain_of("mu", draws)
                })
                .collect();
            let s = summarize(&chains).unwrap();
            if s.get("mu").unwrap().covers(truth) {
                covered += 1;
            }
        }
        let coverage = covered as f64 / reps as f64;
        assert!(
            (0.92..=0.98).contains(&coverage),
            "coverage {coverage}"
        );
    }

    #[test]
    fn prior_predictive_rho_s_slice_pins_n() {
        let cfg = PriorPredictiveConfig {
            t: 4,
            observed_total: 7,
            min_n: 7,
            prior: PriorConfig::<f64>::with_u_max(10),
            n_draws: 40,
            max_attempts: 200_000,
            fixed_rho: Some([0.0, 0.0, 1.0, 0.0]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = prior_predictive_n(&cfg, &mut rng).unwrap();
        assert!(!out.draws.is_empty());
        assert!(out.draws.iter().all(|&n| n == 7));
        assert!(out.acceptance_rate() > 0.0);
    }

    #[test]
    fn prior_predictive_reports_failure() {
        let cfg = PriorPredictiveConfig {
            t: 3,
            observed_total: 5,
            min_n: 6,
            prior: PriorConfig::<f64>::with_u_max(20),
            n_draws: 10,
            max_attempts: 3000,
            fixed_rho: Some([0.0, 0.0, 1.0, 0.0]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        match prior_predictive_n(&cfg, &mut rng) {
            Err(Error::NoAcceptedDraws { attempts }) => assert_eq!(attempts, 3000),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn prior_predictive_respects_contribution_bounds() {
        let cfg = PriorPredictiveConfig {
            t: 4,
            observed_total: 6,
            min_n: 0,
            prior: PriorConfig::<f64>::with_u_max(12),
            n_draws: 60,
            max_attempts: 400_000,
            fixed_rho: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let out = prior_predictive_n(&cfg, &mut rng).unwrap();
        assert!(!out.draws.is_empty());
        // every individual contributes one or two observed histories
        assert!(out.draws.iter().all(|&n| (3..=6).contains(&n)));
    }
}
