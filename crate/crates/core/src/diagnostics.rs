//! Chain diagnostics: effective sample size, Monte Carlo standard errors,
//! and strategy-level efficiency comparison.
//!
//! Effective sample size uses the initial monotone positive sequence
//! estimator: empirical autocovariances are summed in adjacent pairs, the
//! pair sums are truncated at the first nonpositive value and forced
//! non-increasing, and the asymptotic variance follows from the truncated
//! sum. The estimate is clamped to `[0, n]`; a constant chain is reported
//! as zero effective samples with a degeneracy flag rather than an error.
//!
//! Efficiency of a sampling strategy is summarized as effective samples per
//! second of sampling time, minimized (and averaged) over parameters, with
//! fold changes quoted against the latent-state baseline when present.

use crate::error::{Error, Result};
use crate::math::variance;
use crate::mcmc::ChainOutput;

const MIN_CHAIN_LEN: usize = 10;

/// Effective sample size of one scalar chain.
#[derive(Debug, Clone, Copy)]
pub struct EssEstimate {
    pub ess: f64,
    /// True when the chain never moved, making the estimate vacuous.
    pub degenerate: bool,
}

/// Effective sample size by the initial monotone positive sequence method.
pub fn ess(samples: &[f64]) -> Result<EssEstimate> {
    let n = samples.len();
    if n < MIN_CHAIN_LEN {
        return Err(Error::ChainTooShort(format!(
            "{n} samples; effective sample size needs at least {MIN_CHAIN_LEN}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteChain);
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    // biased (divide by n) autocovariances, per the estimator's definition
    let gamma = |k: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - k {
            s += (samples[i] - mean) * (samples[i + k] - mean);
        }
        s / nf
    };
    let gamma0 = gamma(0);
    if gamma0 == 0.0 {
        return Ok(EssEstimate {
            ess: 0.0,
            degenerate: true,
        });
    }

    // pair sums of autocovariances, truncated and monotonized
    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = gamma(2 * m) + gamma(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        m += 1;
    }
    let asymptotic_var = -gamma0 + 2.0 * sum_pairs;
    let raw = if asymptotic_var > 0.0 {
        nf * gamma0 / asymptotic_var
    } else {
        nf
    };
    Ok(EssEstimate {
        ess: raw.clamp(0.0, nf),
        degenerate: false,
    })
}

/// Monte Carlo standard error of the chain mean.
pub fn mcse_mean(samples: &[f64]) -> Result<f64> {
    let est = ess(samples)?;
    if est.degenerate {
        return Ok(0.0);
    }
    Ok((variance(samples) / est.ess).sqrt())
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Per-parameter efficiency summary.
#[derive(Debug, Clone)]
pub struct ParamEfficiency {
    pub name: String,
    pub mean: f64,
    pub ess: f64,
    pub ess_per_second: f64,
    pub mcse: f64,
    pub degenerate: bool,
}

/// Efficiency of one chain under one strategy.
#[derive(Debug, Clone)]
pub struct EfficiencyReport {
    pub strategy: String,
    pub runtime_seconds: f64,
    pub iterations_kept: usize,
    pub discarded: usize,
    pub params: Vec<ParamEfficiency>,
}

impl EfficiencyReport {
    pub fn min_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).sum::<f64>() / self.params.len() as f64
    }

    pub fn max_ess(&self) -> f64 {
        self.params.iter().map(|p| p.ess).fold(0.0, f64::max)
    }

    pub fn min_esps(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.ess_per_second)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_esps(&self) -> f64 {
        self.params.iter().map(|p| p.ess_per_second).sum::<f64>() / self.params.len() as f64
    }

    /// Per-parameter rows as CSV (`name,mean,ess,esps,mcse`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,mean,ess,esps,mcse\n");
        for p in &self.params {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                p.name, p.mean, p.ess, p.ess_per_second, p.mcse
            ));
        }
        out
    }
}

/// Summarize a chain's sampling efficiency, discarding an initial fraction
/// of each parameter trace as warm-up.
pub fn efficiency_report(
    chain: &ChainOutput,
    strategy: &str,
    discard_fraction: f64,
) -> Result<EfficiencyReport> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::InvalidArgument(format!(
            "discard fraction {discard_fraction} outside [0, 1)"
        )));
    }
    let total = chain.iterations();
    let discarded = (total as f64 * discard_fraction).floor() as usize;
    let kept = total - discarded;
    if kept < MIN_CHAIN_LEN {
        return Err(Error::ChainTooShort(format!(
            "{kept} samples remain after discarding {discarded}"
        )));
    }
    let runtime = chain.runtime_seconds.max(1e-12);
    let mut params = Vec::with_capacity(chain.dim);
    for j in 0..chain.dim {
        let col = chain.column(j);
        let tail = &col[discarded..];
        let est = ess(tail)?;
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let mcse = if est.degenerate {
            0.0
        } else {
            (variance(tail) / est.ess).sqrt()
        };
        params.push(ParamEfficiency {
            name: chain.names[j].clone(),
            mean,
            ess: est.ess,
            ess_per_second: est.ess / runtime,
            mcse,
            degenerate: est.degenerate,
        });
    }
    Ok(EfficiencyReport {
        strategy: strategy.to_string(),
        runtime_seconds: chain.runtime_seconds,
        iterations_kept: kept,
        discarded,
        params,
    })
}

// ---------------------------------------------------------------------------
// Strategy comparison
// ---------------------------------------------------------------------------

/// One strategy's row in a comparison table.
#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub strategy: String,
    pub runtime_seconds: f64,
    pub min_ess: f64,
    pub mean_ess: f64,
    pub min_esps: f64,
    pub mean_esps: f64,
    /// Minimum effective samples per second relative to the baseline.
    pub fold_min_esps: f64,
}

/// Cross-strategy efficiency comparison with a common baseline.
#[derive(Debug, Clone)]
pub struct StrategyComparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Compare two or more efficiency reports over the same parameters. The
/// latent-state strategy is the fold-change baseline when present, else the
/// first report.
pub fn compare_strategies(reports: &[EfficiencyReport]) -> Result<StrategyComparison> {
    if reports.len() < 2 {
        return Err(Error::IncompatibleReports(
            "a comparison needs at least two strategy reports".into(),
        ));
    }
    let names: Vec<&str> = reports[0].params.iter().map(|p| p.name.as_str()).collect();
    for r in &reports[1..] {
        let other: Vec<&str> = r.params.iter().map(|p| p.name.as_str()).collect();
        if other != names {
            return Err(Error::IncompatibleReports(format!(
                "parameter sets differ between {} and {}",
                reports[0].strategy, r.strategy
            )));
        }
    }
    let baseline_idx = reports
        .iter()
        .position(|r| r.strategy == "LatentState")
        .unwrap_or(0);
    let base_esps = reports[baseline_idx].min_esps().max(1e-300);
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            strategy: r.strategy.clone(),
            runtime_seconds: r.runtime_seconds,
            min_ess: r.min_ess(),
            mean_ess: r.mean_ess(),
            min_esps: r.min_esps(),
            mean_esps: r.mean_esps(),
            fold_min_esps: r.min_esps() / base_esps,
        })
        .collect();
    Ok(StrategyComparison {
        baseline: reports[baseline_idx].strategy.clone(),
        rows,
    })
}

impl StrategyComparison {
    /// Machine-readable comparison (exact float round-trip formatting).
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("strategy,runtime_seconds,min_ess,mean_ess,min_esps,mean_esps,fold_min_esps\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.strategy,
                r.runtime_seconds,
                r.min_ess,
                r.mean_ess,
                r.min_esps,
                r.mean_esps,
                r.fold_min_esps
            ));
        }
        out
    }

    /// Human-readable aligned table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<20} {:>10} {:>10} {:>12} {:>12} {:>10}\n",
            "strategy", "min ESS", "mean ESS", "min ESS/s", "mean ESS/s", "fold"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<20} {:>10.1} {:>10.1} {:>12.2} {:>12.2} {:>9.1}x\n",
                r.strategy, r.min_ess, r.mean_ess, r.min_esps, r.mean_esps, r.fold_min_esps
            ));
        }
        out.push_str(&format!("baseline: {}\n", self.baseline));
        out
    }

    /// Plot-ready rows: `strategy,min,mean` of effective samples per second.
    pub fn figure_data(&self) -> String {
        let mut out = String::from("strategy,min,mean\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.strategy, r.min_esps, r.mean_esps));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcmc::{run_chain, FnTarget, McmcConfig, SamplerScheme, Target};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn iid_normal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut x: f64 = rng.sample(StandardNormal);
        let innov = (1.0 - rho * rho).sqrt();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(x);
            let e: f64 = rng.sample(StandardNormal);
            x = rho * x + innov * e;
        }
        out
    }

    #[test]
    fn iid_chain_has_ess_near_n() {
        let n = 100_000;
        let samples = iid_normal(n, 60);
        let est = ess(&samples).unwrap();
        assert!(!est.degenerate);
        let rel = (est.ess - n as f64).abs() / n as f64;
        assert!(rel < 0.15, "iid ESS {} for n {n}", est.ess);
    }

    #[test]
    fn ar1_chain_matches_theoretical_ess() {
        let n = 100_000;
        let rho = 0.9;
        let samples = ar1(n, rho, 61);
        let est = ess(&samples).unwrap();
        let theory = n as f64 * (1.0 - rho) / (1.0 + rho);
        let rel = (est.ess - theory).abs() / theory;
        assert!(rel < 0.25, "AR(1) ESS {} vs theory {theory}", est.ess);
    }

    #[test]
    fn constant_chain_is_degenerate_with_zero_ess() {
        let est = ess(&[2.5; 500]).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.ess, 0.0);
        assert_eq!(mcse_mean(&[2.5; 500]).unwrap(), 0.0);
    }

    #[test]
    fn ess_is_affine_invariant_and_reversal_invariant() {
        let samples = ar1(20_000, 0.7, 62);
        let base = ess(&samples).unwrap().ess;
        let scaled: Vec<f64> = samples.iter().map(|v| -3.0 * v + 7.0).collect();
        let rev: Vec<f64> = samples.iter().rev().copied().collect();
        let es = ess(&scaled).unwrap().ess;
        let er = ess(&rev).unwrap().ess;
        assert!((es - base).abs() / base < 1e-10, "affine: {es} vs {base}");
        assert!((er - base).abs() / base < 1e-10, "reversal: {er} vs {base}");
    }

    #[test]
    fn ess_is_clamped_to_chain_length() {
        // strongly antithetic sequence would estimate above n without a clamp
        let n = 2_000;
        let mut samples = iid_normal(n, 63);
        for (i, v) in samples.iter_mut().enumerate() {
            if i % 2 == 1 {
                *v = -*v;
            }
        }
        let est = ess(&samples).unwrap();
        assert!(est.ess <= n as f64 + 1e-9);
    }

    #[test]
    fn thinning_an_ar1_chain_roughly_preserves_ess() {
        // thinning by 2 squares the autocorrelation while halving n; for
        // rho = 0.9 the two effects nearly cancel
        let samples = ar1(100_000, 0.9, 64);
        let full = ess(&samples).unwrap().ess;
        let thinned: Vec<f64> = samples.iter().step_by(2).copied().collect();
        let thin = ess(&thinned).unwrap().ess;
        let rel = (thin - full).abs() / full;
        assert!(rel < 0.3, "full {full}, thinned {thin}");
    }

    #[test]
    fn short_and_non_finite_chains_error() {
        assert!(matches!(ess(&[1.0; 5]), Err(Error::ChainTooShort(_))));
        let mut bad = iid_normal(100, 65);
        bad[50] = f64::NAN;
        assert!(matches!(ess(&bad), Err(Error::NonFiniteChain)));
    }

    #[test]
    fn mcse_shrinks_like_inverse_sqrt_n() {
        let a = mcse_mean(&iid_normal(10_000, 66)).unwrap();
        let b = mcse_mean(&iid_normal(160_000, 66)).unwrap();
        // sqrt(16) = 4; allow wide slack for estimator noise
        let ratio = a / b;
        assert!(ratio > 2.5 && ratio < 6.5, "ratio {ratio}");
    }

    fn correlated_normal_target(rho: f64) -> impl Target {
        let det = 1.0 - rho * rho;
        FnTarget::new(2, move |x: &[f64]| {
            -(x[0] * x[0] - 2.0 * rho * x[0] * x[1] + x[1] * x[1]) / (2.0 * det)
        })
    }

    #[test]
    fn blocking_beats_univariate_on_strongly_correlated_targets() {
        let mut blocked_wins = 0;
        for seed in 0..10u64 {
            let target = correlated_normal_target(0.98);
            let config = McmcConfig::new(20_000, 100 + seed);
            let uni = run_chain(&target, &SamplerScheme::univariate(2), &config, &[0.0, 0.0]).unwrap();
            let blk = run_chain(&target, &SamplerScheme::single_block(2), &config, &[0.0, 0.0]).unwrap();
            let uni_rep = efficiency_report(&uni, "univariate", 0.1).unwrap();
            let blk_rep = efficiency_report(&blk, "blocked", 0.1).unwrap();
            if blk_rep.min_ess() > uni_rep.min_ess() {
                blocked_wins += 1;
            }
        }
        assert!(blocked_wins >= 8, "blocked won only {blocked_wins}/10");
    }

    #[test]
    fn report_invariants_and_comparison_table() {
        let target = correlated_normal_target(0.5);
        let config = McmcConfig::new(5_000, 70);
        let a = run_chain(&target, &SamplerScheme::univariate(2), &config, &[0.0, 0.0]).unwrap();
        let b = run_chain(&target, &SamplerScheme::single_block(2), &config, &[0.0, 0.0]).unwrap();
        let mut ra = efficiency_report(&a, "LatentState", 0.1).unwrap();
        let rb = efficiency_report(&b, "Filtering", 0.1).unwrap();
        assert!(ra.min_ess() <= ra.mean_ess() && ra.mean_ess() <= ra.max_ess());
        assert_eq!(ra.iterations_kept, 4_500);

        let cmp = compare_strategies(&[ra.clone(), rb.clone()]).unwrap();
        assert_eq!(cmp.baseline, "LatentState");
        assert_eq!(cmp.rows.len(), 2);
        assert!((cmp.rows[0].fold_min_esps - 1.0).abs() < 1e-12);
        let csv = cmp.to_csv();
        assert!(csv.starts_with("strategy,"));
        assert_eq!(csv.lines().count(), 3);
        let fig = cmp.figure_data();
        assert!(fig.starts_with("strategy,min,mean\n"));
        assert!(cmp.to_table().contains("baseline: LatentState"));

        assert!(matches!(
            compare_strategies(&[ra.clone()]),
            Err(Error::IncompatibleReports(_))
        ));
        ra.params[0].name = "other".into();
        assert!(matches!(
            compare_strategies(&[ra, rb]),
            Err(Error::IncompatibleReports(_))
        ));
    }

    #[test]
    fn report_rejects_bad_discard_fractions() {
        let target = correlated_normal_target(0.2);
        let config = McmcConfig::new(1_000, 71);
        let chain = run_chain(&target, &SamplerScheme::univariate(2), &config, &[0.0, 0.0]).unwrap();
        assert!(efficiency_report(&chain, "x", 1.0).is_err());
        assert!(efficiency_report(&chain, "x", -0.1).is_err());
        assert!(efficiency_report(&chain, "x", 0.999).is_err());
    }
}
