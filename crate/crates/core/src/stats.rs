//! Streaming moments and the batched Monte Carlo driver shared by every
//! estimator.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::sim::RngStream;

const Z_95: f64 = 1.96;

/// Single-pass mean/variance accumulator (Welford update, Chan merge).
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Accumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = (self.n + other.n) as f64;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n;
        self.n += other.n;
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero until two values have been seen.
    pub fn sample_variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Half-length of the normal-approximation 95% confidence interval.
    /// Infinite until two values have been seen, so convergence checks
    /// cannot fire on a single sample.
    pub fn ci_half(&self) -> f64 {
        if self.n < 2 {
            f64::INFINITY
        } else {
            Z_95 * (self.sample_variance() / self.n as f64).sqrt()
        }
    }
}

/// One Monte Carlo draw: the score, how many simulated events it cost, and
/// an optional diagnostic line for dump files.
#[derive(Clone, Debug)]
pub struct Sample {
    pub score: f64,
    pub jumps: u64,
    pub diag: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Stop once ci_half <= rel_target * |estimate|.
    pub rel_target: f64,
    pub n_min: u64,
    pub n_max: u64,
    pub batch: u64,
    pub workers: usize,
    pub seed: u64,
    pub collect_diag: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rel_target: 0.05,
            n_min: 100,
            n_max: 50_000_000,
            batch: 100,
            workers: 1,
            seed: 12345,
            collect_diag: false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub method: String,
    pub theta: f64,
    #[serde(rename = "T")]
    pub t_horizon: f64,
    pub estimate: f64,
    pub ci_half: f64,
    pub n: u64,
    pub sample_variance: f64,
    pub mean_jumps: f64,
    pub wall_seconds: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

impl EstimateReport {
    pub fn csv_header() -> &'static str {
        "method,theta,T,estimate,ci_half,n,variance,seconds"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.theta,
            self.t_horizon,
            self.estimate,
            self.ci_half,
            self.n,
            self.sample_variance,
            self.wall_seconds
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A finished run: the report plus any per-sample diagnostic lines, in
/// sample order.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: EstimateReport,
    pub diag: Vec<String>,
}

/// Labels carried into the report; the driver itself never inspects them.
#[derive(Clone, Copy, Debug)]
pub struct RunMeta<'a> {
    pub method: &'a str,
    pub theta: f64,
    pub t_horizon: f64,
}

/// Runs `count` samples with stream ids start..start+count split into one
/// contiguous chunk per worker, merging results in worker order so the
/// outcome depends only on (seed, workers).
fn run_chunk<F>(
    sampler: &F,
    seed: u64,
    start: u64,
    count: u64,
    workers: usize,
    collect_diag: bool,
) -> Result<(Accumulator, Accumulator, Vec<String>)>
where
    F: Fn(RngStream) -> Result<Sample> + Sync,
{
    let run_range = |lo: u64, hi: u64| -> Result<(Accumulator, Accumulator, Vec<String>)> {
        let mut scores = Accumulator::new();
        let mut jumps = Accumulator::new();
        let mut diag = Vec::new();
        for i in lo..hi {
            let s = sampler(RngStream::new(seed, i))?;
            scores.push(s.score);
            jumps.push(s.jumps as f64);
            if collect_diag {
                diag.extend(s.diag);
            }
        }
        Ok((scores, jumps, diag))
    };
    if workers <= 1 || count < 2 {
        return run_range(start, start + count);
    }
    let per = count.div_ceil(workers as u64);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers as u64)
            .filter_map(|w| {
                let lo = start + w * per;
                let hi = (lo + per).min(start + count);
                (lo < hi).then(|| scope.spawn(move || run_range(lo, hi)))
            })
            .collect();
        let mut scores = Accumulator::new();
        let mut jumps = Accumulator::new();
        let mut diag = Vec::new();
        for h in handles {
            let (s, j, d) = h.join().expect("sampler thread panicked")?;
            scores.merge(&s);
            jumps.merge(&j);
            diag.extend(d);
        }
        Ok((scores, jumps, diag))
    })
}

/// Draws batches until the relative precision target is met (after at
/// least n_min samples) or n_max samples have been spent, whichever comes
/// first. Deterministic for a fixed (seed, workers) pair.
pub fn run_until_target<F>(sampler: F, cfg: &RunConfig, meta: RunMeta) -> Result<RunOutput>
where
    F: Fn(RngStream) -> Result<Sample> + Sync,
{
    assert!(cfg.batch >= 1 && cfg.workers >= 1, "degenerate run config");
    let started = Instant::now();
    let n_min = cfg.n_min.min(cfg.n_max);
    let mut scores = Accumulator::new();
    let mut jumps = Accumulator::new();
    let mut diag = Vec::new();
    let mut converged = false;
    while scores.n() < cfg.n_max {
        let count = cfg.batch.min(cfg.n_max - scores.n());
        let (s, j, d) = run_chunk(
            &sampler,
            cfg.seed,
            scores.n(),
            count,
            cfg.workers,
            cfg.collect_diag,
        )?;
        scores.merge(&s);
        jumps.merge(&j);
        diag.extend(d);
        if scores.n() >= n_min && scores.ci_half() <= cfg.rel_target * scores.mean().abs() {
            converged = true;
            break;
        }
    }
    let flag = (!converged).then(|| {
        format!(
            "precision target {} not reached within {} samples",
            cfg.rel_target, cfg.n_max
        )
    });
    Ok(RunOutput {
        report: EstimateReport {
            method: meta.method.to_string(),
            theta: meta.theta,
            t_horizon: meta.t_horizon,
            estimate: scores.mean(),
            ci_half: scores.ci_half(),
            n: scores.n(),
            sample_variance: scores.sample_variance(),
            mean_jumps: jumps.mean(),
            wall_seconds: started.elapsed().as_secs_f64(),
            converged,
            flag,
        },
        diag,
    })
}

/// Runs exactly `n` samples, for variance tables and fixed-budget
/// comparisons. Uses seed/workers/collect_diag from `cfg`.
pub fn run_fixed<F>(sampler: F, n: u64, cfg: &RunConfig, meta: RunMeta) -> Result<RunOutput>
where
    F: Fn(RngStream) -> Result<Sample> + Sync,
{
    let started = Instant::now();
    let (scores, jumps, diag) = run_chunk(&sampler, cfg.seed, 0, n, cfg.workers, cfg.collect_diag)?;
    Ok(RunOutput {
        report: EstimateReport {
            method: meta.method.to_string(),
            theta: meta.theta,
            t_horizon: meta.t_horizon,
            estimate: scores.mean(),
            ci_half: scores.ci_half(),
            n: scores.n(),
            sample_variance: scores.sample_variance(),
            mean_jumps: jumps.mean(),
            wall_seconds: started.elapsed().as_secs_f64(),
            converged: true,
            flag: None,
        },
        diag,
    })
}

/// Two-pass mean and unbiased variance, for cross-checking the streaming
/// accumulator in tests and oracles.
pub fn estimate_mean_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}
