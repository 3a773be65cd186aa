//! Throughput and scaling measurements for the batched attention
//! operator. Inputs are seeded, timings use the monotonic clock, and the
//! reported number is the median over the repetitions after one warmup.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::attention::{attend, AttentionBatch};
use crate::error::{Error, Result};
use crate::kernels::KernelConfig;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy)]
pub struct ThroughputMeasurement {
    pub median_seconds: f64,
    /// Query tokens processed per second at the median time.
    pub tokens_per_second: f64,
}

fn seeded_batch(n: usize, m: usize, d: usize, seed: u64) -> Result<AttentionBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |rows: usize, cols: usize| -> Result<Matrix> {
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Matrix::from_vec(rows, cols, data)
    };
    let queries = fill(n, d)?;
    let keys = fill(m, d)?;
    let values = fill(m, d)?;
    AttentionBatch::new(queries, keys, values, None)
}

/// Times `attend` on a seeded random batch: one warmup run, then the
/// median of `repetitions` timed runs.
pub fn measure_throughput(
    n: usize,
    m: usize,
    d: usize,
    config: &KernelConfig,
    repetitions: usize,
    seed: u64,
) -> Result<ThroughputMeasurement> {
    if repetitions < 3 {
        return Err(Error::InvalidConfig(format!(
            "need >= 3 repetitions, got {repetitions}"
        )));
    }
    let batch = seeded_batch(n, m, d, seed)?;
    attend(&batch, config)?; // warmup
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        let out = attend(&batch, config)?;
        let elapsed = start.elapsed().as_secs_f64();
        std::hint::black_box(&out);
        times.push(elapsed);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    Ok(ThroughputMeasurement {
        median_seconds: median,
        tokens_per_second: n as f64 / median,
    })
}

/// Least-squares slope of log(time) against log(size).
pub fn scaling_exponent(times: &[f64], sizes: &[usize]) -> Result<f64> {
    if times.len() != sizes.len() {
        return Err(Error::DimensionMismatch { expected: sizes.len(), got: times.len() });
    }
    if times.len() < 3 {
        return Err(Error::InvalidConfig("scaling fit needs >= 3 size points".into()));
    }
    if times.iter().any(|&t| t <= 0.0) {
        return Err(Error::NumericRange {
            reason: "scaling fit requires strictly positive times".into(),
        });
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|&t| t.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        return Err(Error::InvalidConfig("scaling fit needs distinct sizes".into()));
    }
    Ok(num / den)
}

/// One row of the perf CSV artifact.
#[derive(Debug, Clone)]
pub struct PerfRow {
    pub kernel: &'static str,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub threads: usize,
    pub median_seconds: f64,
    pub tokens_per_second: f64,
}

/// Runs the n = m size sweep for one kernel config and returns the rows
/// plus the fitted scaling exponent.
pub fn perf_sweep(
    config: &KernelConfig,
    sizes: &[usize],
    d: usize,
    repetitions: usize,
    seed: u64,
) -> Result<(Vec<PerfRow>, f64)> {
    let threads = rayon::current_num_threads();
    let mut rows = Vec::with_capacity(sizes.len());
    let mut times = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let t = measure_throughput(n, n, d, config, repetitions, seed)?;
        times.push(t.median_seconds);
        rows.push(PerfRow {
            kernel: config.kind.name(),
            n,
            m: n,
            d,
            threads,
            median_seconds: t.median_seconds,
            tokens_per_second: t.tokens_per_second,
        });
    }
    let exponent = scaling_exponent(&times, sizes)?;
    Ok((rows, exponent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;

    #[test]
    fn tiny_batch_measures_positive_time() {
        let cfg = KernelConfig::new(KernelKind::Dot);
        let t = measure_throughput(1, 1, 4, &cfg, 3, 0).unwrap();
        assert!(t.median_seconds > 0.0);
        assert!(t.tokens_per_second > 0.0);
        assert!(measure_throughput(1, 1, 4, &cfg, 2, 0).is_err());
    }

    #[test]
    fn scaling_exponent_on_synthetic_times() {
        let sizes = [128usize, 256, 512, 1024];
        let quadratic: Vec<f64> = sizes.iter().map(|&n| (n * n) as f64 * 1e-9).collect();
        let got = scaling_exponent(&quadratic, &sizes).unwrap();
        assert!((got - 2.0).abs() < 1e-12, "{got}");

        let linear: Vec<f64> = sizes.iter().map(|&n| n as f64 * 1e-6).collect();
        let got = scaling_exponent(&linear, &sizes).unwrap();
        assert!((got - 1.0).abs() < 1e-12);

        assert!(scaling_exponent(&[1.0, -1.0, 2.0], &sizes[..3]).is_err());
        assert!(scaling_exponent(&[1.0, 2.0], &sizes[..2]).is_err());
    }

    #[test]
    fn doubling_n_roughly_doubles_work() {
        // with m, d fixed the logit pass is Theta(n m d); allow wide slack
        // for timer noise at these sizes
        let cfg = KernelConfig::new(KernelKind::Umbral);
        let t1 = measure_throughput(64, 256, 16, &cfg, 5, 1).unwrap();
        let t2 = measure_throughput(128, 256, 16, &cfg, 5, 1).unwrap();
        let ratio = t2.median_seconds / t1.median_seconds;
        assert!(ratio > 1.2 && ratio < 3.5, "ratio {ratio}");
    }
}
