//! Batched attention: project the Euclidean queries and keys, fill the
//! pairwise logit matrix, row-softmax, aggregate values.
//!
//! Rows are independent, so the implementation parallelizes across query
//! rows; each row keeps a fixed left-to-right summation order, which makes
//! outputs bit-identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{HalfSpacePoint, HyperboloidPoint};
use crate::kernels::{
    cone_logit, distance_logit_halfspace, distance_logit_hyperboloid, dot_logit, laplacian_logit,
    KernelConfig, KernelKind, ProjectionKind,
};
use crate::matrix::Matrix;
use crate::projections::{exp_origin_project, pseudopolar, psi, xi};

/// Query/key/value batch of Euclidean pre-projection embeddings. The last
/// coordinate of each query/key row is the one the half-space projections
/// consume as the height parameter.
#[derive(Debug, Clone)]
pub struct AttentionBatch {
    pub queries: Matrix,
    pub keys: Matrix,
    pub values: Matrix,
    /// Row-major n*m; `true` means attend. Every row needs >= 1 true entry.
    pub mask: Option<Vec<bool>>,
}

impl AttentionBatch {
    pub fn new(queries: Matrix, keys: Matrix, values: Matrix, mask: Option<Vec<bool>>) -> Result<Self> {
        if queries.cols() != keys.cols() {
            return Err(Error::DimensionMismatch { expected: queries.cols(), got: keys.cols() });
        }
        if values.rows() != keys.rows() {
            return Err(Error::DimensionMismatch { expected: keys.rows(), got: values.rows() });
        }
        if let Some(mask) = &mask {
            let (n, m) = (queries.rows(), keys.rows());
            if mask.len() != n * m {
                return Err(Error::DimensionMismatch { expected: n * m, got: mask.len() });
            }
            for i in 0..n {
                if !mask[i * m..(i + 1) * m].iter().any(|&b| b) {
                    return Err(Error::MaskedRow { row: i });
                }
            }
        }
        Ok(Self { queries, keys, values, mask })
    }

    pub fn n(&self) -> usize {
        self.queries.rows()
    }

    pub fn m(&self) -> usize {
        self.keys.rows()
    }
}

/// Pairwise logit matrix; masked entries hold the -inf sentinel, all
/// others are finite.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub logits: Matrix,
}

enum ProjectedSet {
    HalfSpace(Vec<HalfSpacePoint>),
    Hyperboloid(Vec<HyperboloidPoint>),
    Raw(Vec<Vec<f64>>),
}

fn with_context(context: String, e: Error) -> Error {
    match e {
        e @ Error::NumericRange { .. } => Error::NumericRange {
            reason: format!("{context}: {e}"),
        },
        e => Error::InvalidPoint { reason: format!("{context}: {e}") },
    }
}

fn project_set(mat: &Matrix, config: &KernelConfig, role: &str) -> Result<ProjectedSet> {
    let proj = config.resolved_projection();
    match config.kind {
        KernelKind::Laplacian | KernelKind::Dot => Ok(ProjectedSet::Raw(
            (0..mat.rows()).map(|i| mat.row(i).to_vec()).collect(),
        )),
        KernelKind::DistHyperboloid => {
            let mut pts = Vec::with_capacity(mat.rows());
            for i in 0..mat.rows() {
                pts.push(
                    pseudopolar(mat.row(i)).map_err(|e| with_context(format!("{role} {i}"), e))?,
                );
            }
            Ok(ProjectedSet::Hyperboloid(pts))
        }
        _ => {
            if mat.cols() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "{} kernel needs embedding dimension >= 2, got {}",
                    config.kind.name(),
                    mat.cols()
                )));
            }
            let mut pts = Vec::with_capacity(mat.rows());
            for i in 0..mat.rows() {
                let p = match proj {
                    ProjectionKind::Psi => psi(mat.row(i)),
                    ProjectionKind::Xi => xi(mat.row(i), config.light_height),
                    ProjectionKind::ExpOrigin => exp_origin_project(mat.row(i), config.light_height),
                    other => Err(Error::InvalidConfig(format!(
                        "projection {other:?} not valid for kernel {}",
                        config.kind.name()
                    ))),
                };
                pts.push(p.map_err(|e| with_context(format!("{role} {i}"), e))?);
            }
            Ok(ProjectedSet::HalfSpace(pts))
        }
    }
}

fn scalar_logit(
    config: &KernelConfig,
    queries: &ProjectedSet,
    keys: &ProjectedSet,
    i: usize,
    j: usize,
) -> Result<f64> {
    let logit = match (queries, keys) {
        (ProjectedSet::HalfSpace(qs), ProjectedSet::HalfSpace(ks)) => match config.kind {
            KernelKind::Penumbral | KernelKind::Umbral => cone_logit(&qs[i], &ks[j], config),
            KernelKind::DistHalfspace => {
                distance_logit_halfspace(&qs[i], &ks[j], config.beta, config.c)
            }
            _ => unreachable!("half-space projection only feeds half-space kernels"),
        },
        (ProjectedSet::Hyperboloid(qs), ProjectedSet::Hyperboloid(ks)) => {
            distance_logit_hyperboloid(&qs[i], &ks[j], config.beta, config.c)
        }
        (ProjectedSet::Raw(qs), ProjectedSet::Raw(ks)) => match config.kind {
            KernelKind::Laplacian => laplacian_logit(&qs[i], &ks[j], config.gamma),
            KernelKind::Dot => dot_logit(&qs[i], &ks[j]),
            _ => unreachable!("raw vectors only feed laplacian/dot"),
        },
        _ => unreachable!("queries and keys use the same projection"),
    };
    logit.map_err(|e| with_context(format!("pair ({i}, {j})"), e))
}

/// Fills the n x m logit matrix for the configured kernel; masked entries
/// become the -inf sentinel. Cost is Theta(n * m * d).
pub fn pairwise_logits(batch: &AttentionBatch, config: &KernelConfig) -> Result<SimilarityMatrix> {
    config.validate()?;
    let q = project_set(&batch.queries, config, "query")?;
    let k = project_set(&batch.keys, config, "key")?;
    let (n, m) = (batch.n(), batch.m());
    let mut logits = Matrix::zeros(n, m);
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; m];
            for (j, slot) in row.iter_mut().enumerate() {
                let masked = batch
                    .mask
                    .as_ref()
                    .is_some_and(|mask| !mask[i * m + j]);
                *slot = if masked {
                    f64::NEG_INFINITY
                } else {
                    scalar_logit(config, &q, &k, i, j)?
                };
            }
            Ok(row)
        })
        .collect();
    for (i, row) in rows.into_iter().enumerate() {
        logits.row_mut(i).copy_from_slice(&row?);
    }
    Ok(SimilarityMatrix { logits })
}

/// Numerically stable row softmax: per-row max subtraction, -inf maps to
/// exactly zero. The normalizer sums its addends in value order, which
/// makes the weights exactly equivariant under key permutation. Errors
/// when a row has no finite entry.
pub fn softmax_rows(similarity: &SimilarityMatrix) -> Result<Matrix> {
    let logits = &similarity.logits;
    let (n, m) = (logits.rows(), logits.cols());
    let mut out = Matrix::zeros(n, m);
    let mut scratch = vec![0.0f64; m];
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::MaskedRow { row: i });
        }
        let dst = out.row_mut(i);
        for (j, &logit) in row.iter().enumerate() {
            dst[j] = (logit - max).exp();
        }
        scratch.copy_from_slice(dst);
        scratch.sort_unstable_by(f64::total_cmp);
        let sum: f64 = scratch.iter().sum();
        for w in dst.iter_mut() {
            *w /= sum;
        }
    }
    Ok(out)
}

/// Full attention read-out: `softmax(logits) @ values` with a fixed
/// left-to-right summation order within each row.
pub fn attend(batch: &AttentionBatch, config: &KernelConfig) -> Result<Matrix> {
    let weights = softmax_rows(&pairwise_logits(batch, config)?)?;
    let (n, m, dv) = (batch.n(), batch.m(), batch.values.cols());
    let mut out = Matrix::zeros(n, dv);
    out.par_rows_mut().enumerate().for_each(|(i, dst)| {
        for j in 0..m {
            let w = weights.get(i, j);
            for (o, v) in dst.iter_mut().zip(batch.values.row(j)) {
                *o += w * v;
            }
        }
    });
    Ok(out)
}

/// Splits the feature dimensions into `heads` contiguous blocks, attends
/// per head, and concatenates the outputs. No learned mixing.
pub fn multi_head(batch: &AttentionBatch, config: &KernelConfig, heads: usize) -> Result<Matrix> {
    if heads == 0 {
        return Err(Error::InvalidConfig("heads must be >= 1".into()));
    }
    let d = batch.queries.cols();
    let dv = batch.values.cols();
    if d % heads != 0 {
        return Err(Error::HeadsDivisibility { dim: d, heads });
    }
    if dv % heads != 0 {
        return Err(Error::HeadsDivisibility { dim: dv, heads });
    }
    let (dh, dvh) = (d / heads, dv / heads);
    let mut out = Matrix::zeros(batch.n(), dv);
    for t in 0..heads {
        let sub = AttentionBatch::new(
            batch.queries.slice_cols(t * dh, (t + 1) * dh),
            batch.keys.slice_cols(t * dh, (t + 1) * dh),
            batch.values.slice_cols(t * dvh, (t + 1) * dvh),
            batch.mask.clone(),
        )?;
        let head_out = attend(&sub, config)?;
        for i in 0..out.rows() {
            out.row_mut(i)[t * dvh..(t + 1) * dvh].copy_from_slice(head_out.row(i));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    fn random_batch(seed: u64, n: usize, m: usize, d: usize, dv: usize) -> AttentionBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AttentionBatch::new(
            random_matrix(&mut rng, n, d, -1.5, 1.5),
            random_matrix(&mut rng, m, d, -1.5, 1.5),
            random_matrix(&mut rng, m, dv, -2.0, 2.0),
            None,
        )
        .unwrap()
    }

    #[test]
    fn one_by_one_matches_scalar_kernel() {
        let batch = random_batch(1, 1, 1, 3, 2);
        for kind in KernelKind::ALL {
            let cfg = KernelConfig::new(kind);
            let sim = pairwise_logits(&batch, &cfg).unwrap();
            assert_eq!(sim.logits.rows(), 1);
            assert_eq!(sim.logits.cols(), 1);
            assert!(sim.logits.get(0, 0).is_finite());
        }
    }

    #[test]
    fn dot_kernel_reproduces_scaled_products() {
        let batch = random_batch(2, 3, 4, 5, 2);
        let cfg = KernelConfig::new(KernelKind::Dot);
        let sim = pairwise_logits(&batch, &cfg).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let expect: f64 = batch
                    .queries
                    .row(i)
                    .iter()
                    .zip(batch.keys.row(j))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / 5.0_f64.sqrt();
                assert_eq!(sim.logits.get(i, j), expect);
            }
        }
    }

    #[test]
    fn batched_logits_match_scalar_path() {
        let batch = random_batch(3, 3, 3, 4, 2);
        for kind in [KernelKind::Penumbral, KernelKind::Umbral, KernelKind::DistHalfspace] {
            let cfg = KernelConfig::new(kind);
            let sim = pairwise_logits(&batch, &cfg).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let q = match cfg.resolved_projection() {
                        ProjectionKind::Xi => xi(batch.queries.row(i), cfg.light_height).unwrap(),
                        _ => psi(batch.queries.row(i)).unwrap(),
                    };
                    let k = match cfg.resolved_projection() {
                        ProjectionKind::Xi => xi(batch.keys.row(j), cfg.light_height).unwrap(),
                        _ => psi(batch.keys.row(j)).unwrap(),
                    };
                    let expect = match kind {
                        KernelKind::DistHalfspace => {
                            distance_logit_halfspace(&q, &k, cfg.beta, cfg.c).unwrap()
                        }
                        _ => cone_logit(&q, &k, &cfg).unwrap(),
                    };
                    assert!(
                        (sim.logits.get(i, j) - expect).abs() <= 1e-12,
                        "{} entry ({i},{j})",
                        kind.name()
                    );
                }
            }
        }
    }

    #[test]
    fn softmax_rows_examples() {
        let sim = SimilarityMatrix {
            logits: Matrix::from_vec(1, 4, vec![2.0, 2.0, 2.0, 2.0]).unwrap(),
        };
        let w = softmax_rows(&sim).unwrap();
        assert_eq!(w.row(0), &[0.25, 0.25, 0.25, 0.25]);

        let sim = SimilarityMatrix {
            logits: Matrix::from_vec(1, 2, vec![0.0, f64::NEG_INFINITY]).unwrap(),
        };
        let w = softmax_rows(&sim).unwrap();
        assert_eq!(w.row(0), &[1.0, 0.0]);

        let sim = SimilarityMatrix {
            logits: Matrix::from_vec(1, 2, vec![1000.0, 1001.0]).unwrap(),
        };
        let w = softmax_rows(&sim).unwrap();
        let e = (-1.0f64).exp();
        assert!((w.get(0, 0) - e / (1.0 + e)).abs() < 1e-15);
        assert!((w.get(0, 1) - 1.0 / (1.0 + e)).abs() < 1e-15);

        let sim = SimilarityMatrix {
            logits: Matrix::from_vec(1, 2, vec![f64::NEG_INFINITY, f64::NEG_INFINITY]).unwrap(),
        };
        assert!(matches!(softmax_rows(&sim), Err(Error::MaskedRow { row: 0 })));
    }

    #[test]
    fn rows_sum_to_one_and_outputs_are_convex() {
        let batch = random_batch(7, 6, 5, 4, 3);
        for kind in KernelKind::ALL {
            let cfg = KernelConfig::new(kind);
            let w = softmax_rows(&pairwise_logits(&batch, &cfg).unwrap()).unwrap();
            for i in 0..w.rows() {
                let sum: f64 = w.row(i).iter().sum();
                assert!((sum - 1.0).abs() <= 1e-12, "{} row {i} sums to {sum}", kind.name());
            }
            let out = attend(&batch, &cfg).unwrap();
            for k in 0..out.cols() {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for j in 0..batch.m() {
                    lo = lo.min(batch.values.get(j, k));
                    hi = hi.max(batch.values.get(j, k));
                }
                for i in 0..out.rows() {
                    let v = out.get(i, k);
                    assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_key_passes_value_through() {
        let batch = random_batch(9, 4, 1, 3, 2);
        let out = attend(&batch, &KernelConfig::new(KernelKind::Umbral)).unwrap();
        for i in 0..4 {
            assert_eq!(out.row(i), batch.values.row(0));
        }
    }

    #[test]
    fn identical_keys_average_values() {
        let q = Matrix::from_vec(1, 2, vec![0.3, 0.1]).unwrap();
        let k = Matrix::from_vec(2, 2, vec![0.5, -0.2, 0.5, -0.2]).unwrap();
        let v = Matrix::from_vec(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let batch = AttentionBatch::new(q, k, v, None).unwrap();
        let out = attend(&batch, &KernelConfig::new(KernelKind::Penumbral)).unwrap();
        assert_eq!(out.row(0), &[0.5, 0.5, 0.0]);
    }

    #[test]
    fn attend_matches_naive_reference() {
        // straightforward reimplementation, no masking, no stabilization
        let batch = random_batch(4, 4, 4, 4, 4);
        let cfg = KernelConfig::new(KernelKind::Dot);
        let out = attend(&batch, &cfg).unwrap();
        for i in 0..4 {
            let mut weights = [0.0; 4];
            for j in 0..4 {
                let dot: f64 = batch
                    .queries
                    .row(i)
                    .iter()
                    .zip(batch.keys.row(j))
                    .map(|(a, b)| a * b)
                    .sum();
                weights[j] = (dot / 2.0).exp();
            }
            let z: f64 = weights.iter().sum();
            for k in 0..4 {
                let expect: f64 = (0..4).map(|j| weights[j] / z * batch.values.get(j, k)).sum();
                assert!((out.get(i, k) - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn shift_invariance_of_rows() {
        let batch = random_batch(11, 3, 4, 3, 2);
        let cfg = KernelConfig::new(KernelKind::Umbral);
        let sim = pairwise_logits(&batch, &cfg).unwrap();
        let base = softmax_rows(&sim).unwrap();
        let mut shifted = sim;
        for i in 0..shifted.logits.rows() {
            for w in shifted.logits.row_mut(i) {
                *w += 17.25;
            }
        }
        let moved = softmax_rows(&shifted).unwrap();
        for i in 0..base.rows() {
            for j in 0..base.cols() {
                assert!((base.get(i, j) - moved.get(i, j)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn masking_zeroes_weights_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let q = random_matrix(&mut rng, 2, 3, -1.0, 1.0);
        let k = random_matrix(&mut rng, 3, 3, -1.0, 1.0);
        let v = random_matrix(&mut rng, 3, 2, -1.0, 1.0);
        let mask = vec![true, false, true, false, true, true];
        let batch = AttentionBatch::new(q, k, v, Some(mask)).unwrap();
        let w = softmax_rows(&pairwise_logits(&batch, &KernelConfig::new(KernelKind::Penumbral)).unwrap())
            .unwrap();
        assert_eq!(w.get(0, 1), 0.0);
        assert_eq!(w.get(1, 0), 0.0);

        let all_masked = AttentionBatch::new(
            random_matrix(&mut rng, 1, 3, -1.0, 1.0),
            random_matrix(&mut rng, 2, 3, -1.0, 1.0),
            random_matrix(&mut rng, 2, 2, -1.0, 1.0),
            Some(vec![false, false]),
        );
        assert!(matches!(all_masked, Err(Error::MaskedRow { row: 0 })));
    }

    #[test]
    fn key_permutation_permutes_weights() {
        let batch = random_batch(17, 3, 5, 3, 2);
        let cfg = KernelConfig::new(KernelKind::Penumbral);
        let w = softmax_rows(&pairwise_logits(&batch, &cfg).unwrap()).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let keys = Matrix::from_rows(&perm.map(|j| batch.keys.row(j).to_vec())).unwrap();
        let values = Matrix::from_rows(&perm.map(|j| batch.values.row(j).to_vec())).unwrap();
        let permuted = AttentionBatch::new(batch.queries.clone(), keys, values, None).unwrap();
        let wp = softmax_rows(&pairwise_logits(&permuted, &cfg).unwrap()).unwrap();
        for i in 0..3 {
            for (jp, &j) in perm.iter().enumerate() {
                assert_eq!(w.get(i, j), wp.get(i, jp), "weight equivariance must be exact");
            }
        }
    }

    #[test]
    fn multi_head_examples() {
        let batch = random_batch(19, 4, 4, 8, 4);
        let cfg = KernelConfig::new(KernelKind::Umbral);
        let single = attend(&batch, &cfg).unwrap();
        let one_head = multi_head(&batch, &cfg, 1).unwrap();
        assert_eq!(single, one_head);

        // manual slice-and-stitch oracle
        let four = multi_head(&batch, &cfg, 4).unwrap();
        for t in 0..4 {
            let sub = AttentionBatch::new(
                batch.queries.slice_cols(t * 2, t * 2 + 2),
                batch.keys.slice_cols(t * 2, t * 2 + 2),
                batch.values.slice_cols(t, t + 1),
                None,
            )
            .unwrap();
            let head = attend(&sub, &cfg).unwrap();
            for i in 0..4 {
                assert_eq!(four.get(i, t), head.get(i, 0));
            }
        }

        assert!(matches!(
            multi_head(&batch, &cfg, 3),
            Err(Error::HeadsDivisibility { .. })
        ));
    }

    #[test]
    fn deterministic_across_runs_and_thread_counts() {
        let batch = random_batch(23, 8, 8, 6, 4);
        let cfg = KernelConfig::new(KernelKind::Penumbral);
        let a = attend(&batch, &cfg).unwrap();
        let b = attend(&batch, &cfg).unwrap();
        assert_eq!(a, b);

        for threads in [1, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let c = pool.install(|| attend(&batch, &cfg)).unwrap();
            assert_eq!(a, c, "thread count {threads} changed the output bits");
        }
    }

    #[test]
    fn projection_errors_carry_index_context() {
        let q = Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap();
        let k = Matrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, 900.0]).unwrap();
        let v = Matrix::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let batch = AttentionBatch::new(q, k, v, None).unwrap();
        let err = pairwise_logits(&batch, &KernelConfig::new(KernelKind::Umbral)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("key 1"), "missing context: {msg}");
    }
}
