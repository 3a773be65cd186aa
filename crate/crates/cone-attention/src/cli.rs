//! Command-line surface. Every randomized command takes a mandatory
//! `--seed`; outputs are deterministic given the config and seed. Exit
//! codes: 0 success, 1 check failure, 2 I/O or format error, 3 numeric
//! range error.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::attention::{attend, multi_head, pairwise_logits, AttentionBatch};
use crate::bench::perf_sweep;
use crate::error::{Error, Result};
use crate::gradients::grad_check_random;
use crate::hierarchy::{embed_tree_cone_consistent, generate_tree, lca_rank_score, train_toy, TreeKind};
use crate::io;
use crate::matrix::Matrix;
use crate::oracle::oracle_check_random;

#[derive(Parser)]
#[command(
    name = "coneattn",
    about = "Hyperbolic entailment-cone attention kernels, oracles, and benchmarks",
    long_about = None,
    version
)]
pub struct Cli {
    /// Worker threads for batched operators (default: all cores). The
    /// value is recorded in perf output; results are identical either way.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write the pairwise logit matrix of an embedding file as CSV.
    ///
    /// The embedding file starts with a `d n` header line, then n rows of
    /// d whitespace-separated floats; the last coordinate is the one the
    /// projection consumes as the height parameter.
    Kernel {
        /// JSON kernel config, e.g. {"kernel": "penumbral", "gamma": 1.0}
        #[arg(long)]
        config: PathBuf,
        /// Embedding file scored against itself.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV path (n x n logits).
        #[arg(long)]
        output: PathBuf,
    },
    /// Run batched attention and write the n x dv output matrix as CSV.
    Attend {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        keys: PathBuf,
        #[arg(long)]
        values: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare the closed-form cone heights against the geometric oracles
    /// on random pairs; exits 1 when the worst error exceeds 1e-5.
    OracleCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        /// Brute-force grid resolution.
        #[arg(long, default_value_t = 2000)]
        grid: usize,
    },
    /// Compare analytic gradients against central finite differences on
    /// random smooth points; exits 1 when the worst relative error
    /// exceeds 1e-5.
    GradCheck {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        /// Euclidean input dimension.
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Embed a tree cone-consistently, score LCA ranking, optionally run
    /// the toy trainer; writes a JSON report.
    TreeBench {
        #[arg(long)]
        config: PathBuf,
        /// Tree file (`node_id parent_id` per line, root parent -1).
        #[arg(long, conflicts_with = "generate", required_unless_present = "generate")]
        tree: Option<PathBuf>,
        /// Generate a tree instead: complete_binary or random_attachment.
        #[arg(long, value_parser = parse_tree_kind)]
        generate: Option<TreeKind>,
        /// Node count for --generate.
        #[arg(long, requires = "generate")]
        size: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        /// Also run the gradient-descent training demo.
        #[arg(long)]
        train: bool,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        /// Euclidean parameter dimension for training.
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
    /// Measure attend throughput over an n = m size sweep and fit the
    /// scaling exponent; writes the CSV artifact.
    Perf {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated sizes, e.g. 128,256,512,1024.
        #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256, 512, 1024])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        /// Sweep every kernel kind with this config's parameters.
        #[arg(long)]
        all_kernels: bool,
    },
}

fn parse_tree_kind(s: &str) -> std::result::Result<TreeKind, String> {
    match s {
        "complete_binary" => Ok(TreeKind::CompleteBinary),
        "random_attachment" => Ok(TreeKind::RandomAttachment),
        other => Err(format!(
            "unknown tree kind {other:?} (expected complete_binary or random_attachment)"
        )),
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    if let Some(threads) = cli.threads {
        // best effort; the global pool can only be sized once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Kernel { config, input, output } => {
            let config = io::load_config(&config)?;
            let embeddings = io::read_embeddings(&input)?;
            let n = embeddings.rows();
            let values = Matrix::zeros(n, 1);
            let batch = AttentionBatch::new(embeddings.clone(), embeddings, values, None)?;
            let sim = pairwise_logits(&batch, &config)?;
            io::write_csv_matrix(&output, &sim.logits)?;
            println!("wrote {n} x {n} {} logit matrix to {}", config.kind.name(), output.display());
            Ok(0)
        }
        Command::Attend { config, queries, keys, values, output } => {
            let config = io::load_config(&config)?;
            let batch = AttentionBatch::new(
                io::read_embeddings(&queries)?,
                io::read_embeddings(&keys)?,
                io::read_embeddings(&values)?,
                None,
            )?;
            let out = if config.heads > 1 {
                multi_head(&batch, &config, config.heads)?
            } else {
                attend(&batch, &config)?
            };
            io::write_csv_matrix(&output, &out)?;
            println!(
                "wrote {} x {} attention output to {}",
                out.rows(),
                out.cols(),
                output.display()
            );
            Ok(0)
        }
        Command::OracleCheck { config, samples, seed, grid } => {
            let config = io::load_config(&config)?;
            let report = oracle_check_random(&config, samples, seed, grid)?;
            println!(
                "{} oracle check: {} samples, max |dh| semi-analytic {:.3e}, brute force {:.3e}",
                config.kind.name(),
                report.samples,
                report.max_err_semi,
                report.max_err_brute
            );
            if report.max_err() <= 1e-5 {
                println!("PASS");
                Ok(0)
            } else {
                println!("FAIL: worst case {}", report.worst_case);
                Ok(1)
            }
        }
        Command::GradCheck { config, samples, seed, dim, step } => {
            let config = io::load_config(&config)?;
            let report = grad_check_random(&config, dim, samples, step, seed)?;
            println!(
                "{} gradient check: {} smooth points, max relative error {:.3e}",
                config.kind.name(),
                report.samples,
                report.max_rel_err
            );
            if report.max_rel_err <= 1e-5 {
                println!("PASS");
                Ok(0)
            } else {
                println!("FAIL");
                Ok(1)
            }
        }
        Command::TreeBench {
            config,
            tree,
            generate,
            size,
            seed,
            output,
            train,
            steps,
            learning_rate,
            dim,
        } => {
            let config = io::load_config(&config)?;
            let tree = match generate {
                Some(kind) => {
                    let size = size.ok_or_else(|| {
                        Error::InvalidConfig("--generate requires --size".into())
                    })?;
                    generate_tree(kind, size, seed)?
                }
                None => io::read_tree(tree.as_deref().expect("clap enforces --tree or --generate"))?,
            };
            let points = embed_tree_cone_consistent(&tree, &config)?;
            let scores = lca_rank_score(&points, &tree, &config, 100_000, seed)?;
            let training = if train {
                let result = train_toy(&tree, &config, dim, steps, learning_rate, seed)?;
                let initial_loss = result.loss_curve.first().copied().unwrap_or(0.0);
                let final_loss = result.loss_curve.last().copied().unwrap_or(0.0);
                Some(io::TrainingReport {
                    steps,
                    dim,
                    learning_rate,
                    initial_loss,
                    final_loss,
                    scores: result.final_scores,
                })
            } else {
                None
            };
            let report = io::TreeBenchReport {
                kernel: config.kind.name().to_string(),
                nodes: tree.len(),
                leaves: tree.leaves().len(),
                max_depth: tree.max_depth(),
                seed,
                embedding_scores: scores,
                training,
            };
            io::write_json(&output, &report)?;
            println!(
                "tree bench: {} nodes, agreement {:.4}, spearman {:.4} -> {}",
                report.nodes,
                report.embedding_scores.triple_agreement,
                report.embedding_scores.spearman,
                output.display()
            );
            Ok(0)
        }
        Command::Perf { config, sizes, dim, repetitions, seed, output, all_kernels } => {
            let config = io::load_config(&config)?;
            let kinds: Vec<crate::kernels::KernelKind> = if all_kernels {
                crate::kernels::KernelKind::ALL.to_vec()
            } else {
                vec![config.kind]
            };
            let mut csv = String::from("kernel,n,m,d,threads,median_seconds,tokens_per_second\n");
            for kind in kinds {
                let mut cfg = config.clone();
                cfg.kind = kind;
                cfg.projection = crate::kernels::ProjectionKind::Default;
                let (rows, exponent) = perf_sweep(&cfg, &sizes, dim, repetitions, seed)?;
                for row in &rows {
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        row.kernel,
                        row.n,
                        row.m,
                        row.d,
                        row.threads,
                        io::format_f64(row.median_seconds),
                        io::format_f64(row.tokens_per_second)
                    ));
                }
                println!("{}: scaling exponent {exponent:.3}", kind.name());
            }
            std::fs::write(&output, csv)?;
            println!("wrote perf table to {}", output.display());
            Ok(0)
        }
    }
}
