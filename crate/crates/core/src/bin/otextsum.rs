use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otextsum::bip::Penalty;
use otextsum::pipeline::{
    evaluate, evaluate_pairs, read_corpus, read_pairs, read_references, read_results,
    summarize_corpus, write_eval_csv, BeamSettings, Pipeline, Preset, RunConfig, StopwordConfig,
    Strategy,
};
use otextsum::{Error, Metric, Result, SolverKind};

#[derive(Parser)]
#[command(name = "otextsum", version, about = "Extractive summarization by optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize every document of a JSONL corpus.
    Summarize {
        #[arg(long)]
        input: PathBuf,
        /// Output directory for summaries.jsonl and traces.
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Export the transport plan of one document as CSV and SVG.
    Explain {
        #[arg(long)]
        input: PathBuf,
        /// Output directory for plan.csv and plan.svg.
        #[arg(long)]
        output: PathBuf,
        /// Document id; the first document when omitted.
        #[arg(long)]
        id: Option<String>,
        /// Explain this selection instead of searching for one.
        #[arg(long, value_delimiter = ',')]
        selected: Option<Vec<usize>>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score summaries against references with ROUGE-1/2/L.
    Evaluate {
        /// summaries.jsonl from a previous run.
        #[arg(long, required_unless_present = "pairs")]
        input: Option<PathBuf>,
        /// JSONL lines with `id` and `reference`.
        #[arg(long, required_unless_present = "pairs")]
        references: Option<PathBuf>,
        /// JSONL lines with `candidate` and `reference`, instead of the two above.
        #[arg(long, conflicts_with_all = ["input", "references"])]
        pairs: Option<PathBuf>,
        /// CSV file to write.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config, or the summaries.jsonl of an earlier run; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Word vectors in word2vec text format.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    metric: Option<Metric>,
    /// `on`, `off`, or a file with one stop word per line.
    #[arg(long)]
    stopwords: Option<String>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long, short = 'B')]
    budget: Option<usize>,
    /// multinews, billsum, pubmed or cnndm.
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long = "beam-width", short = 'K')]
    beam_width: Option<usize>,
    #[arg(long)]
    final_beam_only: bool,
    #[arg(long, short = 'T')]
    iters: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Budget penalty shape: absolute or squared.
    #[arg(long, value_parser = parse_penalty)]
    penalty: Option<Penalty>,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epsilon_scaling: bool,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

fn parse_penalty(s: &str) -> std::result::Result<Penalty, String> {
    match s {
        "absolute" => Ok(Penalty::Absolute),
        "squared" => Ok(Penalty::Squared),
        _ => Err(format!("unknown penalty `{s}`")),
    }
}

impl ConfigArgs {
    fn build(self) -> Result<RunConfig> {
        let mut c = match (&self.config, &self.embeddings) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(e)) => RunConfig::new(e),
            (None, None) => {
                return Err(Error::Config("--embeddings or --config is required".into()))
            }
        };
        if let Some(e) = self.embeddings {
            c.embeddings = e;
        }
        if let Some(m) = self.metric {
            c.metric = m;
        }
        if let Some(s) = self.stopwords {
            c.stopwords = match s.as_str() {
                "on" => StopwordConfig::default(),
                "off" => StopwordConfig {
                    enabled: false,
                    list: None,
                },
                path => StopwordConfig {
                    enabled: true,
                    list: Some(path.into()),
                },
            };
        }
        if let Some(s) = self.strategy {
            c.strategy = s;
        }
        if let Some(p) = self.preset {
            c.preset = Some(p);
            c.budget = p.budget();
        }
        if let Some(b) = self.budget {
            c.budget = b;
        }

        match c.strategy {
            Strategy::Beam => {
                let beam = c.beam.get_or_insert_with(BeamSettings::default);
                if let Some(k) = self.beam_width {
                    beam.width = k;
                }
                beam.final_beam_only |= self.final_beam_only;
            }
            Strategy::Bip => {
                let bip = c.bip.get_or_insert_with(Default::default);
                if let Some(t) = self.iters {
                    bip.iters = t;
                }
                if let Some(a) = self.alpha {
                    bip.alpha = a;
                }
                if let Some(lr) = self.lr {
                    bip.lr = lr;
                }
                if let Some(tau) = self.tau {
                    bip.tau = tau;
                }
                if let Some(seed) = self.seed {
                    bip.seed = seed;
                }
                if let Some(p) = self.penalty {
                    bip.penalty = p;
                }
            }
        }

        if let Some(kind) = self.solver {
            c.solver.kind = kind;
        }
        if let Some(eps) = self.epsilon {
            c.solver.epsilon = Some(eps);
        }
        c.solver.epsilon_scaling |= self.epsilon_scaling;
        if let Some(tol) = self.tolerance {
            c.solver.tolerance = tol;
        }
        if let Some(n) = self.max_iters {
            c.solver.max_iters = n;
        }
        c.normalized()
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Summarize {
            input,
            output,
            config,
            jobs,
        } => {
            let pipeline = Pipeline::new(config.build()?)?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            let report = pool.install(|| summarize_corpus(&pipeline, &input, &output))?;
            log::info!(
                "{} documents, {} failed",
                report.documents,
                report.failures
            );
            Ok(if report.failures > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Explain {
            input,
            output,
            id,
            selected,
            config,
        } => {
            let pipeline = Pipeline::new(config.build()?)?;
            let corpus = read_corpus(&input)?;
            let (_, doc) = match &id {
                Some(id) => corpus.into_iter().find(|(i, _)| i == id),
                None => corpus.into_iter().next(),
            }
            .ok_or_else(|| Error::Config("no matching document in input".into()))?;
            let explanation = pipeline.explain(&doc?, selected.as_deref())?;
            explanation.write_files(&output)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate {
            input,
            references,
            pairs,
            output,
        } => {
            let rows = match (pairs, input, references) {
                (Some(p), _, _) => evaluate_pairs(&read_pairs(p)?),
                (None, Some(i), Some(r)) => evaluate(&read_results(i)?, &read_references(r)?),
                _ => return Err(Error::Config("--input and --references are required".into())),
            };
            let mut out = BufWriter::new(File::create(output)?);
            write_eval_csv(&rows, &mut out)?;
            out.flush()?;
            Ok(if rows.iter().any(|r| r.error.is_some()) {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
