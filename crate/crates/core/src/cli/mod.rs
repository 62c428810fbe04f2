//! Command-line frontend.

pub mod ingest;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::auc_protocol::{AChoice, AucConfig, Variant};
use crate::freq_oracle::{PrivacyBudget, Split};
use crate::harness::{
    compare_protocols, run_experiment, verify_ldp, DataSource, Experiment, ExperimentReport, HarnessError,
    ProtocolConfig, Randomizer, SyntheticSpec, Task,
};
use crate::kernels::{exact_auc, exact_ustat, Sample};
use crate::pairwise_2pc::{sample_pairs, MechanismKind};
use crate::rng::{substream, SEED_ENV, TAG_PROTOCOL};
use crate::Error;
use ingest::{ingest_csv, IngestError, IngestOptions, Schema};

#[derive(Debug, Parser)]
#[command(name = "ustat-ldp", version, about = "Locally private U-statistics")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed for all randomness.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gini,
    #[value(alias = "kendall")]
    KendallTau,
    Collision,
    Auc,
}

impl From<KernelArg> for Task {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Gini => Task::Gini,
            KernelArg::KendallTau => Task::Kendall,
            KernelArg::Collision => Task::Collision,
            KernelArg::Auc => Task::Auc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    BudgetBasic,
    BudgetAdvanced,
    Users,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::BudgetBasic => Split::BudgetBasic,
            SplitArg::BudgetAdvanced => Split::BudgetAdvanced,
            SplitArg::Users => Split::Users,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Half,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismArg {
    Laplace,
    Rr2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AucData {
    AucOne,
    Ur,
    Ithdigit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RandomizerArg {
    Rr,
    Hadamard,
    Identity,
}

/// Input file plus how to read it.
#[derive(Debug, Args)]
pub struct InputArgs {
    /// Headed CSV: `x`, `y,z` or `score,label`.
    #[arg(long)]
    pub input: PathBuf,
    /// Inclusive value range for `x`, `y` and `z`, e.g. `-1,5`.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true)]
    pub range: Option<(f64, f64)>,
    /// Scores in `[0, 1]` are discretized to `2^score_bits` levels.
    #[arg(long, default_value_t = 16)]
    pub score_bits: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Non-private statistic of a dataset.
    Exact {
        #[arg(long, value_enum)]
        kernel: KernelArg,
        #[command(flatten)]
        input: InputArgs,
    },
    /// k-ary randomized response.
    Rr {
        #[arg(long, value_enum)]
        kernel: KernelArg,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        epsilon: f64,
        /// Bins for continuous inputs; defaults to the rate-balancing choice.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 1)]
        reps: u64,
    },
    /// Hierarchical-histogram AUC protocol.
    Auc {
        /// Headed `score,label` CSV; scores are discretized to `2^alpha` levels.
        #[arg(long, conflicts_with = "synthetic")]
        input: Option<PathBuf>,
        #[arg(long, value_enum, required_unless_present = "input")]
        synthetic: Option<AucData>,
        #[arg(long, default_value_t = 1000)]
        n_plus: usize,
        #[arg(long, default_value_t = 1000)]
        n_minus: usize,
        #[arg(long, default_value_t = 10)]
        alpha: u8,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, value_enum, default_value_t = SplitArg::BudgetBasic)]
        split: SplitArg,
        #[arg(long, value_enum, default_value_t = VariantArg::Half)]
        variant: VariantArg,
        /// Threshold parameter: `auto` or a value above 1.
        #[arg(long, default_value = "auto", value_parser = parse_a)]
        a: AChoice,
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Redraw synthetic data every repetition.
        #[arg(long)]
        resample: bool,
    },
    /// Pair subsampling with perturbed pairwise evaluations.
    Pairs2pc {
        #[arg(long, value_enum)]
        kernel: KernelArg,
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, value_enum, default_value_t = MechanismArg::Laplace)]
        mechanism: MechanismArg,
        #[arg(long, default_value_t = 1)]
        reps: u64,
        /// Also write the sampled pair plan of the first repetition.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Protocol comparison described by a JSON file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Exact privacy loss of a local randomizer.
    PrivacyCheck {
        #[arg(long, value_enum)]
        randomizer: RandomizerArg,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 4)]
        bits: u8,
        /// Claimed budget, also the randomizer's configured budget.
        #[arg(long)]
        epsilon: f64,
    },
}

/// Contents of an `experiment --config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub task: Task,
    pub data: SyntheticSpec,
    pub protocols: Vec<ProtocolConfig>,
    pub reps: u64,
    #[serde(default)]
    pub resample: bool,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo},{hi}"));
    }
    Ok((lo, hi))
}

fn parse_a(s: &str) -> Result<AChoice, String> {
    if s == "auto" {
        return Ok(AChoice::Auto);
    }
    s.parse().map(AChoice::Value).map_err(|_| format!("{s:?} is neither auto nor a number"))
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Ingest(IngestError::Open { .. }) => 3,
        Error::Ingest(_) | Error::Config(_) => 2,
        Error::Harness(HarnessError::Io(_) | HarnessError::Csv(_) | HarnessError::Json(_)) | Error::Io(_) => 4,
        _ => 3,
    }
}

fn open(path: &std::path::Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|source| IngestError::Open {
        path: path.display().to_string(),
        source,
    })
}

fn read_sample(input: &InputArgs, schema: Option<Schema>) -> Result<Sample, Error> {
    let file = open(&input.input)?;
    let opts = IngestOptions {
        score_bits: input.score_bits,
        range: input.range,
    };
    Ok(ingest_csv(file, schema, opts)?)
}

fn fixed(input: &InputArgs, sample: Sample) -> DataSource {
    DataSource::Fixed {
        name: input.input.display().to_string(),
        sample,
    }
}

fn expected_schema(kernel: KernelArg) -> Option<Schema> {
    match kernel {
        KernelArg::Auc => Some(Schema::ScoredLabeled),
        KernelArg::KendallTau => Some(Schema::Bivariate),
        KernelArg::Gini | KernelArg::Collision => None,
    }
}

#[derive(Serialize)]
struct ExactOutput {
    kernel: Task,
    n: usize,
    value: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    protocol: String,
    data: &'a str,
    reps: u64,
    true_value: f64,
    empirical_mse: f64,
    mean_abs_error: f64,
    theoretical_bound: Option<f64>,
}

impl<'a> From<&'a ExperimentReport> for SummaryRow<'a> {
    fn from(r: &'a ExperimentReport) -> Self {
        Self {
            protocol: r.protocol.label(),
            data: &r.data,
            reps: r.reps,
            true_value: r.true_value,
            empirical_mse: r.empirical_mse,
            mean_abs_error: r.mean_abs_error,
            theoretical_bound: r.theoretical_bound,
        }
    }
}

fn csv_rows<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(HarnessError::from)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn report_text(r: &ExperimentReport) -> String {
    let mean = r.per_rep.iter().map(|x| x.estimate).sum::<f64>() / r.per_rep.len() as f64;
    let mut out = format!(
        "protocol={}\ndata={}\nreps={}\ntrue_value={:.6}\nmean_estimate={:.6}\nmean_abs_error={:.6}\nempirical_mse={:.6e}\n",
        r.protocol.label(),
        r.data,
        r.reps,
        r.true_value,
        mean,
        r.mean_abs_error,
        r.empirical_mse
    );
    if let Some(b) = r.theoretical_bound {
        out.push_str(&format!("bound={b:.6e}\n"));
    }
    for w in &r.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}

fn render_report(r: &ExperimentReport, format: Format) -> Result<String, Error> {
    Ok(match format {
        Format::Text => report_text(r),
        Format::Json => r.to_json()? + "\n",
        Format::Csv => {
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            String::from_utf8(buf).expect("csv output is utf-8")
        }
    })
}

fn experiment(common: &Common, task: Task, protocol: ProtocolConfig, data: DataSource, reps: u64, resample: bool) -> Result<String, Error> {
    let report = run_experiment(&Experiment {
        task,
        protocol,
        data,
        reps,
        resample,
        seed: common.seed,
    })?;
    render_report(&report, common.format)
}

/// Runs one command and returns the rendered report.
pub fn execute(cli: &Cli) -> Result<String, Error> {
    let common = &cli.common;
    match &cli.command {
        Command::Exact { kernel, input } => {
            let sample = read_sample(input, expected_schema(*kernel))?;
            let task = Task::from(*kernel);
            let value = match task {
                Task::Auc => exact_auc(&sample)?,
                _ => exact_ustat(&task.kernel(), &sample)?,
            };
            let out = ExactOutput {
                kernel: task,
                n: sample.len(),
                value,
            };
            Ok(match common.format {
                Format::Text => format!("{value:.4}\n"),
                Format::Json => serde_json::to_string_pretty(&out).map_err(HarnessError::from)? + "\n",
                Format::Csv => csv_rows([out])?,
            })
        }
        Command::Rr {
            kernel,
            input,
            epsilon,
            k,
            reps,
        } => {
            let sample = read_sample(input, expected_schema(*kernel))?;
            let protocol = ProtocolConfig::Rr { epsilon: *epsilon, k: *k };
            experiment(common, (*kernel).into(), protocol, fixed(input, sample), *reps, false)
        }
        Command::Auc {
            input,
            synthetic,
            n_plus,
            n_minus,
            alpha,
            epsilon,
            delta,
            split,
            variant,
            a,
            reps,
            resample,
        } => {
            let data = match (input, synthetic) {
                (Some(path), _) => {
                    let file = open(path)?;
                    let opts = IngestOptions {
                        score_bits: *alpha,
                        range: None,
                    };
                    DataSource::Fixed {
                        name: path.display().to_string(),
                        sample: ingest_csv(file, Some(Schema::ScoredLabeled), opts)?,
                    }
                }
                (None, Some(kind)) => {
                    let d = 1u64.checked_shl(u32::from(*alpha)).ok_or(HarnessError::BadSpec(format!(
                        "alpha = {alpha} is too large"
                    )))?;
                    let (n_plus, n_minus) = (*n_plus, *n_minus);
                    DataSource::Synthetic(match kind {
                        AucData::AucOne => SyntheticSpec::AucOne { d, n_plus, n_minus },
                        AucData::Ur => SyntheticSpec::Ur { d, n_plus, n_minus },
                        AucData::Ithdigit => SyntheticSpec::IthDigit { d, n_plus, n_minus },
                    })
                }
                (None, None) => unreachable!("clap requires one data source"),
            };
            let protocol = ProtocolConfig::Auc(AucConfig {
                alpha: *alpha,
                a: *a,
                variant: match variant {
                    VariantArg::Half => Variant::HalfEstimate,
                    VariantArg::Zero => Variant::ZeroEstimate,
                },
                split: (*split).into(),
                budget: PrivacyBudget {
                    epsilon: *epsilon,
                    delta: *delta,
                },
            });
            let resample = *resample && matches!(data, DataSource::Synthetic(_));
            experiment(common, Task::Auc, protocol, data, *reps, resample)
        }
        Command::Pairs2pc {
            kernel,
            input,
            epsilon,
            p,
            mechanism,
            reps,
            plan,
        } => {
            let sample = read_sample(input, expected_schema(*kernel))?;
            if let Some(path) = plan {
                // Same stream as repetition 0, so the plan is the one it used.
                let n = sample.len() - sample.len() % 2;
                let plan = sample_pairs(n, *p, &mut substream(common.seed, &[TAG_PROTOCOL, 0]))?;
                plan.write_csv(File::create(path)?)?;
            }
            let protocol = ProtocolConfig::Pairs {
                epsilon: *epsilon,
                p: *p,
                mechanism: match mechanism {
                    MechanismArg::Laplace => MechanismKind::Laplace,
                    MechanismArg::Rr2 => MechanismKind::Rr2,
                },
            };
            experiment(common, (*kernel).into(), protocol, fixed(input, sample), *reps, false)
        }
        Command::Experiment { config } => {
            let spec: ExperimentFile = serde_json::from_reader(open(config)?).map_err(Error::Config)?;
            let data = DataSource::Synthetic(spec.data);
            let reports = compare_protocols(spec.task, &spec.protocols, &data, spec.reps, spec.resample, common.seed)?;
            match common.format {
                Format::Text => Ok(reports.iter().map(report_text).collect::<Vec<_>>().join("\n")),
                Format::Json => Ok(serde_json::to_string_pretty(&reports).map_err(HarnessError::from)? + "\n"),
                Format::Csv => csv_rows(reports.iter().map(SummaryRow::from)),
            }
        }
        Command::PrivacyCheck {
            randomizer,
            k,
            bits,
            epsilon,
        } => {
            let r = match randomizer {
                RandomizerArg::Rr => Randomizer::KaryRr { k: *k, epsilon: *epsilon },
                RandomizerArg::Hadamard => Randomizer::Hadamard {
                    bits: *bits,
                    epsilon: *epsilon,
                },
                RandomizerArg::Identity => Randomizer::Identity { k: *k },
            };
            let audit = verify_ldp(&r, *epsilon)?;
            Ok(match common.format {
                Format::Text => format!(
                    "epsilon_actual={:.4} {}\n",
                    audit.epsilon_actual,
                    if audit.pass { "PASS" } else { "FAIL" }
                ),
                Format::Json => serde_json::to_string_pretty(&audit).map_err(HarnessError::from)? + "\n",
                Format::Csv => csv_rows([audit])?,
            })
        }
    }
}

/// Executes and writes the report; returns the process exit code.
pub fn dispatch(cli: &Cli) -> i32 {
    let result = execute(cli).and_then(|text| match &cli.common.output {
        Some(path) => std::fs::write(path, text).map_err(Error::Io),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(Error::Io),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
