//! Repeated protocol runs against a known statistic.

use std::collections::HashMap;
use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::{generate, SyntheticSpec};
use super::HarnessError;
use crate::auc_protocol::{class_scores, run_auc_protocol, AucConfig};
use crate::discrete::{Bin, DiscreteDistribution, KernelMatrix};
use crate::kernels::{exact_auc, exact_ustat, population_moments, DomainPoint, Kernel, Sample};
use crate::pairwise_2pc::{allpairs_baseline, run_pairs_protocol, subsampling_mse, MechanismKind};
use crate::quantization::{midpoint_kernel, recommended_k, QuantScheme};
use crate::rng::{substream, TAG_DATA, TAG_PROTOCOL};
use crate::rr_protocol::{rr_two_sample_auc, rr_variance_bound, run_rr_on_bins, RrConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Auc,
    Kendall,
    Gini,
    Collision,
}

impl Task {
    pub fn kernel(self) -> Kernel {
        match self {
            Task::Auc => Kernel::auc_indicator(),
            Task::Kendall => Kernel::kendall_tau(),
            Task::Gini => Kernel::gini(),
            Task::Collision => Kernel::collision(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "protocol")]
pub enum ProtocolConfig {
    /// Non-private statistic.
    Exact,
    /// Randomized response. `k` sets the number of bins when continuous
    /// inputs must be rounded; finite domains are used as they are.
    Rr { epsilon: f64, k: Option<usize> },
    Auc(AucConfig),
    Pairs {
        epsilon: f64,
        p: usize,
        mechanism: MechanismKind,
    },
    AllPairs { epsilon: f64, delta: f64 },
}

impl ProtocolConfig {
    pub fn label(&self) -> String {
        match self {
            ProtocolConfig::Exact => "exact".into(),
            ProtocolConfig::Rr { epsilon, k } => match k {
                Some(k) => format!("rr(eps={epsilon},k={k})"),
                None => format!("rr(eps={epsilon})"),
            },
            ProtocolConfig::Auc(c) => format!("auc(eps={},alpha={})", c.budget.epsilon, c.alpha),
            ProtocolConfig::Pairs { epsilon, p, .. } => format!("pairs(eps={epsilon},P={p})"),
            ProtocolConfig::AllPairs { epsilon, delta } => format!("all-pairs(eps={epsilon},delta={delta})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Fixed { name: String, sample: Sample },
}

impl DataSource {
    pub fn describe(&self) -> String {
        match self {
            DataSource::Synthetic(spec) => spec.describe(),
            DataSource::Fixed { name, sample } => format!("{name}(n={})", sample.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub task: Task,
    pub protocol: ProtocolConfig,
    pub data: DataSource,
    pub reps: u64,
    /// Draw fresh data every repetition and compare against the population
    /// value instead of the realized sample.
    pub resample: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepResult {
    pub rep: u64,
    pub estimate: f64,
    #[serde(rename = "true")]
    pub true_value: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: Task,
    pub protocol: ProtocolConfig,
    pub data: String,
    pub reps: u64,
    pub resample: bool,
    pub seed: u64,
    pub true_value: f64,
    pub empirical_mse: f64,
    pub mean_abs_error: f64,
    pub theoretical_bound: Option<f64>,
    pub warnings: Vec<String>,
    pub per_rep: Vec<RepResult>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(HarnessError::from)
    }

    /// One row per repetition: `rep,estimate,true,abs_error`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.per_rep {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Maps domain points to bins `1..=k` of an enumerated domain.
struct DomainIndex {
    points: Vec<DomainPoint>,
    index: HashMap<[u64; 2], usize>,
}

fn point_key(p: DomainPoint) -> [u64; 2] {
    match p {
        DomainPoint::Scalar(x) => [x.to_bits(), 0],
        DomainPoint::Pair(y, z) => [y.to_bits(), z.to_bits()],
        DomainPoint::Scored(s) => [s.score, s.label.sign() as u64],
    }
}

impl DomainIndex {
    fn new(points: Vec<DomainPoint>) -> Self {
        let index = points.iter().enumerate().map(|(i, &p)| (point_key(p), i)).collect();
        Self { points, index }
    }

    /// Distinct points of a sample, in first-seen order.
    fn from_sample(sample: &Sample) -> Self {
        let mut seen = HashMap::new();
        let mut points = Vec::new();
        for p in sample.points() {
            seen.entry(point_key(p)).or_insert_with(|| {
                points.push(p);
                points.len() - 1
            });
        }
        Self { points, index: seen }
    }

    fn encode(&self, sample: &Sample) -> Result<Vec<Bin>, HarnessError> {
        sample
            .points()
            .map(|p| {
                self.index
                    .get(&point_key(p))
                    .map(|&i| Bin::from_index(i))
                    .ok_or_else(|| HarnessError::BadSpec(format!("point {p:?} outside the domain")))
            })
            .collect()
    }
}

/// Everything about the data that is fixed across repetitions.
struct Prepared {
    fixed: Option<Sample>,
    population: Option<(Vec<DomainPoint>, DiscreteDistribution)>,
    score_domain: Option<u64>,
    n: usize,
}

fn score_domain_of(sample: &Sample) -> Option<u64> {
    match sample {
        Sample::Scored(points) => {
            let max = points.iter().map(|p| p.score).max().unwrap_or(0);
            Some((max + 1).next_power_of_two().max(2))
        }
        _ => None,
    }
}

fn population_value(task: Task, spec: &SyntheticSpec) -> Option<f64> {
    match (task, spec) {
        (Task::Auc, SyntheticSpec::AucOne { .. }) => Some(1.0),
        (Task::Auc, SyntheticSpec::Ur { d, .. }) => Some((*d as f64 - 1.0) / (2.0 * *d as f64)),
        (Task::Auc, SyntheticSpec::IthDigit { d, .. }) => {
            Some(f64::from(u8::from(super::synthetic::fixed_point(super::synthetic::ITHDIGIT_POSITIVE, *d) > 0)))
        }
        (Task::Gini, SyntheticSpec::Uniform { .. }) => Some(1.0 / 3.0),
        (_, spec) => {
            let (points, dist) = spec.population()?;
            let matrix = task.kernel().matrix_over(&points).ok()?;
            Some(population_moments(&matrix, &dist).ok()?.u)
        }
    }
}

fn true_statistic(task: Task, sample: &Sample) -> Result<f64, HarnessError> {
    Ok(match task {
        Task::Auc => exact_auc(sample)?,
        _ => exact_ustat(&task.kernel(), sample)?,
    })
}

/// `n(n-1) / 2` over `n+ n-`: converts a U-statistic with the AUC kernel to
/// the AUC scale.
fn auc_scale(sample: &Sample, n_used: usize) -> f64 {
    let Sample::Scored(points) = sample else { return 1.0 };
    let used = &points[..n_used];
    let pos = used.iter().filter(|p| p.label == crate::kernels::Label::Positive).count();
    let neg = n_used - pos;
    let n = n_used as f64;
    n * (n - 1.0) / 2.0 / (pos as f64 * neg as f64)
}

struct RepOutcome {
    estimate: f64,
    bound: Option<f64>,
}

fn run_once(
    exp: &Experiment,
    prep: &Prepared,
    sample: &Sample,
    rng: &mut ChaCha8Rng,
) -> Result<RepOutcome, HarnessError> {
    let task = exp.task;
    let kernel = task.kernel();
    let n = sample.len();
    let estimate = match &exp.protocol {
        ProtocolConfig::Exact => true_statistic(task, sample)?,
        ProtocolConfig::Rr { epsilon, k } => {
            if task == Task::Auc {
                let d = prep.score_domain.or_else(|| score_domain_of(sample)).unwrap_or(2);
                let cfg = RrConfig::new(d as usize, *epsilon)?;
                let (pos, neg) = class_scores(sample)?;
                let to_bins = |s: &[u64]| s.iter().map(|&x| Bin::from_index(x as usize)).collect::<Vec<_>>();
                rr_two_sample_auc(&cfg, &to_bins(&pos), &to_bins(&neg), rng)?
            } else if let Some((points, _)) = &prep.population {
                let domain = DomainIndex::new(points.clone());
                let matrix = kernel.matrix_over(&domain.points)?;
                let cfg = RrConfig::new(domain.points.len(), *epsilon)?;
                run_rr_on_bins(&cfg, &matrix, &domain.encode(sample)?, rng)?
            } else if let (Task::Gini, Sample::Scalar(values)) = (task, sample) {
                let k = k.unwrap_or_else(|| recommended_k(n, 1.0, epsilon.min(1e6)));
                let scheme = QuantScheme::uniform(k);
                let qk = midpoint_kernel(|x, y| (x - y).abs(), &scheme);
                let bins = values
                    .iter()
                    .map(|&x| scheme.quantize(x))
                    .collect::<Result<Vec<_>, _>>()?;
                let cfg = RrConfig::new(k, *epsilon)?;
                run_rr_on_bins(&cfg, &qk.matrix, &bins, rng)?
            } else {
                let domain = DomainIndex::from_sample(sample);
                let matrix = kernel.matrix_over(&domain.points)?;
                let cfg = RrConfig::new(domain.points.len(), *epsilon)?;
                run_rr_on_bins(&cfg, &matrix, &domain.encode(sample)?, rng)?
            }
        }
        ProtocolConfig::Auc(cfg) => {
            if task != Task::Auc {
                return Err(HarnessError::BadSpec("the AUC protocol only estimates AUC".into()));
            }
            let report = run_auc_protocol(sample, cfg, rng)?;
            return Ok(RepOutcome {
                estimate: report.auc_raw,
                bound: Some(report.bound),
            });
        }
        ProtocolConfig::Pairs { epsilon, p, mechanism } => {
            let u = run_pairs_protocol(&kernel, sample, *p, *epsilon, *mechanism, rng)?;
            if task == Task::Auc {
                u * auc_scale(sample, n - n % 2)
            } else {
                u
            }
        }
        ProtocolConfig::AllPairs { epsilon, delta } => {
            let u = allpairs_baseline(&kernel, sample, *epsilon, *delta, rng)?;
            if task == Task::Auc {
                u * auc_scale(sample, n)
            } else {
                u
            }
        }
    };
    Ok(RepOutcome { estimate, bound: None })
}

fn static_bound(exp: &Experiment, prep: &Prepared) -> Option<f64> {
    let unit_range = {
        let (lo, hi) = exp.task.kernel().value_range;
        lo >= 0.0 && hi <= 1.0
    };
    match &exp.protocol {
        ProtocolConfig::Rr { epsilon, .. } if unit_range && exp.task != Task::Auc => {
            let (points, _) = prep.population.as_ref()?;
            let cfg = RrConfig::new(points.len(), *epsilon).ok()?;
            Some(rr_variance_bound(&cfg, prep.n))
        }
        ProtocolConfig::Pairs {
            epsilon,
            p,
            mechanism: MechanismKind::Laplace,
        } if exp.resample && exp.task != Task::Auc => {
            let (points, dist) = prep.population.as_ref()?;
            let kernel = exp.task.kernel();
            let matrix: KernelMatrix = kernel.matrix_over(points).ok()?;
            let m = population_moments(&matrix, dist).ok()?;
            let n = prep.n - prep.n % 2;
            // The noise term scales with the squared width of the kernel range.
            let sampling = subsampling_mse(n, *p, f64::INFINITY, m.zeta1, m.zeta2);
            let noise = subsampling_mse(n, *p, *epsilon, m.zeta1, m.zeta2) - sampling;
            let (lo, hi) = kernel.value_range;
            Some(sampling + (hi - lo).powi(2) * noise)
        }
        _ => None,
    }
}

/// Runs the protocol `reps` times. Repetition `r` draws protocol randomness
/// from the `(seed, protocol, r)` stream and, when resampling, data from the
/// `(seed, data, r)` stream; otherwise the data come from the `(seed, data)`
/// stream once.
pub fn run_experiment(exp: &Experiment) -> Result<ExperimentReport, HarnessError> {
    if exp.reps == 0 {
        return Err(HarnessError::BadSpec("reps must be at least 1".into()));
    }
    let (prep, truth) = match &exp.data {
        DataSource::Fixed { sample, .. } => {
            if exp.resample {
                return Err(HarnessError::BadSpec("a fixed sample cannot be resampled".into()));
            }
            let truth = true_statistic(exp.task, sample)?;
            let prep = Prepared {
                fixed: Some(sample.clone()),
                population: None,
                score_domain: score_domain_of(sample),
                n: sample.len(),
            };
            (prep, truth)
        }
        DataSource::Synthetic(spec) => {
            let mut prep = Prepared {
                fixed: None,
                population: spec.population(),
                score_domain: spec.score_domain(),
                n: spec.n(),
            };
            let truth = if exp.resample {
                population_value(exp.task, spec)
                    .ok_or_else(|| HarnessError::BadSpec("no population value for this dataset".into()))?
            } else {
                let sample = generate(spec, &mut substream(exp.seed, &[TAG_DATA]))?;
                let truth = true_statistic(exp.task, &sample)?;
                prep.fixed = Some(sample);
                truth
            };
            (prep, truth)
        }
    };

    let mut warnings = Vec::new();
    if let ProtocolConfig::Auc(cfg) = &exp.protocol {
        if (cfg.alpha as f64) > (prep.n as f64).sqrt() {
            warnings.push(format!(
                "depth {} exceeds sqrt(n) = {:.1}; the MSE bound assumes depth <= sqrt(n)",
                cfg.alpha,
                (prep.n as f64).sqrt()
            ));
        }
    }

    let outcomes: Vec<RepOutcome> = (0..exp.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(exp.seed, &[TAG_PROTOCOL, rep]);
            match (&prep.fixed, &exp.data) {
                (Some(sample), _) => run_once(exp, &prep, sample, &mut rng),
                (None, DataSource::Synthetic(spec)) => {
                    let sample = generate(spec, &mut substream(exp.seed, &[TAG_DATA, rep]))?;
                    run_once(exp, &prep, &sample, &mut rng)
                }
                (None, DataSource::Fixed { .. }) => unreachable!("fixed data is always prepared"),
            }
        })
        .collect::<Result<_, _>>()?;

    let per_rep: Vec<RepResult> = outcomes
        .iter()
        .zip(0..)
        .map(|(o, rep)| RepResult {
            rep,
            estimate: o.estimate,
            true_value: truth,
            abs_error: (o.estimate - truth).abs(),
        })
        .collect();
    let reps = per_rep.len() as f64;
    let empirical_mse = per_rep.iter().map(|r| r.abs_error * r.abs_error).sum::<f64>() / reps;
    let mean_abs_error = per_rep.iter().map(|r| r.abs_error).sum::<f64>() / reps;
    let theoretical_bound = outcomes
        .first()
        .and_then(|o| o.bound)
        .or_else(|| static_bound(exp, &prep));

    Ok(ExperimentReport {
        task: exp.task,
        protocol: exp.protocol.clone(),
        data: exp.data.describe(),
        reps: exp.reps,
        resample: exp.resample,
        seed: exp.seed,
        true_value: truth,
        empirical_mse,
        mean_abs_error,
        theoretical_bound,
        warnings,
        per_rep,
        wall_time_secs: None,
    })
}

/// One report per protocol configuration, all on the same data streams.
pub fn compare_protocols(
    task: Task,
    configs: &[ProtocolConfig],
    data: &DataSource,
    reps: u64,
    resample: bool,
    seed: u64,
) -> Result<Vec<ExperimentReport>, HarnessError> {
    if configs.is_empty() {
        return Err(HarnessError::BadSpec("no protocol configurations".into()));
    }
    configs
        .iter()
        .map(|protocol| {
            run_experiment(&Experiment {
                task,
                protocol: protocol.clone(),
                data: data.clone(),
                reps,
                resample,
                seed,
            })
        })
        .collect()
}
