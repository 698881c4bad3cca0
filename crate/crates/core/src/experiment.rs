//! Batch runs and parameter sweeps driven by an [`ExperimentConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config_str, ExperimentConfig, SamplingConfig};
use crate::error::{Error, Result};
use crate::grid::{DiscreteField, GridSpec};
use crate::norms::MixedExponents;
use crate::reconstruct::{
    estimate_contraction, reconstruct, ContractionEstimate, Operators, ReconstructionOptions,
    ReconstructionReport, Status,
};
use crate::sampling::{
    acquire_samples, build_bupu, generate_sampling_set, make_kernels, verify_density, AveragingKernelSet,
    Bupu, DensityReport, KernelMode, SamplingSet,
};
use crate::space::{build_gram, synthesize, CoefficientArray, GeneratorBank, GramOperator};

/// Monte-Carlo trials behind every reported contraction estimate.
pub const CONTRACTION_TRIALS: usize = 12;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one random stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(seed ^ mix(stream))
}

/// The run seed: the config seed combined with a hash of `(gamma, a, p, q)`, so that
/// every sweep combination draws independently and a one-point sweep repeats `run`.
pub fn combination_seed(cfg: &ExperimentConfig) -> u64 {
    [cfg.gamma, cfg.a, cfg.p, cfg.q]
        .iter()
        .fold(cfg.seed, |acc, v| mix(acc ^ v.to_bits()))
}

const STREAM_SAMPLING: u64 = 1;
const STREAM_KERNELS: u64 = 2;
const STREAM_TRUTH: u64 = 3;
const STREAM_CONTRACTION: u64 = 4;

/// All operators of one configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: ExperimentConfig,
    pub spec: GridSpec,
    pub exponents: MixedExponents,
    pub bank: GeneratorBank,
    pub gram: GramOperator,
    pub x: SamplingSet,
    pub bupu: Bupu,
    pub kernels: AveragingKernelSet,
    pub density: DensityReport,
    pub seed: u64,
}

impl Pipeline {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let spec = cfg.grid()?;
        let exponents = cfg.exponents()?;
        let seed = combination_seed(cfg);
        let bank = GeneratorBank::new(cfg.generators.iter().map(|g| g.kernel(spec.dim())).collect(), spec)?;
        let gram = build_gram(&bank)?;
        let x = match (&cfg.sampling, cfg.sampling_mode()) {
            (SamplingConfig::File { path }, _) => SamplingSet::read_csv(path, &spec)?,
            (_, Some(mode)) => generate_sampling_set(mode, &spec, derive_seed(seed, STREAM_SAMPLING))?,
            (_, None) => unreachable!("non-file sampling always has a mode"),
        };
        let bupu = build_bupu(&x, &spec);
        let kernels = make_kernels(
            cfg.kernel_mode,
            cfg.kernel_shape,
            cfg.a,
            &x,
            &spec,
            cfg.m_target,
            derive_seed(seed, STREAM_KERNELS),
        )?;
        let density = verify_density(&x, cfg.gamma, &spec)?;
        Ok(Pipeline { config: cfg.clone(), spec, exponents, bank, gram, x, bupu, kernels, density, seed })
    }

    pub fn ops(&self) -> Operators<'_> {
        Operators { bank: &self.bank, gram: &self.gram, bupu: &self.bupu, kernels: &self.kernels, x: &self.x }
    }

    /// The `index`-th seeded ground truth: uniform coefficients and their synthesis.
    pub fn truth(&self, index: u64) -> Result<(CoefficientArray, DiscreteField)> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, STREAM_TRUTH));
        rng.set_stream(index);
        let c = CoefficientArray::random(self.bank.r(), &self.spec, &mut rng);
        let f = synthesize(&c, &self.bank)?;
        Ok((c, f))
    }

    pub fn options(&self) -> ReconstructionOptions {
        ReconstructionOptions {
            exponents: self.exponents,
            max_iter: self.config.max_iter,
            tol: self.config.tol,
            truth: None,
        }
    }

    /// Acquires the samples of truth `index` and reconstructs with the truth tracked.
    pub fn run_truth(&self, index: u64) -> Result<ReconstructionReport> {
        let (_, f) = self.truth(index)?;
        let samples = acquire_samples(&f, &self.kernels, &self.x)?;
        let opts = self.options().with_truth(f);
        Ok(reconstruct(&samples, &self.ops(), &opts)?.1)
    }

    pub fn contraction(&self) -> Result<ContractionEstimate> {
        estimate_contraction(
            &self.ops(),
            self.exponents,
            CONTRACTION_TRIALS,
            derive_seed(self.seed, STREAM_CONTRACTION),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub gamma: f64,
    pub worst_gap: f64,
    pub certified: bool,
    pub samples: usize,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub run_seed: u64,
    pub density: DensitySummary,
    pub kernel_m_bound: f64,
    pub gram_eigenvalues: [f64; 2],
    pub contraction: ContractionEstimate,
    pub reconstruction: ReconstructionReport,
}

impl RunSummary {
    /// 0 on convergence, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.reconstruction.converged {
            0
        } else {
            2
        }
    }

    pub fn status(&self) -> Status {
        self.reconstruction.status
    }
}

/// Builds the pipeline, reconstructs seeded truth 0 and measures the contraction.
pub fn run_summary(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let pipe = Pipeline::build(cfg)?;
    let reconstruction = pipe.run_truth(0)?;
    let contraction = pipe.contraction()?;
    Ok(RunSummary {
        config: cfg.clone(),
        run_seed: pipe.seed,
        density: DensitySummary {
            gamma: cfg.gamma,
            worst_gap: pipe.density.worst_gap,
            certified: pipe.density.certified,
            samples: pipe.x.len(),
        },
        kernel_m_bound: pipe.kernels.m_bound,
        gram_eigenvalues: [pipe.gram.min_eigenvalue(), pipe.gram.max_eigenvalue()],
        contraction,
        reconstruction,
    })
}

/// Writes `report.json`, `iterations.csv` and `config.toml` into `dir`.
pub fn write_run(summary: &RunSummary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    fs::write(dir.join("iterations.csv"), summary.reconstruction.iterations_csv())?;
    fs::write(dir.join("config.toml"), summary.config.echo())?;
    Ok(())
}

/// `run`: one reconstruction written to the configured output directory.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let summary = run_summary(cfg)?;
    write_run(&summary, &cfg.output_dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepAxes {
    pub gamma: Vec<f64>,
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// One line of `sweep.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub a: f64,
    pub p: f64,
    pub q: f64,
    pub alpha_hat: f64,
    pub alpha_fit: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub status: Status,
    pub worst_gap: f64,
    pub density_certified: bool,
}

impl SweepRow {
    pub fn from_summary(s: &RunSummary) -> Self {
        SweepRow {
            gamma: s.config.gamma,
            a: s.config.a,
            p: s.config.p,
            q: s.config.q,
            alpha_hat: s.contraction.alpha,
            alpha_fit: s.reconstruction.alpha_fit,
            converged: s.reconstruction.converged,
            iterations: s.reconstruction.iterations_run,
            status: s.reconstruction.status,
            worst_gap: s.density.worst_gap,
            density_certified: s.density.certified,
        }
    }

    /// Converged with a measured contraction below one.
    pub fn certified(&self) -> bool {
        self.converged && self.alpha_hat < 1.0
    }

    pub const HEADER: &'static str =
        "gamma,a,p,q,alpha_hat,alpha_fit,converged,iterations,status,worst_gap,density_certified";

    pub fn csv_line(&self) -> String {
        let status = serde_json::to_value(self.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{:e},{},{},{},{},{:e},{}",
            self.gamma,
            self.a,
            self.p,
            self.q,
            self.alpha_hat,
            self.alpha_fit.map(|v| format!("{v:e}")).unwrap_or_default(),
            self.converged,
            self.iterations,
            status,
            self.worst_gap,
            self.density_certified
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Certified combinations not dominated by another certified one in both `gamma` and `a`.
    pub frontier: Vec<(f64, f64)>,
}

/// The configuration of one sweep point. Sampling spacing and jitter, random point
/// counts and per-sample offsets scale with `gamma` and `a` relative to the base.
pub fn sweep_config(base: &ExperimentConfig, gamma: f64, a: f64, p: f64, q: f64) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    cfg.p = p;
    cfg.q = q;
    if gamma != base.gamma {
        let ratio = gamma / base.gamma;
        cfg.sampling = match &base.sampling {
            SamplingConfig::Jittered { s, eta, product } => {
                SamplingConfig::Jittered { s: s * ratio, eta: eta * ratio, product: *product }
            }
            SamplingConfig::Random { n } => {
                let scaled = (*n as f64 / ratio.powi(base.d as i32 + 1)).round().max(1.0);
                SamplingConfig::Random { n: scaled as usize }
            }
            SamplingConfig::File { .. } => {
                return Err(Error::InvalidArgument(
                    "a gamma axis other than sampling.gamma needs generated sampling".into(),
                ))
            }
        };
        cfg.gamma = gamma;
    }
    if a != base.a {
        if let KernelMode::PerSample { max_offset } = base.kernel_mode {
            cfg.kernel_mode = KernelMode::PerSample { max_offset: max_offset * a / base.a };
        }
        cfg.a = a;
    }
    // run the combined values through the config validator
    parse_config_str(&cfg.echo(), Path::new("."))?;
    Ok(cfg)
}

fn frontier(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    let good: Vec<&SweepRow> = rows.iter().filter(|r| r.certified()).collect();
    let mut out: Vec<(f64, f64)> = good
        .iter()
        .filter(|r| {
            !good.iter().any(|o| {
                o.gamma >= r.gamma && o.a >= r.a && (o.gamma > r.gamma || o.a > r.a)
            })
        })
        .map(|r| (r.gamma, r.a))
        .collect();
    out.sort_by(|x, y| x.partial_cmp(y).unwrap());
    out.dedup();
    out
}

fn combination_dir(root: &Path, index: usize, cfg: &ExperimentConfig) -> PathBuf {
    root.join(format!("{index:03}_gamma{}_a{}_p{}_q{}", cfg.gamma, cfg.a, cfg.p, cfg.q))
}

/// `sweep`: the Cartesian product of the axes, one run per combination.
///
/// Writes `sweep.csv`, `frontier.csv` and one run directory per combination under
/// the configured output directory.
pub fn cmd_sweep(base: &ExperimentConfig, axes: &SweepAxes) -> Result<SweepOutcome> {
    let p_axis = if axes.p.is_empty() { vec![base.p] } else { axes.p.clone() };
    let q_axis = if axes.q.is_empty() { vec![base.q] } else { axes.q.clone() };
    if axes.gamma.is_empty() || axes.a.is_empty() {
        return Err(Error::InvalidArgument("sweep axes --gamma and --a must be nonempty".into()));
    }
    let mut configs = Vec::new();
    for &g in &axes.gamma {
        for &a in &axes.a {
            for &p in &p_axis {
                for &q in &q_axis {
                    configs.push(sweep_config(base, g, a, p, q)?);
                }
            }
        }
    }
    let root = base.output_dir.clone();
    let summaries = configs
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let mut cfg = cfg.clone();
            cfg.output_dir = combination_dir(&root, i, &cfg);
            let s = run_summary(&cfg)?;
            write_run(&s, &cfg.output_dir)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = summaries.iter().map(SweepRow::from_summary).collect();
    let frontier = frontier(&rows);

    fs::create_dir_all(&root)?;
    let mut csv = String::from(SweepRow::HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.csv_line());
        csv.push('\n');
    }
    fs::write(root.join("sweep.csv"), csv)?;
    let mut fr = String::from("gamma,a\n");
    for (g, a) in &frontier {
        fr.push_str(&format!("{g},{a}\n"));
    }
    fs::write(root.join("frontier.csv"), fr)?;
    Ok(SweepOutcome { rows, frontier })
}
