//! Monte-Carlo harness: runs the two-stage pipeline (or a full-data baseline)
//! many times and reports rejection rates with binomial error bars.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{self, CsvOptions, SplitData, TwoSample};
use crate::error::{Result, WitsError};
use crate::falkon::{kfda_witness_nystrom, FalkonConfig};
use crate::hypotest::{
    asymptotic_witness_test, kfda_boot_test, mmd_boot_test, permutation_witness_test, PermutationConfig,
    TestOutcome, ThresholdMode, DEFAULT_PERMUTATIONS,
};
use crate::kernel::{median_heuristic_bandwidth, Kernel};
use crate::modelsel::{grid_search_cv, select_kernel_by_j, ParamGrid, DEFAULT_FOLDS};
use crate::parallel;
use crate::sample::Sample;
use crate::witness::{default_c, kfda_witness_exact, mmd_witness, SplitRatio, WitnessModel};

/// Master seed used when a configuration does not set one.
pub const DEFAULT_SEED: u64 = 2022;

pub const DEFAULT_REPETITIONS: usize = 100;

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    KfdaWitness,
    OptMmdWitness,
    MmdBoot,
    KfdaBoot,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::KfdaWitness, Method::OptMmdWitness, Method::MmdBoot, Method::KfdaBoot];

    pub fn id(self) -> &'static str {
        match self {
            Method::KfdaWitness => "kfda-witness",
            Method::OptMmdWitness => "opt-mmd-witness",
            Method::MmdBoot => "mmd-boot",
            Method::KfdaBoot => "kfda-boot",
        }
    }

    /// Witness methods split the data; boot methods test on all of it.
    pub fn splits(self) -> bool {
        matches!(self, Method::KfdaWitness | Method::OptMmdWitness)
    }

    fn uses_lambda(self) -> bool {
        matches!(self, Method::KfdaWitness | Method::KfdaBoot)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = WitsError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| {
                WitsError::param(
                    "method",
                    format!("unknown method `{s}`; expected one of kfda-witness, opt-mmd-witness, mmd-boot, kfda-boot"),
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    BlobsRotated { n: usize, m: usize, theta: f64 },
    BlobsLiu { n: usize, m: usize, null: bool },
    /// Two CSV files; each trial subsamples `n` and `m` rows without
    /// replacement, or uses every row when unset.
    Csv {
        x_path: PathBuf,
        y_path: PathBuf,
        options: CsvOptions,
        n: Option<usize>,
        m: Option<usize>,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::BlobsRotated { theta, .. } => format!("blobs_rotated(theta={theta})"),
            DatasetSpec::BlobsLiu { null: false, .. } => "blobs_liu".into(),
            DatasetSpec::BlobsLiu { null: true, .. } => "blobs_liu(null)".into(),
            DatasetSpec::Csv { x_path, y_path, .. } => format!("csv({}|{})", x_path.display(), y_path.display()),
        }
    }

    /// Nominal `(n, m)`; CSV data without explicit sizes reports zeros until
    /// it is loaded.
    pub fn sizes(&self) -> (usize, usize) {
        match self {
            DatasetSpec::BlobsRotated { n, m, .. } | DatasetSpec::BlobsLiu { n, m, .. } => (*n, *m),
            DatasetSpec::Csv { n, m, .. } => (n.unwrap_or(0), m.unwrap_or(0)),
        }
    }

    pub fn with_sizes(&self, n_new: usize, m_new: usize) -> Self {
        let mut out = self.clone();
        match &mut out {
            DatasetSpec::BlobsRotated { n, m, .. } | DatasetSpec::BlobsLiu { n, m, .. } => {
                *n = n_new;
                *m = m_new;
            }
            DatasetSpec::Csv { n, m, .. } => {
                *n = Some(n_new);
                *m = Some(m_new);
            }
        }
        out
    }

    fn prepare(&self) -> Result<PreparedDataset<'_>> {
        let loaded = match self {
            DatasetSpec::Csv { x_path, y_path, options, .. } => {
                let x = data::load_csv(x_path, options)?;
                let y = data::load_csv(y_path, options)?;
                x.check_dim(&y)?;
                Some((x, y))
            }
            _ => None,
        };
        Ok(PreparedDataset { spec: self, loaded })
    }
}

struct PreparedDataset<'a> {
    spec: &'a DatasetSpec,
    loaded: Option<(Sample, Sample)>,
}

impl PreparedDataset<'_> {
    fn draw(&self, seed: u64) -> Result<TwoSample> {
        match (self.spec, &self.loaded) {
            (DatasetSpec::BlobsRotated { n, m, theta }, _) => data::blobs_rotated(*n, *m, *theta, seed),
            (DatasetSpec::BlobsLiu { n, m, null: false }, _) => data::blobs_liu(*n, *m, seed),
            (DatasetSpec::BlobsLiu { n, m, null: true }, _) => data::blobs_liu_null(*n, *m, seed),
            (DatasetSpec::Csv { n, m, .. }, Some((x, y))) => {
                let x = match n {
                    Some(n) => data::subsample_without_replacement(x, *n, mix(&[seed, 1]))?,
                    None => x.clone(),
                };
                let y = match m {
                    Some(m) => data::subsample_without_replacement(y, *m, mix(&[seed, 2]))?,
                    None => y.clone(),
                };
                TwoSample::new(x, y, self.spec.name())
            }
            (DatasetSpec::Csv { .. }, None) => unreachable!("CSV data is loaded in prepare"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Gaussian(f64),
    /// Median pairwise distance of the pooled data the method fits on.
    MedianHeuristic,
    Grid(Vec<Kernel>),
}

impl KernelSpec {
    fn describe(&self) -> String {
        match self {
            KernelSpec::Gaussian(bw) => bw.to_string(),
            KernelSpec::MedianHeuristic => "median".into(),
            KernelSpec::Grid(k) if k.len() == 1 => k[0].bandwidth().map_or("linear".into(), |b| b.to_string()),
            KernelSpec::Grid(_) => "grid".into(),
        }
    }

    fn candidates(&self, pooled: impl FnOnce() -> Result<Sample>) -> Result<Vec<Kernel>> {
        match self {
            KernelSpec::Gaussian(bw) => Ok(vec![Kernel::gaussian(*bw)?]),
            KernelSpec::MedianHeuristic => Ok(vec![Kernel::gaussian(median_heuristic_bandwidth(&pooled()?)?)?]),
            KernelSpec::Grid(k) => Ok(k.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSpec {
    Fixed(f64),
    Grid(Vec<f64>),
}

impl LambdaSpec {
    fn describe(&self) -> String {
        match self {
            LambdaSpec::Fixed(l) => l.to_string(),
            LambdaSpec::Grid(l) if l.len() == 1 => l[0].to_string(),
            LambdaSpec::Grid(_) => "grid".into(),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            LambdaSpec::Fixed(l) => vec![*l],
            LambdaSpec::Grid(l) => l.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FalkonSettings {
    pub centers: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub method: Method,
    pub kernel: KernelSpec,
    pub lambda: LambdaSpec,
    pub split_ratio: SplitRatio,
    pub alpha: f64,
    pub permutations: usize,
    pub plus_one: bool,
    pub threshold: ThresholdMode,
    pub folds: usize,
    pub repetitions: usize,
    pub falkon: Option<FalkonSettings>,
    pub seed: u64,
    /// Worker threads for the trial pool; 0 lets rayon decide.
    pub threads: usize,
}

impl ExperimentConfig {
    /// Defaults: the standard CV grids, r = 1/2, α = 0.05, B = 200,
    /// permutation thresholds, 5 folds.
    pub fn new(dataset: DatasetSpec, method: Method) -> Self {
        let grid = ParamGrid::default_grid();
        Self {
            dataset,
            method,
            kernel: KernelSpec::Grid(grid.kernels().to_vec()),
            lambda: LambdaSpec::Grid(grid.lambdas().to_vec()),
            split_ratio: SplitRatio::default(),
            alpha: DEFAULT_ALPHA,
            permutations: DEFAULT_PERMUTATIONS,
            plus_one: false,
            threshold: ThresholdMode::Permutation,
            folds: DEFAULT_FOLDS,
            repetitions: DEFAULT_REPETITIONS,
            falkon: None,
            seed: DEFAULT_SEED,
            threads: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(WitsError::param("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.repetitions == 0 {
            return Err(WitsError::param("repetitions", "need at least one repetition"));
        }
        if self.permutations == 0 {
            return Err(WitsError::param("B", "need at least one permutation"));
        }
        if let KernelSpec::Grid(k) = &self.kernel {
            if k.is_empty() {
                return Err(WitsError::param("kernel", "empty bandwidth grid"));
            }
        }
        if let KernelSpec::Gaussian(bw) = self.kernel {
            Kernel::gaussian(bw)?;
        }
        let lambdas = self.lambda.values();
        if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(WitsError::param("lambda", "need one or more positive values"));
        }
        if !self.method.splits() {
            if matches!(&self.kernel, KernelSpec::Grid(k) if k.len() > 1) {
                return Err(WitsError::param("kernel", format!("{} needs a single kernel, not a grid", self.method)));
            }
            if self.method.uses_lambda() && lambdas.len() > 1 {
                return Err(WitsError::param("lambda", format!("{} needs a single lambda, not a grid", self.method)));
            }
        }
        if let Some(f) = self.falkon {
            if f.centers == 0 || f.iterations == 0 {
                return Err(WitsError::param("falkon", "centers and iterations must be positive"));
            }
        }
        Ok(())
    }

    /// 64-bit FNV-1a hash of the configuration's debug form.
    pub fn fingerprint(&self) -> u64 {
        format!("{self:?}")
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }
}

/// SplitMix64 finalizer folded over the inputs.
pub fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

fn method_key(method: Method) -> u64 {
    method.id().bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(u64::from(b)))
}

/// Seeds of one trial. The data seed ignores the method so every method sees
/// the same draw at the same trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub data: u64,
    pub split: u64,
    pub folds: u64,
    pub centers: u64,
    pub permutations: u64,
}

impl TrialSeeds {
    pub fn derive(master: u64, trial: usize, method: Method) -> Self {
        let key = method_key(method);
        let stage = |s: u64| mix(&[master, trial as u64, key, s]);
        Self {
            data: mix(&[master, trial as u64]),
            split: stage(1),
            folds: stage(2),
            centers: stage(3),
            permutations: stage(4),
        }
    }
}

/// One trial's outcome and the hyperparameters it used.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub outcome: TestOutcome,
    pub kernel: Kernel,
    pub lambda: Option<f64>,
    pub seeds: TrialSeeds,
}

fn stage_two(h: &WitnessModel, split: &SplitData, config: &ExperimentConfig, seed: u64) -> Result<TestOutcome> {
    match config.threshold {
        ThresholdMode::Analytic => asymptotic_witness_test(h, &split.x_test, &split.y_test, config.alpha),
        ThresholdMode::Permutation => {
            let perm = PermutationConfig {
                num_permutations: config.permutations,
                seed,
                plus_one: config.plus_one,
            };
            permutation_witness_test(h, &split.x_test, &split.y_test, config.alpha, &perm)
        }
    }
}

fn run_trial_on(ts: &TwoSample, config: &ExperimentConfig, seeds: TrialSeeds) -> Result<TrialResult> {
    let perm = PermutationConfig {
        num_permutations: config.permutations,
        seed: seeds.permutations,
        plus_one: config.plus_one,
    };
    match config.method {
        Method::KfdaWitness => {
            let split = data::split(ts, config.split_ratio, seeds.split)?;
            let pooled = || split.x_train.concat(&split.y_train);
            let kernels = config.kernel.candidates(pooled)?;
            let lambdas = config.lambda.values();
            let (kernel, lambda) = if kernels.len() * lambdas.len() > 1 {
                let report = grid_search_cv(
                    &ParamGrid::new(kernels, lambdas)?,
                    &split.x_train,
                    &split.y_train,
                    config.folds,
                    seeds.folds,
                )?;
                (report.kernel, report.lambda)
            } else {
                (kernels[0], lambdas[0])
            };
            let h = match config.falkon {
                None => kfda_witness_exact(&kernel, lambda, &split.x_train, &split.y_train, None)?,
                Some(f) => {
                    let pooled = split.x_train.len() + split.y_train.len();
                    let falkon = FalkonConfig::new(f.centers.min(pooled), f.iterations, lambda, seeds.centers)
                        .with_c(default_c(split.x_train.len(), split.y_train.len()));
                    kfda_witness_nystrom(&kernel, &split.x_train, &split.y_train, &falkon)?
                }
            };
            Ok(TrialResult {
                outcome: stage_two(&h, &split, config, seeds.permutations)?,
                kernel,
                lambda: Some(lambda),
                seeds,
            })
        }
        Method::OptMmdWitness => {
            let split = data::split(ts, config.split_ratio, seeds.split)?;
            let pooled = || split.x_train.concat(&split.y_train);
            let kernels = config.kernel.candidates(pooled)?;
            let kernel = if kernels.len() > 1 {
                select_kernel_by_j(&kernels, &split.x_train, &split.y_train)?.0
            } else {
                kernels[0]
            };
            let h = mmd_witness(&kernel, &split.x_train, &split.y_train)?;
            Ok(TrialResult {
                outcome: stage_two(&h, &split, config, seeds.permutations)?,
                kernel,
                lambda: None,
                seeds,
            })
        }
        Method::MmdBoot => {
            let kernel = config.kernel.candidates(|| ts.x.concat(&ts.y))?[0];
            Ok(TrialResult {
                outcome: mmd_boot_test(&kernel, &ts.x, &ts.y, config.alpha, &perm)?,
                kernel,
                lambda: None,
                seeds,
            })
        }
        Method::KfdaBoot => {
            let kernel = config.kernel.candidates(|| ts.x.concat(&ts.y))?[0];
            let lambda = config.lambda.values()[0];
            Ok(TrialResult {
                outcome: kfda_boot_test(&kernel, lambda, &ts.x, &ts.y, config.alpha, &perm)?,
                kernel,
                lambda: Some(lambda),
                seeds,
            })
        }
    }
}

fn wrap(trial: usize, seeds: TrialSeeds, e: WitsError) -> WitsError {
    WitsError::Trial {
        trial,
        seed: seeds.data,
        source: Box::new(e),
    }
}

/// Runs trial `trial` of the experiment: draw data, fit Stage I and test.
pub fn run_single_trial(config: &ExperimentConfig, trial: usize) -> Result<TrialResult> {
    config.validate()?;
    let prepared = config.dataset.prepare()?;
    let seeds = TrialSeeds::derive(config.seed, trial, config.method);
    prepared
        .draw(seeds.data)
        .and_then(|ts| run_trial_on(&ts, config, seeds))
        .map_err(|e| wrap(trial, seeds, e))
}

/// Runs a witness or boot test once on given data. `seed` drives the split,
/// folds, centers and permutations.
pub fn run_on_data(ts: &TwoSample, config: &ExperimentConfig) -> Result<TrialResult> {
    config.validate()?;
    run_trial_on(ts, config, TrialSeeds::derive(config.seed, 0, config.method))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    pub rejections: usize,
    pub repetitions: usize,
    pub rejection_rate: f64,
    pub std_err: f64,
    pub fingerprint: u64,
}

impl PowerEstimate {
    pub fn from_count(rejections: usize, repetitions: usize, fingerprint: u64) -> Self {
        let rate = rejections as f64 / repetitions as f64;
        Self {
            rejections,
            repetitions,
            rejection_rate: rate,
            std_err: (rate * (1.0 - rate) / repetitions as f64).sqrt(),
            fingerprint,
        }
    }
}

/// Runs every trial and returns their results in trial order. Stops at the
/// first failing trial (by index).
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialResult>> {
    config.validate()?;
    let prepared = config.dataset.prepare()?;
    let results = parallel::with_threads(config.threads, || {
        parallel::map_range(config.repetitions, |trial| {
            let seeds = TrialSeeds::derive(config.seed, trial, config.method);
            prepared
                .draw(seeds.data)
                .and_then(|ts| run_trial_on(&ts, config, seeds))
                .map_err(|e| wrap(trial, seeds, e))
        })
    });
    results.into_iter().collect()
}

/// Fraction of rejections over `R` independent trials.
pub fn estimate_rejection_rate(config: &ExperimentConfig) -> Result<PowerEstimate> {
    let trials = run_trials(config)?;
    let count = trials.iter().filter(|t| t.outcome.reject).count();
    Ok(PowerEstimate::from_count(count, config.repetitions, config.fingerprint()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    SplitRatio(Vec<f64>),
    /// Applied as `n = m = value`.
    SampleSize(Vec<usize>),
    Method(Vec<Method>),
    Lambda(Vec<f64>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::SplitRatio(v) | SweepAxis::Lambda(v) => v.len(),
            SweepAxis::SampleSize(v) => v.len(),
            SweepAxis::Method(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The base configuration with the axis set to its `i`-th value.
    fn apply(&self, base: &ExperimentConfig, i: usize) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::SplitRatio(v) => cfg.split_ratio = SplitRatio::new(v[i])?,
            SweepAxis::SampleSize(v) => cfg.dataset = cfg.dataset.with_sizes(v[i], v[i]),
            SweepAxis::Method(v) => cfg.method = v[i],
            SweepAxis::Lambda(v) => cfg.lambda = LambdaSpec::Fixed(v[i]),
        }
        Ok(cfg)
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: Method,
    pub dataset: String,
    pub n: usize,
    pub m: usize,
    pub r: Option<f64>,
    pub sigma: String,
    pub lambda: String,
    pub alpha: f64,
    pub permutations: usize,
    pub repetitions: usize,
    pub estimate: PowerEstimate,
    pub seed: u64,
}

pub const RESULT_COLUMNS: [&str; 13] = [
    "method",
    "dataset",
    "n",
    "m",
    "r",
    "sigma",
    "lambda",
    "alpha",
    "B",
    "R",
    "rejection_rate",
    "std_err",
    "seed",
];

impl ResultRow {
    pub fn new(config: &ExperimentConfig, estimate: PowerEstimate) -> Self {
        let (n, m) = config.dataset.sizes();
        Self {
            method: config.method,
            dataset: config.dataset.name(),
            n,
            m,
            r: config.method.splits().then(|| config.split_ratio.value()),
            sigma: config.kernel.describe(),
            lambda: if config.method.uses_lambda() {
                config.lambda.describe()
            } else {
                String::new()
            },
            alpha: config.alpha,
            permutations: config.permutations,
            repetitions: config.repetitions,
            estimate,
            seed: config.seed,
        }
    }

    pub fn record(&self) -> Vec<String> {
        vec![
            self.method.id().to_string(),
            self.dataset.clone(),
            self.n.to_string(),
            self.m.to_string(),
            self.r.map_or(String::new(), |r| r.to_string()),
            self.sigma.clone(),
            self.lambda.clone(),
            self.alpha.to_string(),
            self.permutations.to_string(),
            self.repetitions.to_string(),
            self.estimate.rejection_rate.to_string(),
            self.estimate.std_err.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// One power estimate per value of `axis`.
pub fn sweep(base: &ExperimentConfig, axis: &SweepAxis) -> Result<Vec<ResultRow>> {
    if axis.is_empty() {
        return Err(WitsError::param("sweep", "no values to sweep over"));
    }
    (0..axis.len())
        .map(|i| {
            let cfg = axis.apply(base, i)?;
            Ok(ResultRow::new(&cfg, estimate_rejection_rate(&cfg)?))
        })
        .collect()
}

/// Writes the results table as CSV.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let io_err = |e: csv::Error| WitsError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    w.write_record(RESULT_COLUMNS).map_err(io_err)?;
    for row in rows {
        w.write_record(row.record()).map_err(io_err)?;
    }
    w.flush().map_err(|source| WitsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(method: Method) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(DatasetSpec::BlobsRotated { n: 30, m: 30, theta: 0.0 }, method);
        cfg.kernel = KernelSpec::Gaussian(0.2);
        cfg.lambda = LambdaSpec::Fixed(1e-2);
        cfg.repetitions = 4;
        cfg.permutations = 50;
        cfg
    }

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn seeds_share_data_across_methods() {
        let a = TrialSeeds::derive(7, 3, Method::KfdaWitness);
        let b = TrialSeeds::derive(7, 3, Method::MmdBoot);
        assert_eq!(a.data, b.data);
        assert_ne!(a.permutations, b.permutations);
        assert_ne!(a.data, TrialSeeds::derive(7, 4, Method::KfdaWitness).data);
        assert_ne!(a.data, TrialSeeds::derive(8, 3, Method::KfdaWitness).data);
    }

    #[test]
    fn single_trial_is_deterministic() {
        for method in Method::ALL {
            let cfg = small(method);
            let a = run_single_trial(&cfg, 2).unwrap();
            let b = run_single_trial(&cfg, 2).unwrap();
            assert_eq!(a, b, "{method}");
        }
    }

    #[test]
    fn single_repetition_has_zero_error() {
        let mut cfg = small(Method::MmdBoot);
        cfg.repetitions = 1;
        let est = estimate_rejection_rate(&cfg).unwrap();
        assert!(est.rejection_rate == 0.0 || est.rejection_rate == 1.0);
        assert_eq!(est.std_err, 0.0);
    }

    #[test]
    fn std_err_follows_binomial_formula() {
        let e = PowerEstimate::from_count(7, 20, 0);
        assert!((e.std_err - (0.35f64 * 0.65 / 20.0).sqrt()).abs() < 1e-15);
        assert_eq!(e.rejection_rate * 20.0, 7.0);
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut cfg = small(Method::MmdBoot);
        cfg.kernel = KernelSpec::Grid(ParamGrid::default_grid().kernels().to_vec());
        assert!(cfg.validate().is_err());
        let mut cfg = small(Method::KfdaWitness);
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = small(Method::KfdaWitness);
        cfg.repetitions = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn failing_trial_reports_its_seed() {
        let mut cfg = small(Method::KfdaWitness);
        cfg.dataset = DatasetSpec::BlobsRotated { n: 1, m: 30, theta: 0.0 };
        match run_trials(&cfg) {
            Err(WitsError::Trial { trial, seed, .. }) => {
                assert_eq!(trial, 0);
                assert_eq!(seed, TrialSeeds::derive(cfg.seed, 0, cfg.method).data);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_produces_one_row_per_value() {
        let cfg = small(Method::OptMmdWitness);
        let rows = sweep(&cfg, &SweepAxis::SplitRatio(vec![0.3, 0.5])).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].r, Some(0.3));
        assert_eq!(rows[1].record().len(), RESULT_COLUMNS.len());
        let sizes = sweep(&small(Method::MmdBoot), &SweepAxis::SampleSize(vec![10, 20])).unwrap();
        assert_eq!((sizes[1].n, sizes[1].m), (20, 20));
        assert!(sweep(&cfg, &SweepAxis::Lambda(vec![])).is_err());
    }

    #[test]
    fn falkon_path_runs() {
        let mut cfg = small(Method::KfdaWitness);
        cfg.falkon = Some(FalkonSettings { centers: 10, iterations: 20 });
        cfg.repetitions = 2;
        estimate_rejection_rate(&cfg).unwrap();
    }
}
