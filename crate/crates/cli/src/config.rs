//! Experiment config files.
//!
//! ```toml
//! [dataset]
//! kind = "blobs_rotated"   # blobs_rotated | blobs_liu | csv
//! n = 100
//! theta = 0.7853981633974483
//!
//! [method]
//! name = "kfda-witness"
//!
//! [stage1]
//! split_ratio = 0.5
//! sigma = "grid"           # number | "median" | "grid" | "linear"
//! lambda = "grid"          # number | "grid"
//!
//! [stage2]
//! alpha = 0.05
//! permutations = 200
//!
//! [harness]
//! repetitions = 200
//! seed = 2022
//!
//! [sweep]
//! axis = "sample_size"     # split_ratio | sample_size | method | lambda
//! values = [100, 250, 500]
//! ```
//!
//! Every key has a default except `dataset.kind`, `dataset.n` (generated
//! data), `dataset.x_path`/`y_path` (CSV data) and `method.name`.

use std::fmt;
use std::path::{Path, PathBuf};

use toml::{Table, Value};
use wits_core::bench::{
    DatasetSpec, ExperimentConfig, FalkonSettings, KernelSpec, LambdaSpec, Method, SweepAxis,
};
use wits_core::data::CsvOptions;
use wits_core::hypotest::ThresholdMode;
use wits_core::kernel::Kernel;
use wits_core::modelsel::ParamGrid;
use wits_core::witness::SplitRatio;

/// λ used when a single-λ method is given no value.
pub const DEFAULT_LAMBDA: f64 = 1e-2;

/// Krylov iterations used when only the number of centers is given.
pub const DEFAULT_CG_ITERATIONS: usize = 50;

const SECTIONS: [(&str, &[&str]); 6] = [
    ("dataset", &["kind", "n", "m", "theta", "null", "x_path", "y_path", "columns", "delimiter"]),
    ("method", &["name"]),
    (
        "stage1",
        &["split_ratio", "sigma", "sigma_grid", "lambda", "lambda_grid", "folds", "falkon_centers", "cg_iterations"],
    ),
    ("stage2", &["alpha", "permutations", "threshold", "plus_one"]),
    ("harness", &["repetitions", "seed", "threads"]),
    ("sweep", &["axis", "values"]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub sweep: Option<SweepAxis>,
}

/// Every problem found in a config, one message per field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub problems: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config:")?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

struct Reader<'a> {
    root: &'a Table,
    problems: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(root: &'a Table) -> Self {
        let mut problems = Vec::new();
        for (key, value) in root {
            match SECTIONS.iter().find(|(name, _)| name == key) {
                None => problems.push(format!("unknown field `{key}`")),
                Some((name, allowed)) => match value {
                    Value::Table(t) => {
                        for k in t.keys().filter(|k| !allowed.contains(&k.as_str())) {
                            problems.push(format!("unknown field `{name}.{k}`"));
                        }
                    }
                    _ => problems.push(format!("`{name}` must be a section")),
                },
            }
        }
        Self { root, problems }
    }

    fn has_section(&self, section: &str) -> bool {
        matches!(self.root.get(section), Some(Value::Table(_)))
    }

    fn raw(&self, section: &str, key: &str) -> Option<&'a Value> {
        match self.root.get(section) {
            Some(Value::Table(t)) => t.get(key),
            _ => None,
        }
    }

    fn bad(&mut self, section: &str, key: &str, expected: &str) {
        self.problems.push(format!("`{section}.{key}` must be {expected}"));
    }

    fn float(&mut self, section: &str, key: &str) -> Option<f64> {
        match self.raw(section, key)? {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.bad(section, key, "a number");
                None
            }
        }
    }

    fn count(&mut self, section: &str, key: &str) -> Option<usize> {
        match self.raw(section, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as usize),
            _ => {
                self.bad(section, key, "a nonnegative integer");
                None
            }
        }
    }

    fn seed(&mut self, section: &str, key: &str) -> Option<u64> {
        match self.raw(section, key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            // Seeds above i64::MAX are written as strings.
            Value::String(s) if s.parse::<u64>().is_ok() => s.parse().ok(),
            _ => {
                self.bad(section, key, "a nonnegative integer");
                None
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<&'a str> {
        match self.raw(section, key)? {
            Value::String(s) => Some(s),
            _ => {
                self.bad(section, key, "a string");
                None
            }
        }
    }

    fn boolean(&mut self, section: &str, key: &str) -> Option<bool> {
        match self.raw(section, key)? {
            Value::Boolean(b) => Some(*b),
            _ => {
                self.bad(section, key, "true or false");
                None
            }
        }
    }

    fn float_list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let list = match self.raw(section, key)? {
            Value::Array(a) => a
                .iter()
                .map(|v| match v {
                    Value::Float(f) => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect::<Option<Vec<f64>>>(),
            _ => None,
        };
        if list.is_none() {
            self.bad(section, key, "a list of numbers");
        }
        list
    }

    fn count_list(&mut self, section: &str, key: &str) -> Option<Vec<usize>> {
        let list = match self.raw(section, key)? {
            Value::Array(a) => a
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Some(*i as usize),
                    _ => None,
                })
                .collect::<Option<Vec<usize>>>(),
            _ => None,
        };
        if list.is_none() {
            self.bad(section, key, "a list of nonnegative integers");
        }
        list
    }

    fn string_list(&mut self, section: &str, key: &str) -> Option<Vec<&'a str>> {
        let list = match self.raw(section, key)? {
            Value::Array(a) => a.iter().map(Value::as_str).collect::<Option<Vec<_>>>(),
            _ => None,
        };
        if list.is_none() {
            self.bad(section, key, "a list of strings");
        }
        list
    }

    fn positive_list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let list = self.float_list(section, key)?;
        if list.is_empty() || list.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            self.bad(section, key, "a nonempty list of positive numbers");
            return None;
        }
        Some(list)
    }
}

fn parse_method(r: &mut Reader<'_>, section: &str, key: &str, s: &str) -> Option<Method> {
    match s.parse() {
        Ok(m) => Some(m),
        Err(e) => {
            r.problems.push(format!("`{section}.{key}`: {e}"));
            None
        }
    }
}

fn parse_dataset(r: &mut Reader<'_>, base_dir: &Path) -> Option<DatasetSpec> {
    if !r.has_section("dataset") {
        r.problems.push("missing section `dataset`".into());
        return None;
    }
    let n = r.count("dataset", "n");
    let m = r.count("dataset", "m");
    let kind = match r.string("dataset", "kind") {
        Some(k) => k,
        None => {
            if r.raw("dataset", "kind").is_none() {
                r.problems.push("missing field `dataset.kind`".into());
            }
            return None;
        }
    };
    let require_n = |r: &mut Reader<'_>| {
        if n.is_none() && r.raw("dataset", "n").is_none() {
            r.problems.push(format!("missing field `dataset.n` (required for {kind})"));
        }
        n.map(|n| (n, m.unwrap_or(n)))
    };
    match kind {
        "blobs_rotated" => {
            let theta = r.float("dataset", "theta").unwrap_or(0.0);
            let (n, m) = require_n(r)?;
            Some(DatasetSpec::BlobsRotated { n, m, theta })
        }
        "blobs_liu" => {
            let null = r.boolean("dataset", "null").unwrap_or(false);
            let (n, m) = require_n(r)?;
            Some(DatasetSpec::BlobsLiu { n, m, null })
        }
        "csv" => {
            let mut path = |key: &str| -> Option<PathBuf> {
                match r.string("dataset", key) {
                    Some(p) => Some(base_dir.join(p)),
                    None => {
                        if r.raw("dataset", key).is_none() {
                            r.problems.push(format!("missing field `dataset.{key}` (required for csv)"));
                        }
                        None
                    }
                }
            };
            let x_path = path("x_path");
            let y_path = path("y_path");
            let columns = r.count_list("dataset", "columns");
            let delimiter = match r.string("dataset", "delimiter") {
                None => b',',
                Some(d) if d.len() == 1 => d.as_bytes()[0],
                Some(_) => {
                    r.bad("dataset", "delimiter", "a single character");
                    b','
                }
            };
            Some(DatasetSpec::Csv {
                x_path: x_path?,
                y_path: y_path?,
                options: CsvOptions { columns, delimiter },
                n,
                m: m.or(n),
            })
        }
        other => {
            r.problems.push(format!(
                "`dataset.kind`: unknown dataset `{other}`; expected blobs_rotated, blobs_liu or csv"
            ));
            None
        }
    }
}

fn parse_kernel(r: &mut Reader<'_>, method: Option<Method>) -> Option<KernelSpec> {
    let grid = r.positive_list("stage1", "sigma_grid");
    let default = match method {
        Some(Method::MmdBoot | Method::KfdaBoot) => KernelSpec::MedianHeuristic,
        _ => KernelSpec::Grid(ParamGrid::default_grid().kernels().to_vec()),
    };
    let grid_kernels = |g: Option<Vec<f64>>| match g {
        Some(g) => g.into_iter().map(|b| Kernel::gaussian(b).ok()).collect::<Option<Vec<_>>>().map(KernelSpec::Grid),
        None => Some(KernelSpec::Grid(ParamGrid::default_grid().kernels().to_vec())),
    };
    match r.raw("stage1", "sigma") {
        None if grid.is_some() => grid_kernels(grid),
        None => Some(default),
        Some(Value::Float(_) | Value::Integer(_)) => {
            let bw = r.float("stage1", "sigma")?;
            if !(bw > 0.0 && bw.is_finite()) {
                r.bad("stage1", "sigma", "positive");
                return None;
            }
            Some(KernelSpec::Gaussian(bw))
        }
        Some(Value::String(s)) => match s.as_str() {
            "median" => Some(KernelSpec::MedianHeuristic),
            "grid" => grid_kernels(grid),
            "linear" => Some(KernelSpec::Grid(vec![Kernel::Linear])),
            _ => {
                r.bad("stage1", "sigma", "a number, \"median\", \"grid\" or \"linear\"");
                None
            }
        },
        Some(_) => {
            r.bad("stage1", "sigma", "a number, \"median\", \"grid\" or \"linear\"");
            None
        }
    }
}

fn parse_lambda(r: &mut Reader<'_>, method: Option<Method>) -> Option<LambdaSpec> {
    let grid = r.positive_list("stage1", "lambda_grid");
    let default_grid = || ParamGrid::default_grid().lambdas().to_vec();
    match r.raw("stage1", "lambda") {
        None if grid.is_some() => grid.map(LambdaSpec::Grid),
        None => Some(match method {
            Some(Method::KfdaWitness) | None => LambdaSpec::Grid(default_grid()),
            _ => LambdaSpec::Fixed(DEFAULT_LAMBDA),
        }),
        Some(Value::String(s)) if s == "grid" => Some(LambdaSpec::Grid(grid.unwrap_or_else(default_grid))),
        Some(Value::Float(_) | Value::Integer(_)) => {
            let l = r.float("stage1", "lambda")?;
            if !(l > 0.0 && l.is_finite()) {
                r.bad("stage1", "lambda", "positive");
                return None;
            }
            Some(LambdaSpec::Fixed(l))
        }
        Some(_) => {
            r.bad("stage1", "lambda", "a positive number or \"grid\"");
            None
        }
    }
}

fn parse_sweep(r: &mut Reader<'_>) -> Option<SweepAxis> {
    if !r.has_section("sweep") {
        return None;
    }
    let axis = r.string("sweep", "axis");
    if r.raw("sweep", "axis").is_none() {
        r.problems.push("missing field `sweep.axis`".into());
    }
    if r.raw("sweep", "values").is_none() {
        r.problems.push("missing field `sweep.values`".into());
        return None;
    }
    let axis = match axis? {
        "split_ratio" => SweepAxis::SplitRatio(r.float_list("sweep", "values")?),
        "lambda" => SweepAxis::Lambda(r.positive_list("sweep", "values")?),
        "sample_size" => SweepAxis::SampleSize(r.count_list("sweep", "values")?),
        "method" => {
            let names = r.string_list("sweep", "values")?;
            let methods: Option<Vec<Method>> = names
                .into_iter()
                .map(|s| parse_method(r, "sweep", "values", s))
                .collect();
            SweepAxis::Method(methods?)
        }
        other => {
            r.problems.push(format!(
                "`sweep.axis`: unknown axis `{other}`; expected split_ratio, sample_size, method or lambda"
            ));
            return None;
        }
    };
    if axis.is_empty() {
        r.bad("sweep", "values", "nonempty");
        return None;
    }
    Some(axis)
}

/// Parses a config. Relative CSV paths are resolved against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        problems: vec![e.to_string().trim_end().to_string()],
    })?;
    let mut r = Reader::new(&root);

    let dataset = parse_dataset(&mut r, base_dir);
    let method = match r.string("method", "name") {
        Some(s) => parse_method(&mut r, "method", "name", s),
        None => {
            if r.raw("method", "name").is_none() {
                r.problems.push("missing field `method.name`".into());
            }
            None
        }
    };
    let kernel = parse_kernel(&mut r, method);
    let lambda = parse_lambda(&mut r, method);
    let split_ratio = match r.float("stage1", "split_ratio").map(SplitRatio::new) {
        None => Some(SplitRatio::default()),
        Some(Ok(s)) => Some(s),
        Some(Err(_)) => {
            r.bad("stage1", "split_ratio", "strictly between 0 and 1");
            None
        }
    };
    let folds = r.count("stage1", "folds");
    let centers = r.count("stage1", "falkon_centers");
    let iterations = r.count("stage1", "cg_iterations");
    if iterations.is_some() && centers.is_none() {
        r.problems.push("`stage1.cg_iterations` needs `stage1.falkon_centers`".into());
    }
    let falkon = centers.map(|c| FalkonSettings {
        centers: c,
        iterations: iterations.unwrap_or(DEFAULT_CG_ITERATIONS),
    });

    let alpha = r.float("stage2", "alpha");
    let permutations = r.count("stage2", "permutations");
    let threshold = match r.string("stage2", "threshold") {
        None => Some(ThresholdMode::Permutation),
        Some("permutation") => Some(ThresholdMode::Permutation),
        Some("analytic") => Some(ThresholdMode::Analytic),
        Some(_) => {
            r.bad("stage2", "threshold", "\"permutation\" or \"analytic\"");
            None
        }
    };
    let plus_one = r.boolean("stage2", "plus_one");
    let repetitions = r.count("harness", "repetitions");
    let seed = r.seed("harness", "seed");
    let threads = r.count("harness", "threads");
    let sweep = parse_sweep(&mut r);

    let (Some(dataset), Some(method), Some(kernel), Some(lambda), Some(split_ratio), Some(threshold)) =
        (dataset, method, kernel, lambda, split_ratio, threshold)
    else {
        return Err(ConfigError { problems: r.problems });
    };
    if !r.problems.is_empty() {
        return Err(ConfigError { problems: r.problems });
    }
    let mut cfg = ExperimentConfig::new(dataset, method);
    cfg.kernel = kernel;
    cfg.lambda = lambda;
    cfg.split_ratio = split_ratio;
    cfg.threshold = threshold;
    cfg.falkon = falkon;
    if let Some(v) = folds {
        cfg.folds = v;
    }
    if let Some(v) = alpha {
        cfg.alpha = v;
    }
    if let Some(v) = permutations {
        cfg.permutations = v;
    }
    if let Some(v) = plus_one {
        cfg.plus_one = v;
    }
    if let Some(v) = repetitions {
        cfg.repetitions = v;
    }
    if let Some(v) = seed {
        cfg.seed = v;
    }
    if let Some(v) = threads {
        cfg.threads = v;
    }
    if let Err(e) = cfg.validate() {
        return Err(ConfigError { problems: vec![e.to_string()] });
    }
    Ok(RunConfig { experiment: cfg, sweep })
}

fn floats(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| Value::Float(x)).collect())
}

fn seed_value(seed: u64) -> Value {
    match i64::try_from(seed) {
        Ok(s) => Value::Integer(s),
        Err(_) => Value::String(seed.to_string()),
    }
}

/// The fully resolved config as TOML, every default written out. Parsing it
/// again yields the same configuration.
pub fn resolved_toml(run: &RunConfig) -> String {
    let cfg = &run.experiment;
    let mut dataset = Table::new();
    let int = |v: usize| Value::Integer(v as i64);
    match &cfg.dataset {
        DatasetSpec::BlobsRotated { n, m, theta } => {
            dataset.insert("kind".into(), "blobs_rotated".into());
            dataset.insert("n".into(), int(*n));
            dataset.insert("m".into(), int(*m));
            dataset.insert("theta".into(), Value::Float(*theta));
        }
        DatasetSpec::BlobsLiu { n, m, null } => {
            dataset.insert("kind".into(), "blobs_liu".into());
            dataset.insert("n".into(), int(*n));
            dataset.insert("m".into(), int(*m));
            dataset.insert("null".into(), Value::Boolean(*null));
        }
        DatasetSpec::Csv { x_path, y_path, options, n, m } => {
            dataset.insert("kind".into(), "csv".into());
            dataset.insert("x_path".into(), x_path.display().to_string().into());
            dataset.insert("y_path".into(), y_path.display().to_string().into());
            if let Some(cols) = &options.columns {
                dataset.insert("columns".into(), Value::Array(cols.iter().map(|&c| int(c)).collect()));
            }
            dataset.insert("delimiter".into(), char::from(options.delimiter).to_string().into());
            if let Some(n) = n {
                dataset.insert("n".into(), int(*n));
            }
            if let Some(m) = m {
                dataset.insert("m".into(), int(*m));
            }
        }
    }

    let mut method = Table::new();
    method.insert("name".into(), cfg.method.id().into());

    let mut stage1 = Table::new();
    stage1.insert("split_ratio".into(), Value::Float(cfg.split_ratio.value()));
    match &cfg.kernel {
        KernelSpec::Gaussian(bw) => {
            stage1.insert("sigma".into(), Value::Float(*bw));
        }
        KernelSpec::MedianHeuristic => {
            stage1.insert("sigma".into(), "median".into());
        }
        KernelSpec::Grid(k) if k == &[Kernel::Linear] => {
            stage1.insert("sigma".into(), "linear".into());
        }
        KernelSpec::Grid(k) => {
            let bws: Vec<f64> = k.iter().filter_map(Kernel::bandwidth).collect();
            stage1.insert("sigma".into(), "grid".into());
            stage1.insert("sigma_grid".into(), floats(&bws));
        }
    }
    match &cfg.lambda {
        LambdaSpec::Fixed(l) => {
            stage1.insert("lambda".into(), Value::Float(*l));
        }
        LambdaSpec::Grid(l) => {
            stage1.insert("lambda".into(), "grid".into());
            stage1.insert("lambda_grid".into(), floats(l));
        }
    }
    stage1.insert("folds".into(), int(cfg.folds));
    if let Some(f) = cfg.falkon {
        stage1.insert("falkon_centers".into(), int(f.centers));
        stage1.insert("cg_iterations".into(), int(f.iterations));
    }

    let mut stage2 = Table::new();
    stage2.insert("alpha".into(), Value::Float(cfg.alpha));
    stage2.insert("permutations".into(), int(cfg.permutations));
    let threshold = match cfg.threshold {
        ThresholdMode::Analytic => "analytic",
        ThresholdMode::Permutation => "permutation",
    };
    stage2.insert("threshold".into(), threshold.into());
    stage2.insert("plus_one".into(), Value::Boolean(cfg.plus_one));

    let mut harness = Table::new();
    harness.insert("repetitions".into(), int(cfg.repetitions));
    harness.insert("seed".into(), seed_value(cfg.seed));
    harness.insert("threads".into(), int(cfg.threads));

    let mut root = Table::new();
    root.insert("dataset".into(), Value::Table(dataset));
    root.insert("method".into(), Value::Table(method));
    root.insert("stage1".into(), Value::Table(stage1));
    root.insert("stage2".into(), Value::Table(stage2));
    root.insert("harness".into(), Value::Table(harness));
    if let Some(axis) = &run.sweep {
        let mut sweep = Table::new();
        let (name, values) = match axis {
            SweepAxis::SplitRatio(v) => ("split_ratio", floats(v)),
            SweepAxis::Lambda(v) => ("lambda", floats(v)),
            SweepAxis::SampleSize(v) => ("sample_size", Value::Array(v.iter().map(|&n| int(n)).collect())),
            SweepAxis::Method(v) => ("method", Value::Array(v.iter().map(|m| m.id().into()).collect())),
        };
        sweep.insert("axis".into(), name.into());
        sweep.insert("values".into(), values);
        root.insert("sweep".into(), Value::Table(sweep));
    }
    toml::to_string(&root).expect("a TOML table always serializes")
}

/// Bandwidth and λ grids read from a `--grid` file with optional keys
/// `sigma_grid` and `lambda_grid`; a missing key keeps the default grid.
pub fn parse_grid_file(text: &str) -> Result<ParamGrid, ConfigError> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        problems: vec![e.to_string().trim_end().to_string()],
    })?;
    let mut problems: Vec<String> = root
        .keys()
        .filter(|k| *k != "sigma_grid" && *k != "lambda_grid")
        .map(|k| format!("unknown field `{k}`"))
        .collect();
    let default = ParamGrid::default_grid();
    let mut list = |key: &str| -> Option<Vec<f64>> {
        let v = root.get(key)?;
        let parsed = v.as_array().and_then(|a| {
            a.iter()
                .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
                .filter(|x| x.is_none_or(|x| x > 0.0 && x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .filter(|l| l.len() == a.len() && !l.is_empty())
        });
        if parsed.is_none() {
            problems.push(format!("`{key}` must be a nonempty list of positive numbers"));
        }
        parsed
    };
    let kernels = list("sigma_grid")
        .map(|g| g.into_iter().filter_map(|b| Kernel::gaussian(b).ok()).collect())
        .unwrap_or_else(|| default.kernels().to_vec());
    let lambdas = list("lambda_grid").unwrap_or_else(|| default.lambdas().to_vec());
    if !problems.is_empty() {
        return Err(ConfigError { problems });
    }
    ParamGrid::new(kernels, lambdas).map_err(|e| ConfigError {
        problems: vec![e.to_string()],
    })
}
