//! Output of `wits test`.

use wits_core::bench::{ExperimentConfig, TrialResult};
use wits_core::Kernel;

pub const REPORT_COLUMNS: [&str; 15] = [
    "method",
    "x",
    "y",
    "n",
    "m",
    "r",
    "sigma",
    "lambda",
    "alpha",
    "B",
    "statistic",
    "p_value",
    "threshold",
    "reject",
    "seed",
];

pub struct TestReport<'a> {
    pub x: &'a str,
    pub y: &'a str,
    pub n: usize,
    pub m: usize,
    pub config: &'a ExperimentConfig,
    pub result: &'a TrialResult,
}

fn kernel_name(k: &Kernel) -> String {
    match k.bandwidth() {
        Some(b) => b.to_string(),
        None => "linear".into(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

impl TestReport<'_> {
    pub fn record(&self) -> Vec<String> {
        let o = &self.result.outcome;
        let splits = self.config.method.splits();
        vec![
            self.config.method.id().into(),
            self.x.into(),
            self.y.into(),
            self.n.to_string(),
            self.m.to_string(),
            if splits { self.config.split_ratio.value().to_string() } else { String::new() },
            kernel_name(&self.result.kernel),
            opt(self.result.lambda),
            o.alpha.to_string(),
            o.num_permutations.map_or(String::new(), |b| b.to_string()),
            o.statistic.to_string(),
            opt(o.p_value),
            opt(o.threshold),
            o.reject.to_string(),
            self.config.seed.to_string(),
        ]
    }

    pub fn human(&self) -> String {
        let o = &self.result.outcome;
        let mut lines = vec![
            format!("method     {}", self.config.method),
            format!("samples    n = {}, m = {}", self.n, self.m),
            format!("kernel     {}", match self.result.kernel.bandwidth() {
                Some(b) => format!("gaussian, sigma = {b}"),
                None => "linear".into(),
            }),
        ];
        if let Some(l) = self.result.lambda {
            lines.push(format!("lambda     {l}"));
        }
        if self.config.method.splits() {
            lines.push(format!("split      r = {}", self.config.split_ratio.value()));
        }
        lines.push(format!("statistic  {}", o.statistic));
        if let Some(p) = o.p_value {
            lines.push(format!("p-value    {p} (B = {})", o.num_permutations.unwrap_or(0)));
        }
        if let Some(t) = o.threshold {
            lines.push(format!("threshold  {t}"));
        }
        let decision = if o.reject { "reject H0" } else { "fail to reject H0" };
        lines.push(format!("decision   {decision} at alpha = {}", o.alpha));
        lines.join("\n")
    }
}
