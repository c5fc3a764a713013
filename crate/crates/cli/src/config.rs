//! Experiment configuration: JSON schema, strict parsing and semantic
//! validation into core types.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use opplab_core::law::{check_rho, RhoFamily, TheoremId, TriangularArray, WeightScheme};
use opplab_core::model::{B1Init, FSpec};
use opplab_core::rational::parse_rational;
use opplab_core::{DistributionFamily, Mode, ModelSpec, Phi, QSpec, SamplerOptions, Scheme};
use serde::{Deserialize, Serialize};

/// Configuration failures, mapped to exit codes 2 (parse) and 3 (schema).
#[derive(Debug)]
pub enum ConfigError {
    Parse(String),
    Schema(Vec<String>),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Parse(m) => write!(f, "config parse error: {m}"),
            ConfigError::Schema(v) => {
                writeln!(f, "config schema violations:")?;
                for m in v {
                    writeln!(f, "  - {m}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `luroth`, `engel`, `sylvester` or `custom`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    /// Polynomial coefficients `c_0, c_1, ...` as `"p/q"` strings.
    #[serde(default)]
    pub phi: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub phi_table: BTreeMap<u64, String>,
    #[serde(default)]
    pub q: Option<QConfig>,
    #[serde(default)]
    pub f: Option<FConfig>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub l: Option<f64>,
    /// Fixed `B_1`; drawn from the default law when absent.
    #[serde(default)]
    pub b1: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum QConfig {
    Constant(String),
    LastDigitReciprocal(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FConfig {
    Stationary(DistributionFamily),
    PerIndex(Vec<DistributionFamily>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Expand,
    Sample,
    Verify,
    Law,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskKind::Expand => "expand",
            TaskKind::Sample => "sample",
            TaskKind::Verify => "verify",
            TaskKind::Law => "law",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Expand(ExpandTask),
    Sample(SampleTask),
    Verify(VerifyTask),
    Law(LawTask),
}

impl TaskConfig {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskConfig::Expand(_) => TaskKind::Expand,
            TaskConfig::Sample(_) => TaskKind::Sample,
            TaskConfig::Verify(_) => TaskKind::Verify,
            TaskConfig::Law(_) => TaskKind::Law,
        }
    }
}

fn default_max_digits() -> usize {
    10_000
}

fn default_v_bits() -> u32 {
    64
}

fn default_mode() -> Mode {
    Mode::Fast
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandTask {
    pub scheme: Scheme,
    /// Rational in `(0, 1)` as `"p/q"`.
    pub x: String,
    #[serde(default = "default_max_digits")]
    pub max_digits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleTask {
    /// Digits per trajectory.
    pub n: usize,
    pub replications: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_v_bits")]
    pub v_bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    Dominance,
    TruncMoments,
    TailSum,
    MomentBound,
    SecondMoment,
    CovBound,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub u: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub r: f64,
    #[serde(default = "one")]
    pub p: f64,
    #[serde(default = "two")]
    pub j0: usize,
}

fn one() -> f64 {
    1.0
}

fn two() -> usize {
    2
}

impl WeightsConfig {
    pub fn scheme(&self) -> opplab_core::Result<WeightScheme> {
        WeightScheme::new(self.u, self.v, self.s, self.r, self.p, self.j0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub n_exp: f64,
    #[serde(default)]
    pub n_log_exp: f64,
    #[serde(default)]
    pub j_exp: f64,
    #[serde(default = "one")]
    pub m_exp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyTask {
    pub lemma: LemmaId,
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Digit index `n` for the single-index checks.
    #[serde(default = "default_index")]
    pub index: usize,
    #[serde(default)]
    pub x_grid: Vec<f64>,
    #[serde(default)]
    pub q_grid: Vec<f64>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub weights: Option<WeightsConfig>,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub l_prime: Option<f64>,
    #[serde(default)]
    pub pairs: Vec<(usize, usize)>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_v_bits")]
    pub v_bits: u32,
}

fn default_samples() -> u64 {
    100_000
}

fn default_index() -> usize {
    1
}

fn default_centering_reps() -> u64 {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawTask {
    pub theorem: TheoremId,
    #[serde(default)]
    pub weights: Option<WeightsConfig>,
    #[serde(default)]
    pub array: Option<ArrayConfig>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub rho: Option<RhoFamily>,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default)]
    pub replications: u64,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_centering_reps")]
    pub centering_replications: u64,
    /// Horizon for the weight-condition trends; defaults to the largest grid
    /// point (at least 1000).
    #[serde(default)]
    pub validation_horizon: Option<u64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default = "default_v_bits")]
    pub v_bits: u32,
}

impl ExperimentConfig {
    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    pub fn output_dir(&self) -> &Path {
        self.output_dir.as_deref().expect("validated")
    }
}

/// Reads and parses a config file; JSON errors (and unreadable files) are
/// parse errors, shape errors carry their field path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let de = value;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        ConfigError::Schema(vec![if path == "." { inner } else { format!("{path}: {inner}") }])
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Everything a run needs, checked up front.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
}

fn rational(s: &str, what: &str, errs: &mut Vec<String>) -> Option<opplab_core::Rational> {
    match parse_rational(s) {
        Ok(r) => Some(r),
        Err(e) => {
            errs.push(format!("{what}: {e}"));
            None
        }
    }
}

pub fn build_model(m: &ModelConfig, errs: &mut Vec<String>) -> Option<ModelSpec> {
    let preset = m.preset.as_deref().unwrap_or(if m.phi.is_some() { "custom" } else { "luroth" });
    let mut model = match preset {
        "custom" => {
            let Some(coeffs) = &m.phi else {
                errs.push("model.phi: required for a custom model".into());
                return None;
            };
            let coeffs: Vec<_> = coeffs.iter().map(|c| rational(c, "model.phi", errs)).collect::<Option<_>>()?;
            let table = m
                .phi_table
                .iter()
                .map(|(k, v)| rational(v, &format!("model.phi_table.{k}"), errs).map(|r| (*k, r)))
                .collect::<Option<_>>()?;
            let phi = match Phi::with_table(coeffs, table) {
                Ok(p) => p,
                Err(e) => {
                    errs.push(format!("model.phi: {e}"));
                    return None;
                }
            };
            let mut base = ModelSpec::luroth();
            base.name = "custom".into();
            base.phi = phi;
            base
        }
        name => {
            if m.phi.is_some() || !m.phi_table.is_empty() {
                errs.push(format!("model.phi: not allowed with preset {name:?} (use preset \"custom\")"));
            }
            match ModelSpec::by_name(name) {
                Ok(s) => s,
                Err(e) => {
                    errs.push(format!("model.preset: {e}"));
                    return None;
                }
            }
        }
    };
    if let Some(name) = &m.name {
        model.name = name.clone();
    }
    if let Some(q) = &m.q {
        model.q = match q {
            QConfig::Constant(v) => QSpec::Constant { value: rational(v, "model.q.constant", errs)? },
            QConfig::LastDigitReciprocal(c) => QSpec::LastDigitReciprocal {
                c: rational(c, "model.q.last-digit-reciprocal", errs)?,
            },
        };
    }
    if let Some(f) = &m.f {
        model.f = match f {
            FConfig::Stationary(f) => FSpec::Stationary(f.clone()),
            FConfig::PerIndex(v) => FSpec::PerIndex(v.clone()),
        };
        // declared (alpha, L) default to the first family's leading term
        if let Some(first) = model.f.families().first() {
            model.alpha_meta = Some(first.alpha());
            model.l_meta = Some(first.power_terms()[0].0);
        }
    }
    if let Some(a) = m.alpha {
        model.alpha_meta = Some(a);
    }
    if let Some(l) = m.l {
        model.l_meta = Some(l);
    }
    if let Some(b) = m.b1 {
        model.b1 = B1Init::Fixed(b);
    }
    if let Err(e) = model.validate() {
        errs.push(format!("model: {e}"));
        return None;
    }
    Some(model)
}

fn check_grid_field(name: &str, g: &[u64], min: u64, errs: &mut Vec<String>) {
    if g.is_empty() {
        errs.push(format!("{name}: required"));
    } else if g.windows(2).any(|w| w[1] <= w[0]) || g[0] < min {
        errs.push(format!("{name}: must be strictly increasing with entries >= {min}"));
    }
}

fn check_bits(task: &str, bits: u32, errs: &mut Vec<String>) {
    if !(1..=128).contains(&bits) {
        errs.push(format!("task.{task}.v_bits: must be in 1..=128, got {bits}"));
    }
}

fn validate_verify(t: &VerifyTask, model: Option<&ModelSpec>, errs: &mut Vec<String>) {
    let need_weights = |errs: &mut Vec<String>| match &t.weights {
        None => errs.push("task.verify.weights: required for this lemma".into()),
        Some(w) => {
            if let Err(e) = w.scheme() {
                errs.push(format!("task.verify.weights: {e}"));
            }
        }
    };
    check_bits("verify", t.v_bits, errs);
    match t.lemma {
        LemmaId::Dominance => {
            if t.x_grid.is_empty() || t.x_grid.iter().any(|x| !(x.is_finite() && *x >= 1.0)) {
                errs.push("task.verify.x_grid: non-empty list of values >= 1 required".into());
            }
            if t.samples < 100_000 {
                errs.push(format!("task.verify.samples: dominance needs at least 100000, got {}", t.samples));
            }
            if t.index == 0 {
                errs.push("task.verify.index: must be >= 1".into());
            }
        }
        LemmaId::TruncMoments => {
            if t.q_grid.is_empty() || t.q_grid.iter().any(|q| !(*q > 0.0)) {
                errs.push("task.verify.q_grid: non-empty list of positive values required".into());
            }
            if t.t_grid.is_empty() || t.t_grid.iter().any(|x| !(*x >= 1.0)) {
                errs.push("task.verify.t_grid: non-empty list of values >= 1 required".into());
            }
            if t.index == 0 {
                errs.push("task.verify.index: must be >= 1".into());
            }
        }
        LemmaId::TailSum => {
            need_weights(errs);
            check_grid_field("task.verify.n_grid", &t.n_grid, 2, errs);
        }
        LemmaId::MomentBound => {
            need_weights(errs);
            check_grid_field("task.verify.n_grid", &t.n_grid, 2, errs);
            if t.samples < 2 {
                errs.push("task.verify.samples: at least 2 required".into());
            }
            match (t.p, t.l_prime, model) {
                (Some(p), Some(lp), Some(m)) => {
                    if let Some(a) = m.alpha_meta {
                        if !(p >= a) {
                            errs.push(format!("task.verify.p: must be >= alpha = {a}, got {p}"));
                        }
                    }
                    if let Some(l) = m.l_meta {
                        if !(lp > l) {
                            errs.push(format!("task.verify.l_prime: must exceed L = {l}, got {lp}"));
                        }
                    }
                }
                (p, lp, _) => {
                    if p.is_none() {
                        errs.push("task.verify.p: required".into());
                    }
                    if lp.is_none() {
                        errs.push("task.verify.l_prime: required".into());
                    }
                }
            }
        }
        LemmaId::SecondMoment => {
            need_weights(errs);
            check_grid_field("task.verify.n_grid", &t.n_grid, 2, errs);
            if t.n_grid.len() < 2 {
                errs.push("task.verify.n_grid: at least two points needed to fit and verify".into());
            }
            if t.samples < 4 {
                errs.push("task.verify.samples: at least 4 required".into());
            }
        }
        LemmaId::CovBound => {
            if t.pairs.is_empty() || t.pairs.iter().any(|&(i, j)| i < 2 || j < 2) {
                errs.push("task.verify.pairs: non-empty list of index pairs >= 2 required".into());
            }
            match t.p {
                None => errs.push("task.verify.p: required".into()),
                Some(p) if !(p >= 2.0) => errs.push(format!("task.verify.p: p must be ≥ 2, got {p}")),
                _ => {}
            }
            if t.samples < 4 {
                errs.push("task.verify.samples: at least 4 required".into());
            }
        }
    }
}

fn validate_law(t: &LawTask, errs: &mut Vec<String>) {
    check_bits("law", t.v_bits, errs);
    let needs_series = t.theorem != TheoremId::Lemma3;
    if needs_series {
        check_grid_field("task.law.n_grid", &t.n_grid, 2, errs);
        if t.replications == 0 {
            errs.push("task.law.replications: must be positive".into());
        }
        if t.epsilons.is_empty() || t.epsilons.iter().any(|e| !(*e > 0.0)) {
            errs.push("task.law.epsilons: non-empty list of positive values required".into());
        }
    }
    let horizon = resolved_horizon(t);
    match t.theorem {
        TheoremId::Lemma3 | TheoremId::Thm1 | TheoremId::Thm2 | TheoremId::Thm3 => match &t.weights {
            None => errs.push("task.law.weights: required".into()),
            Some(w) => {
                if let Err(e) = w.scheme() {
                    errs.push(format!("task.law.weights: {e}"));
                }
                if matches!(t.theorem, TheoremId::Thm1 | TheoremId::Thm2) && !(w.p > 1.0) {
                    errs.push(format!("task.law.weights.p: must exceed 1, got {}", w.p));
                }
            }
        },
        TheoremId::Thm4 => match &t.array {
            None => errs.push("task.law.array: required".into()),
            Some(a) => {
                let top = horizon.max(t.n_grid.last().copied().unwrap_or(0));
                if let Err(e) = TriangularArray::new(a.scale, a.n_exp, a.n_log_exp, a.j_exp, a.m_exp, top as usize) {
                    errs.push(format!("task.law.array: {e}"));
                }
            }
        },
        TheoremId::Thm5 => {
            match t.beta {
                None => errs.push("task.law.beta: required".into()),
                Some(b) if !(b > 0.0) => errs.push(format!("task.law.beta: beta must be > 0, got {b}")),
                _ => {}
            }
            match t.p {
                None => errs.push("task.law.p: required".into()),
                Some(p) if !(p >= 2.0) => errs.push(format!("task.law.p: p must be ≥ 2, got {p}")),
                _ => {}
            }
            match &t.rho {
                None => errs.push("task.law.rho: required".into()),
                Some(r) => {
                    if let Ok(c) = check_rho(r, horizon as usize) {
                        if !c.closed_form_summable {
                            errs.push("task.law.rho: sum of 1/rho(n)^2 diverges".into());
                        }
                    }
                }
            }
        }
    }
}

pub fn resolved_horizon(t: &LawTask) -> u64 {
    t.validation_horizon
        .unwrap_or_else(|| t.n_grid.last().copied().unwrap_or(0))
        .max(1000)
}

/// Applies command-line overrides and checks every semantic constraint,
/// collecting all violations.
pub fn resolve(
    mut config: ExperimentConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
    expected: Option<TaskKind>,
) -> Result<Resolved, ConfigError> {
    if seed.is_some() {
        config.seed = seed;
    }
    if out.is_some() {
        config.output_dir = out;
    }
    let mut errs = Vec::new();
    if config.seed.is_none() {
        errs.push("seed: required (in the config or via --seed)".into());
    }
    if config.output_dir.is_none() {
        errs.push("output_dir: required (in the config or via --out)".into());
    }
    if config.threads == Some(0) {
        errs.push("threads: must be positive".into());
    }
    if let Some(kind) = expected {
        if config.task.kind() != kind {
            errs.push(format!("task: config describes a {} task, command is {kind}", config.task.kind()));
        }
    }
    let model = build_model(&config.model, &mut errs);
    match &config.task {
        TaskConfig::Expand(t) => {
            match parse_rational(&t.x) {
                Ok(x) => {
                    use opplab_core::rational::int;
                    if !(x > int(0) && x < int(1)) {
                        errs.push(format!("task.expand.x: must lie in (0, 1), got {}", t.x));
                    }
                }
                Err(e) => errs.push(format!("task.expand.x: {e}")),
            }
            if t.max_digits == 0 {
                errs.push("task.expand.max_digits: must be positive".into());
            }
        }
        TaskConfig::Sample(t) => {
            if t.n < 1 {
                errs.push("task.sample.n: must be positive".into());
            }
            if t.replications == 0 {
                errs.push("task.sample.replications: must be positive".into());
            }
            check_bits("sample", t.v_bits, &mut errs);
        }
        TaskConfig::Verify(t) => validate_verify(t, model.as_ref(), &mut errs),
        TaskConfig::Law(t) => validate_law(t, &mut errs),
    }
    match (errs.is_empty(), model) {
        (true, Some(model)) => Ok(Resolved { config, model }),
        _ => Err(ConfigError::Schema(errs)),
    }
}

pub fn sampler_options(mode: Mode, v_bits: u32) -> SamplerOptions {
    SamplerOptions { mode, v_bits }
}
