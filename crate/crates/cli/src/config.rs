//! Experiment configuration files.
//!
//! TOML, one file per experiment. Complex entries are `[re, im]` pairs (a bare
//! number is read as real); matrices are row-major nested lists.

use std::fmt;
use std::path::{Path, PathBuf};

use heisen_core::dyson::KernelOptions;
use heisen_core::hilbert::require_hermitian;
use heisen_core::markov::LindbladForm;
use heisen_core::presets;
use heisen_core::superop::SeriesTruncation;
use heisen_core::{CMatrix, Constants, DensityMatrix, Dims, ModelSpec, Operator, SpaceKind, TimeGrid, C64};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {reason}")]
    Validation { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl fmt::Display) -> ConfigError {
    ConfigError::Validation {
        path: path.into(),
        reason: reason.to_string(),
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
enum RawComplex {
    Real(f64),
    Pair([f64; 2]),
}

type RawMatrix = Vec<Vec<RawComplex>>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRandom {
    seed: u64,
    d_s: usize,
    d_b: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    preset: Option<String>,
    c: Option<f64>,
    random: Option<RawRandom>,
    lambda: f64,
    hbar: Option<f64>,
    h0: Option<RawMatrix>,
    hb: Option<RawMatrix>,
    hi: Option<RawMatrix>,
    rho0: Option<RawMatrix>,
    rho_b: Option<RawMatrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFactor {
    observable: String,
    times: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    kind: RunKind,
    order: Option<usize>,
    #[serde(default)]
    factors: Vec<RawFactor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t_max: Option<f64>,
    steps: Option<usize>,
    times: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObservable {
    name: String,
    spin: Option<String>,
    matrix: Option<RawMatrix>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarkov {
    horizon: Option<f64>,
    tolerance: Option<f64>,
    regulator: Option<f64>,
    extrapolate: Option<bool>,
    form: Option<String>,
    decay_threshold: Option<f64>,
    samples: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawValidate {
    lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    run: RawRun,
    grid: Option<RawGrid>,
    #[serde(default)]
    observables: Vec<RawObservable>,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    markov: RawMarkov,
    #[serde(default)]
    validate: RawValidate,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    OnePoint,
    NPoint,
    ImageExact,
    Lindblad,
    MarkovReport,
    Validate,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::OnePoint => "one_point",
            RunKind::NPoint => "n_point",
            RunKind::ImageExact => "image_exact",
            RunKind::Lindblad => "lindblad",
            RunKind::MarkovReport => "markov_report",
            RunKind::Validate => "validate",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Where the model came from; `validate --seed` swaps a random model in.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSource {
    Preset { name: String, c: f64 },
    Random { seed: u64, d_s: usize, d_b: usize },
    Inline,
}

#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub op: Operator,
}

/// One n-point factor: an observable and the times at which it is placed.
#[derive(Clone, Debug)]
pub struct Factor {
    pub observable: usize,
    pub times: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarkovSettings {
    pub horizon: f64,
    pub tolerance: f64,
    pub regulator: f64,
    pub extrapolate: bool,
    pub form: LindbladForm,
    pub decay_threshold: f64,
    pub samples: usize,
}

impl Default for MarkovSettings {
    fn default() -> Self {
        Self {
            horizon: 20.0,
            tolerance: 1e-6,
            regulator: 0.0,
            extrapolate: false,
            form: LindbladForm::Derived,
            decay_threshold: 1e-2,
            samples: 200,
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub source: ModelSource,
    pub kind: RunKind,
    pub truncation: SeriesTruncation,
    pub grid: TimeGrid,
    pub observables: Vec<Observable>,
    pub factors: Vec<Factor>,
    pub markov: MarkovSettings,
    pub lambdas: Vec<f64>,
    pub output: Option<PathBuf>,
    pub format: Format,
}

/// Command-line overrides applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub order: Option<usize>,
    pub lambda: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    /// Forces the run kind (the `validate` subcommand).
    pub kind: Option<RunKind>,
}

pub const DEFAULT_LAMBDAS: [f64; 4] = [1e-1, 3e-2, 1e-2, 3e-3];

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    load_config_with(path, &Overrides::default())
}

pub fn load_config_with(path: &Path, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, ov)
}

pub fn parse_config(text: &str, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    validate(raw, ov)
}

fn finite(path: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(path, format!("must be finite, got {x}")))
    }
}

fn positive(path: &str, x: f64) -> Result<f64, ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(path, format!("must be positive, got {x}")))
    }
}

fn matrix(path: &str, raw: &RawMatrix, side: usize) -> Result<CMatrix, ConfigError> {
    if raw.len() != side {
        return Err(invalid(path, format!("expected {side} rows, found {}", raw.len())));
    }
    let mut m = CMatrix::zeros(side, side);
    for (i, row) in raw.iter().enumerate() {
        if row.len() != side {
            return Err(invalid(
                format!("{path}[{i}]"),
                format!("expected {side} entries, found {}", row.len()),
            ));
        }
        for (j, z) in row.iter().enumerate() {
            let (re, im) = match *z {
                RawComplex::Real(x) => (x, 0.0),
                RawComplex::Pair([a, b]) => (a, b),
            };
            if !re.is_finite() || !im.is_finite() {
                return Err(invalid(format!("{path}[{i}][{j}]"), "entry is not finite"));
            }
            m[(i, j)] = C64::new(re, im);
        }
    }
    Ok(m)
}

fn hermitian(path: &str, m: &CMatrix) -> Result<(), ConfigError> {
    require_hermitian(m, path).map_err(|_| invalid(path, "not hermitian"))
}

/// Inferred `d` of a square nested list.
fn side_of(raw: &RawMatrix) -> usize {
    raw.len()
}

fn inline_model(raw: &RawModel, constants: Constants) -> Result<ModelSpec, ConfigError> {
    let need = |field: &str, v: &Option<RawMatrix>| -> Result<RawMatrix, ConfigError> {
        v.clone()
            .ok_or_else(|| invalid(format!("model.{field}"), "required for an inline model"))
    };
    let h0_raw = need("h0", &raw.h0)?;
    let hb_raw = need("hb", &raw.hb)?;
    let hi_raw = need("hi", &raw.hi)?;
    let rho_b_raw = need("rho_b", &raw.rho_b)?;
    let d_s = side_of(&h0_raw);
    let d_b = side_of(&hb_raw);
    let dims = Dims::new(d_s, d_b).map_err(|e| invalid("model", e))?;
    let h0 = matrix("model.h0", &h0_raw, d_s)?;
    hermitian("model.h0", &h0)?;
    let hb = matrix("model.hb", &hb_raw, d_b)?;
    hermitian("model.hb", &hb)?;
    let hi = matrix("model.hi", &hi_raw, d_s * d_b)?;
    hermitian("model.hi", &hi)?;
    let rho_b = matrix("model.rho_b", &rho_b_raw, d_b)?;
    let rho_b = Operator::bath(rho_b, dims)
        .and_then(DensityMatrix::new)
        .map_err(|e| invalid("model.rho_b", e))?;
    let rho0 = match &raw.rho0 {
        Some(r) => {
            let m = matrix("model.rho0", r, d_s)?;
            Operator::system(m, dims)
                .and_then(DensityMatrix::new)
                .map_err(|e| invalid("model.rho0", e))?
        }
        None => DensityMatrix::maximally_mixed(SpaceKind::System, dims),
    };
    let op = |m: CMatrix, kind: SpaceKind, path: &str| {
        match kind {
            SpaceKind::System => Operator::system(m, dims),
            SpaceKind::Bath => Operator::bath(m, dims),
            SpaceKind::Full => Operator::full(m, dims),
        }
        .map_err(|e| invalid(path, e))
    };
    ModelSpec::new(
        op(h0, SpaceKind::System, "model.h0")?,
        op(hb, SpaceKind::Bath, "model.hb")?,
        op(hi, SpaceKind::Full, "model.hi")?,
        constants,
        rho0,
        rho_b,
    )
    .map_err(|e| invalid("model", e))
}

fn build_model(raw: &RawModel, lambda: f64, seed: Option<u64>) -> Result<(ModelSpec, ModelSource), ConfigError> {
    let hbar = positive("model.hbar", raw.hbar.unwrap_or(1.0))?;
    let constants = Constants::new(hbar, lambda).map_err(|e| invalid("model.lambda", e))?;
    let inline = [&raw.h0, &raw.hb, &raw.hi, &raw.rho0, &raw.rho_b]
        .iter()
        .any(|m| m.is_some());
    let sources = usize::from(raw.preset.is_some()) + usize::from(raw.random.is_some()) + usize::from(inline);
    if sources > 1 {
        return Err(invalid("model", "give exactly one of preset, random or inline matrices"));
    }
    if let Some(seed) = seed {
        let (d_s, d_b) = raw.random.as_ref().map_or((2, 3), |r| (r.d_s, r.d_b));
        return random(seed, d_s, d_b, constants);
    }
    if let Some(name) = &raw.preset {
        if !presets::PRESET_NAMES.contains(&name.as_str()) {
            return Err(invalid(
                "model.preset",
                format!("unknown preset {name:?}; known: {}", presets::PRESET_NAMES.join(", ")),
            ));
        }
        if raw.hbar.is_some() && name != "two_qubit" {
            return Err(invalid("model.hbar", format!("preset {name} fixes ħ = 1")));
        }
        let c = raw.c.unwrap_or(0.0);
        if raw.c.is_some() && name != "two_qubit" {
            return Err(invalid("model.c", format!("preset {name} takes no c")));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(invalid("model.c", format!("must lie in [0, 1], got {c}")));
        }
        let m = match name.as_str() {
            "two_qubit" => presets::two_qubit(c, lambda, hbar),
            other => presets::by_name(other, c, lambda).expect("name checked above"),
        }
        .map_err(|e| invalid("model", e))?;
        return Ok((m, ModelSource::Preset { name: name.clone(), c }));
    }
    if raw.c.is_some() {
        return Err(invalid("model.c", "only valid with a preset"));
    }
    if let Some(r) = &raw.random {
        return random(r.seed, r.d_s, r.d_b, constants);
    }
    if !inline {
        return Err(invalid("model", "missing: give preset, random or inline matrices"));
    }
    Ok((inline_model(raw, constants)?, ModelSource::Inline))
}

fn random(seed: u64, d_s: usize, d_b: usize, constants: Constants) -> Result<(ModelSpec, ModelSource), ConfigError> {
    if d_s == 0 || d_b == 0 || d_s * d_b > 64 {
        return Err(invalid("model.random", format!("unsupported dimensions d_S = {d_s}, d_B = {d_b}")));
    }
    let m = presets::random_model(seed, d_s, d_b, constants.lambda)
        .map_err(|e| invalid("model.random", e))?;
    // Random models use ħ = 1; rescale when asked for a different ħ.
    let m = if constants.hbar != 1.0 {
        ModelSpec::new(
            m.h0().clone(),
            m.hb().clone(),
            m.hi().clone(),
            constants,
            m.rho0().clone(),
            m.rho_b().clone(),
        )
        .map_err(|e| invalid("model.random", e))?
    } else {
        m
    };
    Ok((m, ModelSource::Random { seed, d_s, d_b }))
}

fn observable(i: usize, raw: &RawObservable, dims: Dims, hbar: f64) -> Result<Observable, ConfigError> {
    let path = format!("observables[{i}]");
    if raw.name.trim().is_empty() {
        return Err(invalid(format!("{path}.name"), "must not be empty"));
    }
    let op = match (&raw.spin, &raw.matrix) {
        (Some(_), Some(_)) => return Err(invalid(&path, "give either spin or matrix, not both")),
        (None, None) => return Err(invalid(&path, "missing spin or matrix")),
        (Some(axis), None) => {
            if dims.system != 2 {
                return Err(invalid(format!("{path}.spin"), "spin observables need d_S = 2"));
            }
            let k = match axis.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                other => return Err(invalid(format!("{path}.spin"), format!("unknown axis {other:?}"))),
            };
            presets::spin_system(k, dims, hbar)
        }
        (None, Some(m)) => {
            let mp = format!("{path}.matrix");
            let m = matrix(&mp, m, dims.system)?;
            Operator::system(m, dims).map_err(|e| invalid(&mp, e))?
        }
    };
    Ok(Observable {
        name: raw.name.clone(),
        op,
    })
}

fn grid(raw: Option<&RawGrid>) -> Result<TimeGrid, ConfigError> {
    let Some(g) = raw else {
        return TimeGrid::uniform(1.0, 10).map_err(|e| invalid("grid", e));
    };
    if g.times.is_some() && (g.t_max.is_some() || g.steps.is_some()) {
        return Err(invalid("grid", "give either times or t_max/steps"));
    }
    match (&g.times, g.t_max) {
        (Some(ts), _) => {
            for (k, t) in ts.iter().enumerate() {
                finite(&format!("grid.times[{k}]"), *t)?;
            }
            TimeGrid::from_points(ts.iter().copied()).map_err(|e| invalid("grid.times", e))
        }
        (None, t_max) => {
            let t_max = finite("grid.t_max", t_max.unwrap_or(1.0))?;
            if t_max < 0.0 {
                return Err(invalid("grid.t_max", "must be non-negative"));
            }
            let steps = g.steps.unwrap_or(10);
            if steps == 0 {
                return Err(invalid("grid.steps", "must be at least 1"));
            }
            TimeGrid::uniform(t_max, steps).map_err(|e| invalid("grid", e))
        }
    }
}

fn markov(raw: &RawMarkov) -> Result<MarkovSettings, ConfigError> {
    let d = MarkovSettings::default();
    let form = match raw.form.as_deref() {
        None | Some("derived") => LindbladForm::Derived,
        Some("literal") => LindbladForm::Literal,
        Some(other) => return Err(invalid("markov.form", format!("expected derived or literal, got {other:?}"))),
    };
    let regulator = finite("markov.regulator", raw.regulator.unwrap_or(d.regulator))?;
    if regulator < 0.0 {
        return Err(invalid("markov.regulator", "must be non-negative"));
    }
    let samples = raw.samples.unwrap_or(d.samples);
    if samples < 2 {
        return Err(invalid("markov.samples", "must be at least 2"));
    }
    Ok(MarkovSettings {
        horizon: positive("markov.horizon", raw.horizon.unwrap_or(d.horizon))?,
        tolerance: positive("markov.tolerance", raw.tolerance.unwrap_or(d.tolerance))?,
        regulator,
        extrapolate: raw.extrapolate.unwrap_or(d.extrapolate),
        form,
        decay_threshold: positive("markov.decay_threshold", raw.decay_threshold.unwrap_or(d.decay_threshold))?,
        samples,
    })
}

fn validate(raw: RawConfig, ov: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let lambda = finite("model.lambda", ov.lambda.unwrap_or(raw.model.lambda))?;
    let kind = ov.kind.unwrap_or(raw.run.kind);
    if ov.seed.is_some() && kind != RunKind::Validate {
        return Err(invalid("run.kind", "--seed is only valid for validate runs"));
    }
    let (model, source) = build_model(&raw.model, lambda, ov.seed)?;
    let order = ov.order.or(raw.run.order).unwrap_or(2);
    let cap = KernelOptions::default().order_cap;
    if order > cap {
        return Err(invalid("run.order", format!("{order} exceeds the kernel cap {cap}")));
    }
    if kind == RunKind::Validate && order == 0 {
        return Err(invalid("run.order", "validate needs order ≥ 1"));
    }
    let truncation = SeriesTruncation::new(order, lambda).map_err(|e| invalid("run.order", e))?;
    let grid = grid(raw.grid.as_ref())?;

    let mut observables = Vec::with_capacity(raw.observables.len());
    for (i, o) in raw.observables.iter().enumerate() {
        let ob = observable(i, o, model.dims(), model.hbar())?;
        if observables.iter().any(|x: &Observable| x.name == ob.name) {
            return Err(invalid(format!("observables[{i}].name"), format!("duplicate name {:?}", ob.name)));
        }
        observables.push(ob);
    }
    if observables.is_empty() && kind != RunKind::MarkovReport {
        return Err(invalid("observables", "empty observable list"));
    }

    let mut factors = Vec::with_capacity(raw.run.factors.len());
    // Factors only matter to n_point runs but are checked whenever present.
    for (i, f) in raw.run.factors.iter().enumerate() {
        let path = format!("run.factors[{i}]");
        let idx = observables
            .iter()
            .position(|o| o.name == f.observable)
            .ok_or_else(|| invalid(format!("{path}.observable"), format!("no observable named {:?}", f.observable)))?;
        if f.times.is_empty() {
            return Err(invalid(format!("{path}.times"), "must not be empty"));
        }
        for (k, t) in f.times.iter().enumerate() {
            if !(t.is_finite() && *t >= 0.0) {
                return Err(invalid(format!("{path}.times[{k}]"), format!("must be finite and non-negative, got {t}")));
            }
        }
        if let Some(first) = factors.first() {
            let first: &Factor = first;
            if first.times.len() != f.times.len() {
                return Err(invalid(
                    format!("{path}.times"),
                    format!("expected {} times like run.factors[0], found {}", first.times.len(), f.times.len()),
                ));
            }
        }
        factors.push(Factor {
            observable: idx,
            times: f.times.clone(),
        });
    }
    if kind == RunKind::NPoint && factors.is_empty() {
        return Err(invalid("run.factors", "n_point runs need at least one factor"));
    }
    if raw.run.kind != RunKind::NPoint && !factors.is_empty() {
        return Err(invalid("run.factors", "only valid for n_point runs"));
    }

    let lambdas = raw.validate.lambdas.clone().unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    if kind == RunKind::Validate {
        if lambdas.len() < 2 {
            return Err(invalid("validate.lambdas", "need at least two values for a slope"));
        }
        for (k, l) in lambdas.iter().enumerate() {
            positive(&format!("validate.lambdas[{k}]"), *l)?;
        }
        if grid.times().iter().all(|&t| t == 0.0) {
            return Err(invalid("grid", "validate needs a positive time"));
        }
    }

    Ok(ExperimentConfig {
        model,
        source,
        kind,
        truncation,
        grid,
        observables,
        factors,
        markov: markov(&raw.markov)?,
        lambdas,
        output: ov.output.clone().or(raw.output.path),
        format: ov.format.or(raw.output.format).unwrap_or_default(),
    })
}
