//! `key = value` experiment settings.
//!
//! Files hold one assignment per line; `#` starts a comment and nested
//! settings use dotted keys such as `train.initial_lr`. Every key can also
//! be given on the command line as `--<key> <value>`, which wins over the
//! file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use coil::denoise::{DenoiserKind, DenoiserSpec};
use coil::field::{FfmConfig, FfmMode, MlpConfig, TrainConfig};
use coil::solvers::Algorithm;
use coil::FbpWindow;

/// Every recognised key, its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed for noise and training"),
    ("output_dir", ".", "directory for every output file"),
    ("jobs", "1", "grid cells run in parallel"),
    ("timing", "true", "record wall-clock time in metric rows (false writes 0)"),
    ("phantom_side", "64", "phantom and reconstruction grid side"),
    ("views_list", "60,90,120", "measured view counts"),
    ("snr_list_db", "30,40,50", "measurement input SNRs in dB"),
    ("field_views", "360", "views synthesised from the trained field"),
    ("ffm_mode", "linear", "Fourier feature mapping: none, positional or linear"),
    ("L", "10", "number of Fourier feature frequencies"),
    ("mlp_profile", "desk", "network size: desk or paper"),
    ("train.initial_lr", "0.005", "Adam learning rate at epoch 0"),
    ("train.lr_decay", "0.99", "learning-rate factor per epoch"),
    ("train.epochs", "300", "training epochs"),
    ("train.batch_size", "256", "samples per Adam step"),
    ("train.adam_beta1", "0.9", "Adam first-moment decay"),
    ("train.adam_beta2", "0.999", "Adam second-moment decay"),
    ("train.adam_eps", "1e-8", "Adam denominator offset"),
    (
        "methods",
        "fbp,fbp_coil,fista_tv:0,fista_tv:0.5,gm_red:0,gm_red:0.5,pnp_fista:0,pnp_fista:0.5",
        "reconstruction methods, each optionally suffixed with :alpha",
    ),
    ("fbp.window", "ram_lak", "FBP filter window: ram_lak or hann"),
    ("solver.max_iters", "1000", "iteration cap for the iterative solvers"),
    ("solver.stop_tol", "1e-6", "relative-change stopping tolerance"),
    ("solver.power_iters", "50", "power iterations for the step size"),
    ("solver.init", "fbp", "starting image: zeros or fbp"),
    ("fista_tv.tv_weight", "0.1", "TV weight of FISTA-TV"),
    ("gm_red.red_weight", "200", "RED weight"),
    ("gm_red.denoiser", "gaussian", "RED denoiser: identity, gaussian or tv"),
    ("gm_red.sigma", "1", "RED denoiser strength"),
    ("pnp_fista.denoiser", "tv", "PnP denoiser: identity, gaussian or tv"),
    ("pnp_fista.sigma", "3e-5", "PnP denoiser strength"),
];

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d)
}

/// Raw settings: defaults, then a config file, then flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Default for Settings {
    fn default() -> Self {
        Self { values: KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect() }
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if default_of(key).is_none() {
            bail!("unknown setting '{key}'");
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("every key has a default")
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected 'key = value', got '{line}'", n + 1))?;
            self.set(key.trim(), value).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `key = value` lines for every key that affects results, sorted.
    /// Used as the identity of a grid cell's inputs.
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "output_dir" | "jobs" | "timing"))
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

impl fmt::Display for Settings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.values {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpProfile {
    Desk,
    Paper,
}

impl MlpProfile {
    pub fn mlp(self, input_dim: usize) -> MlpConfig {
        match self {
            Self::Desk => MlpConfig::desk(input_dim),
            Self::Paper => MlpConfig::paper(input_dim),
        }
    }
}

impl FromStr for MlpProfile {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            other => bail!("unknown mlp profile '{other}' (expected desk or paper)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Fbp,
    FbpCoil,
    Iterative(Algorithm),
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Fbp => "fbp",
            Self::FbpCoil => "fbp_coil",
            Self::Iterative(a) => a.as_str(),
        }
    }

    pub fn uses_field(&self) -> bool {
        matches!(self, Self::FbpCoil)
    }
}

impl FromStr for Method {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fbp" => Ok(Self::Fbp),
            "fbp_coil" => Ok(Self::FbpCoil),
            other => Ok(Self::Iterative(other.parse().map_err(|_| {
                anyhow!("unknown method '{other}' (expected fbp, fbp_coil, fista_tv, gm_red or pnp_fista)")
            })?)),
        }
    }
}

/// A method with its blending weight, if one was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub alpha: Option<f64>,
}

impl MethodSpec {
    pub fn new(method: Method, alpha: Option<f64>) -> Result<Self> {
        if let Some(a) = alpha {
            if matches!(method, Method::Fbp | Method::FbpCoil) {
                bail!("{} takes no alpha: FBP does not blend data terms", method.as_str());
            }
            if !(0.0..=1.0).contains(&a) {
                bail!("alpha must lie in [0, 1], got {a}");
            }
        }
        Ok(Self { method, alpha })
    }

    /// Blending weight when a field is available; 0.5 unless given.
    pub fn alpha_with_field(&self) -> f64 {
        match self.method {
            Method::Iterative(_) => self.alpha.unwrap_or(0.5),
            _ => 0.0,
        }
    }

    /// Whether this run needs a trained field.
    pub fn needs_field(&self) -> bool {
        self.method.uses_field() || self.alpha_with_field() > 0.0
    }

    /// Short label, e.g. `fista_tv` or `fista_tv_a0.5`.
    pub fn label(&self) -> String {
        match self.alpha {
            Some(a) => format!("{}_a{}", self.method.as_str(), coil::io::format_sig6(a)),
            None => self.method.as_str().to_string(),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.split_once(':') {
            Some((m, a)) => {
                let alpha = a.trim().parse::<f64>().with_context(|| format!("bad alpha in method '{s}'"))?;
                Self::new(m.trim().parse()?, Some(alpha))
            }
            None => Self::new(s.parse()?, None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Zeros,
    Fbp,
}

impl FromStr for Init {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(Self::Zeros),
            "fbp" => Ok(Self::Fbp),
            other => bail!("unknown solver.init '{other}' (expected zeros or fbp)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub stop_tol: f64,
    pub power_iters: usize,
    pub init: Init,
    pub tv_weight: f64,
    pub red_weight: f64,
    pub red_denoiser: DenoiserSpec,
    pub pnp_denoiser: DenoiserSpec,
}

/// Typed, validated settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub jobs: usize,
    pub timing: bool,
    pub phantom_side: usize,
    pub views_list: Vec<usize>,
    pub snr_list_db: Vec<f64>,
    pub field_views: usize,
    pub ffm: FfmConfig,
    pub mlp_profile: MlpProfile,
    pub train: TrainConfig,
    pub methods: Vec<MethodSpec>,
    pub fbp_window: FbpWindow,
    pub solver: SolverSettings,
    /// Fingerprint text of the result-affecting settings.
    pub canonical: String,
}

fn parse<T: FromStr>(s: &Settings, key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = s.get(key);
    raw.parse::<T>().map_err(|e| anyhow!("setting {key} = '{raw}': {e}"))
}

fn parse_list<T: FromStr>(s: &Settings, key: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let raw = s.get(key).trim().trim_start_matches('[').trim_end_matches(']');
    raw.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| anyhow!("setting {key}: bad entry '{t}': {e}")))
        .collect()
}

fn denoiser(s: &Settings, prefix: &str) -> Result<DenoiserSpec> {
    let kind: DenoiserKind = parse(s, &format!("{prefix}.denoiser"))?;
    Ok(DenoiserSpec::new(kind, parse(s, &format!("{prefix}.sigma"))?)?)
}

impl ExperimentConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let seed: u64 = parse(s, "seed")?;
        let views_list: Vec<usize> = parse_list(s, "views_list")?;
        let snr_list_db: Vec<f64> = parse_list(s, "snr_list_db")?;
        let field_views: usize = parse(s, "field_views")?;
        let phantom_side: usize = parse(s, "phantom_side")?;
        if views_list.is_empty() || snr_list_db.is_empty() {
            bail!("views_list and snr_list_db must be nonempty");
        }
        if views_list.contains(&0) {
            bail!("views_list entries must be positive");
        }
        if snr_list_db.iter().any(|v| !v.is_finite()) {
            bail!("snr_list_db entries must be finite");
        }
        let max_views = *views_list.iter().max().expect("nonempty");
        if field_views < max_views {
            bail!("field_views ({field_views}) must be at least the largest measured view count ({max_views})");
        }
        if phantom_side < coil::geometry::MIN_PHANTOM_SIDE {
            bail!("phantom_side must be at least {}", coil::geometry::MIN_PHANTOM_SIDE);
        }
        let mode: FfmMode = parse(s, "ffm_mode")?;
        let ffm = FfmConfig::new(mode, parse(s, "L")?)?;
        let train = TrainConfig {
            initial_lr: parse(s, "train.initial_lr")?,
            lr_decay_per_epoch: parse(s, "train.lr_decay")?,
            epochs: parse(s, "train.epochs")?,
            batch_size: parse(s, "train.batch_size")?,
            adam_beta1: parse(s, "train.adam_beta1")?,
            adam_beta2: parse(s, "train.adam_beta2")?,
            adam_eps: parse(s, "train.adam_eps")?,
            seed,
        };
        train.validate()?;
        let methods: Vec<MethodSpec> = parse_list(s, "methods")?;
        if methods.is_empty() {
            bail!("methods must name at least one method");
        }
        let solver = SolverSettings {
            max_iters: parse(s, "solver.max_iters")?,
            stop_tol: parse(s, "solver.stop_tol")?,
            power_iters: parse(s, "solver.power_iters")?,
            init: parse(s, "solver.init")?,
            tv_weight: parse(s, "fista_tv.tv_weight")?,
            red_weight: parse(s, "gm_red.red_weight")?,
            red_denoiser: denoiser(s, "gm_red")?,
            pnp_denoiser: denoiser(s, "pnp_fista")?,
        };
        if solver.max_iters == 0 || solver.power_iters < 10 {
            bail!("solver.max_iters must be positive and solver.power_iters at least 10");
        }
        if !(solver.stop_tol >= 0.0 && solver.tv_weight >= 0.0 && solver.red_weight >= 0.0) {
            bail!("solver tolerances and weights must be nonnegative");
        }
        let jobs: usize = parse(s, "jobs")?;
        if jobs == 0 {
            bail!("jobs must be positive");
        }
        Ok(Self {
            seed,
            output_dir: PathBuf::from(s.get("output_dir")),
            jobs,
            timing: parse(s, "timing")?,
            phantom_side,
            views_list,
            snr_list_db,
            field_views,
            ffm,
            mlp_profile: parse(s, "mlp_profile")?,
            train,
            methods,
            fbp_window: parse(s, "fbp.window")?,
            solver,
            canonical: s.canonical(),
        })
    }

    pub fn mlp(&self) -> MlpConfig {
        self.mlp_profile.mlp(self.ffm.output_dim())
    }
}
