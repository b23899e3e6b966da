//! Run configuration: command-line flags layered over an optional JSON file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use hamilton_potential::{BuiltinModel, Model, ModelSpec, DEFAULT_STEPS};
use nalgebra::DVector;
use serde::Deserialize;

use crate::output::Format;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Builtin model name or path to a model-spec JSON file.
    #[arg(long)]
    pub model: Option<String>,

    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,

    /// A point `x1,x2,..`, or a pair `in1,../fin1,..` for two-point commands.
    /// Repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    pub points: Vec<String>,

    /// Grid `lo:hi:n` per coordinate, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,

    /// Fixed initial point for `scan`.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,

    /// RK4 steps on [0, 1].
    #[arg(long)]
    pub steps: Option<usize>,

    /// Shooting tolerance.
    #[arg(long)]
    pub tol: Option<f64>,

    /// Uniform diagonal finite-difference step for `recover`.
    #[arg(long)]
    pub fd_step: Option<f64>,

    /// Recover from the exponential-map potential instead of `S_alpha`.
    #[arg(long)]
    pub expmap: bool,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub format: Option<Format>,

    /// Report failed rows and continue instead of stopping.
    #[arg(long)]
    pub keep_going: bool,

    /// JSON file with any of the fields above; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// The JSON form of [`RunArgs`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub model: Option<String>,
    pub alpha: Option<f64>,
    #[serde(default)]
    pub points: Vec<String>,
    pub grid: Option<String>,
    pub from: Option<String>,
    pub steps: Option<usize>,
    pub tol: Option<f64>,
    pub fd_step: Option<f64>,
    pub expmap: Option<bool>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub keep_going: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// A point or point pair requested on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Single(DVector<f64>),
    Pair(DVector<f64>, DVector<f64>),
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub model_name: String,
    pub builtin: BuiltinModel,
    pub model: Model,
    pub alpha: f64,
    pub targets: Vec<Target>,
    pub grid: Option<Vec<DVector<f64>>>,
    pub from: Option<DVector<f64>>,
    pub steps: usize,
    pub tol: f64,
    pub fd_step: Option<f64>,
    pub expmap: bool,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub keep_going: bool,
}

impl Settings {
    pub fn resolve(command: &str, args: &RunArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(c) = &file.command {
            if c != command {
                bail!("config file is for command '{c}', not '{command}'");
            }
        }
        let model_arg = args
            .model
            .clone()
            .or(file.model)
            .context("no model given (use --model or the config file)")?;
        let (builtin, model) = load_model(&model_arg)?;
        let points = if args.points.is_empty() { file.points } else { args.points.clone() };
        let alpha = args.alpha.or(file.alpha);
        let settings = Self {
            model_name: builtin.name().to_string(),
            builtin,
            alpha: alpha.unwrap_or(0.0),
            targets: points.iter().map(|p| parse_target(p)).collect::<Result<_>>()?,
            grid: args.grid.clone().or(file.grid).map(|g| parse_grid(&g)).transpose()?,
            from: args.from.clone().or(file.from).map(|p| parse_point(&p)).transpose()?,
            steps: args.steps.or(file.steps).unwrap_or(DEFAULT_STEPS),
            tol: args.tol.or(file.tol).unwrap_or(DEFAULT_TOLERANCE),
            fd_step: args.fd_step.or(file.fd_step),
            expmap: args.expmap || file.expmap.unwrap_or(false),
            out: args.out.clone().or(file.out),
            format: args.format.or(file.format).unwrap_or(Format::Csv),
            keep_going: args.keep_going || file.keep_going.unwrap_or(false),
            model,
        };
        settings.validate()?;
        Ok(settings)
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            bail!("--steps must be positive");
        }
        if !(self.tol > 0.0) {
            bail!("--tol must be positive");
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0) {
                bail!("--fd-step must be positive");
            }
        }
        let domain = self.model.domain();
        let check = |q: &DVector<f64>| -> Result<()> {
            if q.len() != domain.dim() {
                bail!("point {:?} has {} coordinates, model {} expects {}", q.as_slice(), q.len(), self.model_name, domain.dim());
            }
            if !domain.contains(q) {
                bail!("point {:?} lies outside the domain of {}", q.as_slice(), self.model_name);
            }
            Ok(())
        };
        for t in &self.targets {
            match t {
                Target::Single(q) => check(q)?,
                Target::Pair(a, b) => {
                    check(a)?;
                    check(b)?;
                }
            }
        }
        for q in self.grid.iter().flatten().chain(&self.from) {
            check(q)?;
        }
        Ok(())
    }

    /// Single points from `--point` and `--grid`, in that order.
    pub fn single_points(&self) -> Result<Vec<DVector<f64>>> {
        let mut out = Vec::new();
        for t in &self.targets {
            match t {
                Target::Single(q) => out.push(q.clone()),
                Target::Pair(..) => bail!("this command takes single points, not pairs"),
            }
        }
        out.extend(self.grid.iter().flatten().cloned());
        Ok(out)
    }

    /// Pairs from `--point` followed by every ordered pair of grid nodes.
    pub fn pairs(&self) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
        let mut out = Vec::new();
        for t in &self.targets {
            match t {
                Target::Pair(a, b) => out.push((a.clone(), b.clone())),
                Target::Single(_) => bail!("this command takes point pairs 'in/fin'"),
            }
        }
        if let Some(grid) = &self.grid {
            for a in grid {
                for b in grid {
                    out.push((a.clone(), b.clone()));
                }
            }
        }
        Ok(out)
    }
}

/// A builtin name, or a model-spec file when the argument names an existing file.
fn load_model(arg: &str) -> Result<(BuiltinModel, Model)> {
    if let Ok(builtin) = BuiltinModel::from_name(arg) {
        return Ok((builtin, builtin.build()));
    }
    let path = Path::new(arg);
    if !path.is_file() {
        bail!("unknown model '{arg}' (not a builtin name or a model-spec file)");
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model spec {arg}"))?;
    let spec: ModelSpec = serde_json::from_str(&text).with_context(|| format!("parsing model spec {arg}"))?;
    let builtin = BuiltinModel::from_name(&spec.model)?;
    Ok((builtin, spec.build()?))
}

pub fn parse_point(s: &str) -> Result<DVector<f64>> {
    let coords = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().with_context(|| format!("bad coordinate '{c}' in point '{s}'")))
        .collect::<Result<Vec<_>>>()?;
    if coords.is_empty() || coords.iter().any(|c| !c.is_finite()) {
        bail!("bad point '{s}'");
    }
    Ok(DVector::from_vec(coords))
}

fn parse_target(s: &str) -> Result<Target> {
    Ok(match s.split_once('/') {
        Some((a, b)) => Target::Pair(parse_point(a)?, parse_point(b)?),
        None => Target::Single(parse_point(s)?),
    })
}

/// `lo:hi:n` per coordinate; nodes are listed with the last coordinate
/// varying fastest.
pub fn parse_grid(s: &str) -> Result<Vec<DVector<f64>>> {
    let axes = s
        .split(',')
        .map(|axis| {
            let parts: Vec<&str> = axis.trim().split(':').collect();
            let [lo, hi, n] = parts[..] else {
                bail!("grid axis '{axis}' is not lo:hi:n");
            };
            let (lo, hi): (f64, f64) = (lo.parse()?, hi.parse()?);
            let n: usize = n.parse()?;
            if n == 0 || !(lo.is_finite() && hi.is_finite()) {
                bail!("bad grid axis '{axis}'");
            }
            Ok(if n == 1 {
                vec![lo]
            } else {
                (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
            })
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut nodes = vec![Vec::new()];
    for axis in &axes {
        nodes = nodes
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    Ok(nodes.into_iter().map(DVector::from_vec).collect())
}
