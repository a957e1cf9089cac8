//! Plain-text run configuration: `key = value` lines grouped in `[section]`s.
//!
//! `#` starts a comment. Keys before any section header may come from any
//! section; after a header they must belong to it. Every key has a default, so
//! an empty file is a valid configuration.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use crate::curvature::PhysicalParams;
use crate::fem::VectorSpace;
use crate::mesh::{
    curve_to_quadratic, generate_benchmark_shape, BenchmarkShape, DeformationState, Jitter, Measures, SurfaceMesh, MAX_SUBDIVISIONS,
};
use crate::optimizer::{GradientMode, OptimizerConfig};
use crate::shape_derivative::{DerivativeForm, Normalization};
use crate::{Error, Result};

/// Benchmark geometry families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Sphere,
    Prolate,
    Oblate,
    Biconcave,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Prolate => "prolate",
            ShapeKind::Oblate => "oblate",
            ShapeKind::Biconcave => "biconcave",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sphere" => Ok(ShapeKind::Sphere),
            "prolate" => Ok(ShapeKind::Prolate),
            "oblate" => Ok(ShapeKind::Oblate),
            "biconcave" => Ok(ShapeKind::Biconcave),
            _ => Err(format!("unknown shape '{s}' (expected sphere, prolate, oblate or biconcave)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometrySpec {
    pub shape: ShapeKind,
    pub subdivisions: usize,
    /// Polynomial order k of geometry, κ and deformation fields (1 or 2).
    pub order: usize,
    pub radius: f64,
    /// Tangential vertex jitter relative to the local edge length (0 disables).
    pub jitter: f64,
    pub seed: u64,
}

impl GeometrySpec {
    /// Analytic surface of this spec; `radius` only applies to the sphere.
    pub fn benchmark_shape(&self) -> BenchmarkShape {
        match self.shape {
            ShapeKind::Sphere => BenchmarkShape::Sphere { radius: self.radius },
            ShapeKind::Prolate => BenchmarkShape::prolate(),
            ShapeKind::Oblate => BenchmarkShape::oblate(),
            ShapeKind::Biconcave => BenchmarkShape::Biconcave,
        }
    }

    /// Generates the mesh, curving edges onto the exact surface for order 2.
    pub fn build_mesh(&self) -> Result<SurfaceMesh> {
        let shape = self.benchmark_shape();
        let mesh = generate_benchmark_shape(shape, self.subdivisions, self.jitter())?;
        if self.order == 2 {
            curve_to_quadratic(&mesh, shape.projector().as_ref())
        } else {
            Ok(mesh)
        }
    }

    /// Undeformed state on the generated mesh.
    pub fn build_state(&self) -> Result<DeformationState> {
        Ok(DeformationState::zero(VectorSpace::new(Arc::new(self.build_mesh()?), self.order)?))
    }

    pub fn jitter(&self) -> Option<Jitter> {
        (self.jitter > 0.0).then_some(Jitter {
            magnitude: self.jitter,
            seed: self.seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub directory: PathBuf,
    /// Write a VTK snapshot every this many iterations (0 disables).
    pub snapshot_interval: usize,
    pub log_file: String,
}

/// Effective configuration of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub optimizer: OptimizerConfig,
    /// Target reduced volume; overrides `V0` once the target area is known.
    pub reduced_volume: Option<f64>,
    pub geometry: GeometrySpec,
    pub output: OutputSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            reduced_volume: None,
            geometry: GeometrySpec {
                shape: ShapeKind::Prolate,
                subdivisions: 2,
                order: 1,
                radius: 1.0,
                jitter: 0.0,
                seed: Jitter::DEFAULT_SEED,
            },
            output: OutputSpec {
                directory: PathBuf::from("out"),
                snapshot_interval: 0,
                log_file: "run_log.csv".into(),
            },
        }
    }
}

/// (section, key) pairs in echo order.
pub const KEYS: &[(&str, &str)] = &[
    ("physics", "kb"),
    ("physics", "H0"),
    ("physics", "spontaneous_sign_flip"),
    ("constraints", "cA"),
    ("constraints", "cV"),
    ("constraints", "cAloc"),
    ("constraints", "A0"),
    ("constraints", "V0"),
    ("constraints", "reduced_volume"),
    ("constraints", "normalization"),
    ("algorithm", "alpha"),
    ("algorithm", "alpha_max"),
    ("algorithm", "alpha_factor"),
    ("algorithm", "Nmax"),
    ("algorithm", "tol_step"),
    ("algorithm", "tol_grad"),
    ("algorithm", "tol_grad_abs"),
    ("algorithm", "tol_cost"),
    ("algorithm", "stall_window"),
    ("algorithm", "tol_stall"),
    ("algorithm", "M"),
    ("algorithm", "gradient_mode"),
    ("algorithm", "metric_epsilon"),
    ("algorithm", "derivative"),
    ("algorithm", "tangent_projection"),
    ("algorithm", "continuation_rounds"),
    ("algorithm", "continuation_factor"),
    ("geometry", "shape"),
    ("geometry", "subdivisions"),
    ("geometry", "order"),
    ("geometry", "radius"),
    ("geometry", "jitter"),
    ("geometry", "seed"),
    ("output", "directory"),
    ("output", "snapshot_interval"),
    ("output", "log"),
];

fn section_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(_, k)| *k == key).map(|(s, _)| *s)
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("cannot parse '{value}': {e}"))
}

fn positive(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive, got {value}"))
    }
}

fn non_negative(value: &str) -> std::result::Result<f64, String> {
    let v: f64 = parse(value)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be non-negative, got {value}"))
    }
}

fn optional_positive(value: &str) -> std::result::Result<Option<f64>, String> {
    if value == "auto" {
        Ok(None)
    } else {
        positive(value).map(Some)
    }
}

fn flag(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{value}'")),
    }
}

impl RunConfig {
    /// Sets one key from its textual value (used by the parser and by CLI overrides).
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let o = &mut self.optimizer;
        match key {
            "kb" => o.params.bending_modulus = positive(value)?,
            "H0" => {
                let h: f64 = parse(value)?;
                if !h.is_finite() {
                    return Err("must be finite".into());
                }
                o.params.spontaneous_curvature = h;
            }
            "spontaneous_sign_flip" => o.spontaneous_sign_flip = flag(value)?,
            "cA" => o.penalties.c_area = non_negative(value)?,
            "cV" => o.penalties.c_volume = non_negative(value)?,
            "cAloc" => o.penalties.c_local = non_negative(value)?,
            "A0" => o.penalties.area_target = optional_positive(value)?,
            "V0" => o.penalties.volume_target = optional_positive(value)?,
            "reduced_volume" => {
                self.reduced_volume = match optional_positive(value)? {
                    Some(v) if v > 1.0 => return Err(format!("reduced volume cannot exceed 1, got {v}")),
                    v => v,
                }
            }
            "normalization" => {
                o.penalties.normalization = match value {
                    "relative" => Normalization::Relative,
                    "absolute" => Normalization::Absolute,
                    _ => return Err(format!("expected relative or absolute, got '{value}'")),
                }
            }
            "alpha" => o.alpha_init = positive(value)?,
            "alpha_max" => o.alpha_max = positive(value)?,
            "alpha_factor" => {
                let f = positive(value)?;
                if f < 1.0 {
                    return Err(format!("must be at least 1, got {value}"));
                }
                o.alpha_factor = f;
            }
            "Nmax" => o.max_iter = parse(value)?,
            "tol_step" => o.tol_step = non_negative(value)?,
            "tol_grad" => o.tol_grad = non_negative(value)?,
            "tol_grad_abs" => o.tol_grad_abs = non_negative(value)?,
            "tol_cost" => o.tol_cost = non_negative(value)?,
            "stall_window" => o.stall_window = parse(value)?,
            "tol_stall" => o.tol_stall = non_negative(value)?,
            "M" => o.nonmonotone_window = parse(value)?,
            "gradient_mode" => {
                o.gradient_mode = match value {
                    "h1" => GradientMode::H1,
                    "stokes" => GradientMode::Stokes,
                    _ => return Err(format!("expected h1 or stokes, got '{value}'")),
                }
            }
            "metric_epsilon" => o.metric_epsilon = positive(value)?,
            "derivative" => {
                o.form = match value {
                    "full" => DerivativeForm::Full,
                    "lowest_order" => DerivativeForm::LowestOrder,
                    _ => return Err(format!("expected full or lowest_order, got '{value}'")),
                }
            }
            "tangent_projection" => o.lift.tangent_projection = flag(value)?,
            "continuation_rounds" => {
                let n: usize = parse(value)?;
                if n == 0 {
                    return Err("must be at least 1".into());
                }
                o.continuation_rounds = n;
            }
            "continuation_factor" => o.continuation_factor = positive(value)?,
            "shape" => self.geometry.shape = parse(value)?,
            "subdivisions" => {
                let n: usize = parse(value)?;
                if n > MAX_SUBDIVISIONS {
                    return Err(format!("at most {MAX_SUBDIVISIONS} subdivisions, got {n}"));
                }
                self.geometry.subdivisions = n;
            }
            "order" => {
                let k: usize = parse(value)?;
                if !(1..=2).contains(&k) {
                    return Err(format!("order must be 1 or 2, got {k}"));
                }
                self.geometry.order = k;
            }
            "radius" => self.geometry.radius = positive(value)?,
            "jitter" => {
                let j = non_negative(value)?;
                if j >= 0.5 {
                    return Err(format!("jitter must be below 0.5, got {value}"));
                }
                self.geometry.jitter = j;
            }
            "seed" => self.geometry.seed = parse(value)?,
            "directory" => self.output.directory = PathBuf::from(value),
            "snapshot_interval" => self.output.snapshot_interval = parse(value)?,
            "log" => {
                if value.is_empty() {
                    return Err("log file name must not be empty".into());
                }
                self.output.log_file = value.to_string();
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Cross-key invariants.
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate().map_err(|e| match e {
            Error::InvalidArgument(m) => Error::config(m),
            other => other,
        })?;
        if self.reduced_volume.is_some() && self.optimizer.penalties.volume_target.is_some() {
            return Err(Error::config("set either V0 or reduced_volume, not both"));
        }
        if self.optimizer.gradient_mode == GradientMode::Stokes && self.geometry.order != 2 {
            return Err(Error::config("gradient_mode = stokes requires order = 2"));
        }
        if self.optimizer.form == DerivativeForm::LowestOrder && self.geometry.order != 1 {
            return Err(Error::config("derivative = lowest_order requires order = 1"));
        }
        Ok(())
    }

    pub fn params(&self) -> PhysicalParams {
        self.optimizer.params
    }

    /// Optimizer settings with `reduced_volume` turned into a volume target for
    /// the given initial geometry (area target, or the initial area if unset).
    pub fn resolved_optimizer(&self, initial: &Measures) -> OptimizerConfig {
        let mut o = self.optimizer.clone();
        if let Some(v) = self.reduced_volume {
            let area = o.penalties.area_target.unwrap_or(initial.total_area);
            o.penalties.area_target = Some(area);
            o.penalties.volume_target = Some(v * 4.0 / 3.0 * PI * (area / (4.0 * PI)).powf(1.5));
        }
        o
    }

    /// Textual value of a key as written by [`RunConfig::echo`].
    pub fn get(&self, key: &str) -> Option<String> {
        let o = &self.optimizer;
        let p = &o.penalties;
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), |v| format!("{v:?}"));
        Some(match key {
            "kb" => format!("{:?}", o.params.bending_modulus),
            "H0" => format!("{:?}", o.params.spontaneous_curvature),
            "spontaneous_sign_flip" => o.spontaneous_sign_flip.to_string(),
            "cA" => format!("{:?}", p.c_area),
            "cV" => format!("{:?}", p.c_volume),
            "cAloc" => format!("{:?}", p.c_local),
            "A0" => opt(p.area_target),
            "V0" => opt(p.volume_target),
            "reduced_volume" => opt(self.reduced_volume),
            "normalization" => match p.normalization {
                Normalization::Relative => "relative".into(),
                Normalization::Absolute => "absolute".into(),
            },
            "alpha" => format!("{:?}", o.alpha_init),
            "alpha_max" => format!("{:?}", o.alpha_max),
            "alpha_factor" => format!("{:?}", o.alpha_factor),
            "Nmax" => o.max_iter.to_string(),
            "tol_step" => format!("{:?}", o.tol_step),
            "tol_grad" => format!("{:?}", o.tol_grad),
            "tol_grad_abs" => format!("{:?}", o.tol_grad_abs),
            "tol_cost" => format!("{:?}", o.tol_cost),
            "stall_window" => o.stall_window.to_string(),
            "tol_stall" => format!("{:?}", o.tol_stall),
            "M" => o.nonmonotone_window.to_string(),
            "gradient_mode" => match o.gradient_mode {
                GradientMode::H1 => "h1".into(),
                GradientMode::Stokes => "stokes".into(),
            },
            "metric_epsilon" => format!("{:?}", o.metric_epsilon),
            "derivative" => match o.form {
                DerivativeForm::Full => "full".into(),
                DerivativeForm::LowestOrder => "lowest_order".into(),
            },
            "tangent_projection" => o.lift.tangent_projection.to_string(),
            "continuation_rounds" => o.continuation_rounds.to_string(),
            "continuation_factor" => format!("{:?}", o.continuation_factor),
            "shape" => self.geometry.shape.name().into(),
            "subdivisions" => self.geometry.subdivisions.to_string(),
            "order" => self.geometry.order.to_string(),
            "radius" => format!("{:?}", self.geometry.radius),
            "jitter" => format!("{:?}", self.geometry.jitter),
            "seed" => self.geometry.seed.to_string(),
            "directory" => self.output.directory.display().to_string(),
            "snapshot_interval" => self.output.snapshot_interval.to_string(),
            "log" => self.output.log_file.clone(),
            _ => return None,
        })
    }

    /// Every key with its effective value; parsing the result gives back `self`.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (s, k) in KEYS {
            if *s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{s}]");
                section = s;
            }
            let _ = writeln!(out, "{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }
}

/// Parses configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Config {
            line: Some(line_no),
            message,
        };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(format!("malformed section header '{line}'")))?
                .trim();
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(err(format!("unknown section '{name}'")));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
        let (key, value) = (key.trim(), value.trim());
        match (section_of(key), &section) {
            (None, _) => return Err(err(format!("unknown key '{key}'"))),
            (Some(owner), Some(current)) if owner != current => {
                return Err(err(format!("key '{key}' belongs to section [{owner}], not [{current}]")))
            }
            _ => {}
        }
        config.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
    }
    config.validate()?;
    Ok(config)
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_benchmark_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        let o = &c.optimizer;
        assert_eq!(o.params.bending_modulus, 0.01);
        assert_eq!(o.params.spontaneous_curvature, 0.0);
        assert_eq!((o.penalties.c_volume, o.penalties.c_area, o.penalties.c_local), (1.0, 2.0, 1.0));
        assert_eq!(o.penalties.normalization, Normalization::Relative);
        assert_eq!(o.alpha_init, 0.025);
        assert_eq!(o.nonmonotone_window, 0);
    }

    #[test]
    fn sections_and_comments() {
        let c = parse_config_str("# run\n[algorithm]\nM = 5 # window\nalpha=0.05\n\n[physics]\nH0 = -0.5\n").unwrap();
        assert_eq!(c.optimizer.nonmonotone_window, 5);
        assert_eq!(c.optimizer.alpha_init, 0.05);
        assert_eq!(c.optimizer.params.spontaneous_curvature, -0.5);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("alpha = -1", 1),
            ("\n\nbogus = 3", 3),
            ("[physics]\nalpha = 0.1", 2),
            ("[geometry]\norder = 3", 2),
            ("[nowhere]", 1),
            ("kb", 1),
            ("\n[constraints]\nnormalization = sometimes", 3),
        ];
        for (text, line) in cases {
            match parse_config_str(text) {
                Err(Error::Config { line: Some(l), .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn cross_key_checks() {
        assert!(parse_config_str("alpha = 0.5").is_err());
        assert!(parse_config_str("gradient_mode = stokes").is_err());
        assert!(parse_config_str("gradient_mode = stokes\norder = 2").is_ok());
        assert!(parse_config_str("V0 = 3\nreduced_volume = 0.8").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "[physics]\nkb = 0.1\nH0 = 0.3\n[constraints]\nA0 = 12.566370614359172\nreduced_volume = 0.713\n\
                    [algorithm]\nM = 5\nalpha_factor = 1.5\ngradient_mode = stokes\n[geometry]\norder = 2\nshape = oblate\n\
                    [output]\ndirectory = some dir/x\nlog = l.csv\n";
        let c = parse_config_str(text).unwrap();
        let again = parse_config_str(&c.echo()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.echo(), c.echo());
        assert_eq!(parse_config_str(&RunConfig::default().echo()).unwrap(), RunConfig::default());
    }

    #[test]
    fn every_listed_key_has_a_value() {
        let c = RunConfig::default();
        for (_, k) in KEYS {
            let v = c.get(k).unwrap();
            let mut d = c.clone();
            d.set(k, &v).unwrap();
            assert_eq!(d, c, "{k}");
        }
    }
}
