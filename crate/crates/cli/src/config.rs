//! Experiment configuration files.
//!
//! Line-oriented `key = value` pairs grouped under `[mesh]`, `[flow]`,
//! `[group]`, `[newton]` and `[output]` headers. `#` starts a comment. A
//! top-level `preset = <name>` seeds every value; keys in the file then
//! override it. Unknown sections and keys are errors.
//!
//! | section | key | default |
//! |---|---|---|
//! | mesh | `kind` | `torus` |
//! | mesh | `n` (torus) | `64` |
//! | mesh | `n_theta`, `n_phi` (sphere) | `16`, `32` |
//! | flow | `rho` | `0` |
//! | flow | `f` | `1` |
//! | flow | `u0` | `0` |
//! | flow | `dt_init`, `dt_min`, `dt_max` | `1e-3`, `1e-10`, `1` |
//! | flow | `cfl_safety` | `0.9` |
//! | flow | `residual_tol` | `1e-8` |
//! | flow | `t_max` | `200` |
//! | flow | `record_every` | `10` |
//! | flow | `snapshot_every` | `0` |
//! | flow | `symmetrize_each_step`, `mass_project_each_step` | `true` |
//! | group | `generators` | none |
//! | newton | `rho_target` | flow `rho` |
//! | newton | `rho_continuation_steps` | `8` |
//! | newton | `newton_tol` | `1e-10` |
//! | newton | `max_iters` | `50` |
//! | newton | `damping` | `0.5` |
//! | newton | `linear_tol` | `1e-10` |
//! | output | `dir` | `output` |
//!
//! Numeric values accept constant expressions such as `4*pi`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use meanflow_core::fieldexpr::FieldExpr;
use meanflow_core::flow::{Flow, FlowConfig, FlowError, FlowSettings};
use meanflow_core::mesh::MeshSpec;
use meanflow_core::stationary::{NewtonConfig, NewtonError};
use meanflow_core::symmetry::{parse_generators, GeneratorSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Flat torus with the full translation group.
    TorusTranslation,
    /// Sphere with the antipodal map and an even `f`.
    SphereEven,
    /// Torus, `ρ = 4π`, `f = 1 + 0.5 cos x`.
    SubcriticalBaseline,
}

impl Preset {
    pub const ALL: [Preset; 3] = [
        Preset::TorusTranslation,
        Preset::SphereEven,
        Preset::SubcriticalBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::TorusTranslation => "torus_translation",
            Preset::SphereEven => "sphere_even",
            Preset::SubcriticalBaseline => "subcritical_baseline",
        }
    }

    fn seed(self) -> Draft {
        let mut d = Draft::default();
        match self {
            Preset::TorusTranslation => {
                d.mesh = MeshSpec::Torus { n: 32 };
                d.settings.rho = 64.0 * std::f64::consts::PI;
                d.f = "1".into();
                d.u0 = "0".into();
                d.generators = vec![GeneratorSpec::Shift(1, 0), GeneratorSpec::Shift(0, 1)];
            }
            Preset::SphereEven => {
                d.mesh = MeshSpec::Sphere {
                    n_theta: 16,
                    n_phi: 32,
                };
                d.settings.rho = 12.0 * std::f64::consts::PI;
                d.f = "1 + 0.3*cos(theta)^2".into();
                d.u0 = "0.2*cos(2*theta)".into();
                d.generators = vec![GeneratorSpec::Antipodal];
            }
            Preset::SubcriticalBaseline => {
                d.mesh = MeshSpec::Torus { n: 64 };
                d.settings.rho = 4.0 * std::f64::consts::PI;
                d.f = "1 + 0.5*cos(x)".into();
                d.u0 = "0".into();
            }
        }
        d
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!("unknown preset `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub flow: FlowConfig,
    pub newton: NewtonConfig,
    pub output_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Flow(#[from] FlowError),
    #[error("invalid configuration: {0}")]
    Newton(#[from] NewtonError),
}

fn parse_err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Clone, Debug)]
struct Draft {
    mesh: MeshSpec,
    f: String,
    u0: String,
    generators: Vec<GeneratorSpec>,
    settings: FlowSettings,
    newton: NewtonConfig,
    newton_rho_set: bool,
    output_dir: PathBuf,
}

impl Default for Draft {
    fn default() -> Self {
        Draft {
            mesh: MeshSpec::Torus { n: 64 },
            f: "1".into(),
            u0: "0".into(),
            generators: Vec::new(),
            settings: FlowSettings::default(),
            newton: NewtonConfig::default(),
            newton_rho_set: false,
            output_dir: PathBuf::from("output"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Section {
    Top,
    Mesh,
    Flow,
    Group,
    Newton,
    Output,
}

fn unquote(value: &str) -> &str {
    let v = value.trim();
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

fn number(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    let expr = FieldExpr::parse(value)
        .map_err(|e| parse_err(line, format!("`{key}`: `{value}` is not a number ({e})")))?;
    if !expr.is_constant() {
        return Err(parse_err(
            line,
            format!("`{key}`: `{value}` must be a constant expression"),
        ));
    }
    expr.eval_constant()
        .map_err(|e| parse_err(line, format!("`{key}`: {e}")))
}

fn count(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse::<usize>()
        .map_err(|_| parse_err(line, format!("`{key}`: `{value}` is not a non-negative integer")))
}

fn flag(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(parse_err(line, format!("`{key}`: `{value}` is not a boolean"))),
    }
}

/// Mesh keys may arrive in any order, so they are collected first.
#[derive(Default)]
struct MeshKeys {
    kind: Option<(usize, String)>,
    n: Option<usize>,
    n_theta: Option<usize>,
    n_phi: Option<usize>,
}

impl MeshKeys {
    fn apply(&self, base: MeshSpec) -> Result<MeshSpec, ConfigError> {
        let kind = match &self.kind {
            Some((line, k)) => match k.as_str() {
                "torus" => meanflow_core::MeshKind::Torus,
                "sphere" => meanflow_core::MeshKind::Sphere,
                other => {
                    return Err(parse_err(
                        *line,
                        format!("`kind`: `{other}` is neither torus nor sphere"),
                    ))
                }
            },
            None => base.kind(),
        };
        Ok(match kind {
            meanflow_core::MeshKind::Torus => {
                let fallback = match base {
                    MeshSpec::Torus { n } => n,
                    MeshSpec::Sphere { .. } => 64,
                };
                MeshSpec::Torus {
                    n: self.n.unwrap_or(fallback),
                }
            }
            meanflow_core::MeshKind::Sphere => {
                let (t, p) = match base {
                    MeshSpec::Sphere { n_theta, n_phi } => (n_theta, n_phi),
                    MeshSpec::Torus { .. } => (16, 32),
                };
                MeshSpec::Sphere {
                    n_theta: self.n_theta.unwrap_or(t),
                    n_phi: self.n_phi.unwrap_or(p),
                }
            }
        })
    }
}

/// Parses and validates configuration text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    // First pass: the preset decides the defaults.
    let mut preset = None;
    let mut top_level = true;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            top_level = false;
            continue;
        }
        if top_level {
            if let Some((k, v)) = line.split_once('=') {
                if k.trim() == "preset" {
                    let p = unquote(v)
                        .parse::<Preset>()
                        .map_err(|m| parse_err(idx + 1, m))?;
                    preset = Some(p);
                }
            }
        }
    }
    let mut draft = preset.map_or_else(Draft::default, Preset::seed);
    let mut mesh_keys = MeshKeys::default();
    let mut section = Section::Top;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(lineno, "section header is missing `]`"))?
                .trim();
            section = match name {
                "mesh" => Section::Mesh,
                "flow" => Section::Flow,
                "group" => Section::Group,
                "newton" => Section::Newton,
                "output" => Section::Output,
                other => return Err(parse_err(lineno, format!("unknown section [{other}]"))),
            };
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, format!("expected `key = value`, found `{line}`")))?;
        let key = key.trim();
        let value = unquote(value);
        if value.is_empty() {
            return Err(parse_err(lineno, format!("`{key}` has no value")));
        }
        let s = &mut draft.settings;
        match (section, key) {
            (Section::Top, "preset") => {}
            (Section::Mesh, "kind") => mesh_keys.kind = Some((lineno, value.to_string())),
            (Section::Mesh, "n") => mesh_keys.n = Some(count(lineno, key, value)?),
            (Section::Mesh, "n_theta") => mesh_keys.n_theta = Some(count(lineno, key, value)?),
            (Section::Mesh, "n_phi") => mesh_keys.n_phi = Some(count(lineno, key, value)?),
            (Section::Flow, "rho") => s.rho = number(lineno, key, value)?,
            (Section::Flow, "f") => draft.f = checked_expr(lineno, key, value)?,
            (Section::Flow, "u0") => draft.u0 = checked_expr(lineno, key, value)?,
            (Section::Flow, "dt_init") => s.dt_init = number(lineno, key, value)?,
            (Section::Flow, "dt_min") => s.dt_min = number(lineno, key, value)?,
            (Section::Flow, "dt_max") => s.dt_max = number(lineno, key, value)?,
            (Section::Flow, "cfl_safety") => s.cfl_safety = number(lineno, key, value)?,
            (Section::Flow, "residual_tol") => s.residual_tol = number(lineno, key, value)?,
            (Section::Flow, "t_max") => s.t_max = number(lineno, key, value)?,
            (Section::Flow, "record_every") => s.record_every = count(lineno, key, value)?,
            (Section::Flow, "snapshot_every") => s.snapshot_every = count(lineno, key, value)?,
            (Section::Flow, "symmetrize_each_step") => {
                s.symmetrize_each_step = flag(lineno, key, value)?
            }
            (Section::Flow, "mass_project_each_step") => {
                s.mass_project_each_step = flag(lineno, key, value)?
            }
            (Section::Group, "generators") => {
                draft.generators = parse_generators(value)
                    .map_err(|e| parse_err(lineno, format!("`generators`: {e}")))?
            }
            (Section::Newton, "rho_target") => {
                draft.newton.rho_target = number(lineno, key, value)?;
                draft.newton_rho_set = true;
            }
            (Section::Newton, "rho_continuation_steps") => {
                draft.newton.rho_continuation_steps = count(lineno, key, value)?
            }
            (Section::Newton, "newton_tol") => draft.newton.newton_tol = number(lineno, key, value)?,
            (Section::Newton, "max_iters") => draft.newton.max_iters = count(lineno, key, value)?,
            (Section::Newton, "damping") => draft.newton.damping = number(lineno, key, value)?,
            (Section::Newton, "linear_tol") => draft.newton.linear_tol = number(lineno, key, value)?,
            (Section::Output, "dir") => draft.output_dir = PathBuf::from(value),
            _ => {
                let where_ = match section {
                    Section::Top => "at top level".to_string(),
                    other => format!("in [{}]", format!("{other:?}").to_lowercase()),
                };
                return Err(parse_err(lineno, format!("unknown key `{key}` {where_}")));
            }
        }
    }

    draft.mesh = mesh_keys.apply(draft.mesh)?;
    if !draft.newton_rho_set {
        draft.newton.rho_target = draft.settings.rho;
    }
    let flow = FlowConfig {
        mesh: draft.mesh,
        f_expr: draft.f.parse().expect("checked while parsing"),
        u0_expr: draft.u0.parse().expect("checked while parsing"),
        group: draft.generators,
        settings: draft.settings,
    };
    let config = ExperimentConfig {
        preset,
        flow,
        newton: draft.newton,
        output_dir: draft.output_dir,
    };
    config.validate()?;
    Ok(config)
}

fn checked_expr(line: usize, key: &str, value: &str) -> Result<String, ConfigError> {
    FieldExpr::parse(value).map_err(|e| parse_err(line, format!("`{key}`: {e}")))?;
    Ok(value.to_string())
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    /// Semantic checks that need the materialized mesh, `f`, `u₀` and group.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let (flow, u0) = Flow::from_config(&self.flow)?;
        flow.initial_state(u0)?;
        self.newton.validate()?;
        Ok(())
    }

    /// `MEANFLOW_OUTPUT` wins over the configured directory.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os("MEANFLOW_OUTPUT") {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let cfg = parse_config_str(
            "[mesh]\nkind = torus\nn = 64\n[flow]\nrho = 0\nf = \"1\"\nu0 = \"0.3*cos(x)\"\n",
        )
        .unwrap();
        assert_eq!(cfg.flow.mesh, MeshSpec::Torus { n: 64 });
        assert_eq!(cfg.flow.settings, FlowSettings::default());
        assert_eq!(cfg.flow.u0_expr.to_string(), "0.3*cos(x)");
        assert_eq!(cfg.newton.rho_target, 0.0);
        assert_eq!(cfg.output_dir, PathBuf::from("output"));
        assert!(cfg.preset.is_none());
    }

    #[test]
    fn bad_number_names_the_line() {
        let err = parse_config_str("[mesh]\nn = 32\n\n[flow]\nrho = banana\n").unwrap_err();
        match err {
            ConfigError::Parse { line, message } => {
                assert_eq!(line, 5);
                assert!(message.contains("banana"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
        assert!(err_line("[flow]\nrho = 4*pi\nsteps = 3\n") == Some(3));
        assert!(err_line("[flows]\n") == Some(1));
        assert!(err_line("rho = 3\n") == Some(1));
    }

    fn err_line(text: &str) -> Option<usize> {
        match parse_config_str(text) {
            Err(ConfigError::Parse { line, .. }) => Some(line),
            _ => None,
        }
    }

    #[test]
    fn constant_expressions_are_numbers() {
        let cfg = parse_config_str("[mesh]\nn = 16\n[flow]\nrho = 4*pi\n").unwrap();
        assert_eq!(cfg.flow.settings.rho, 4.0 * std::f64::consts::PI);
        assert_eq!(cfg.newton.rho_target, 4.0 * std::f64::consts::PI);
        assert!(err_line("[flow]\nrho = 2*x\n") == Some(2));
    }

    #[test]
    fn presets_expand_and_can_be_overridden() {
        let cfg = parse_config_str("preset = sphere_even\n").unwrap();
        assert_eq!(
            cfg.flow.mesh,
            MeshSpec::Sphere {
                n_theta: 16,
                n_phi: 32
            }
        );
        assert_eq!(cfg.flow.group, vec![GeneratorSpec::Antipodal]);
        let cfg = parse_config_str("preset = subcritical_baseline\n[mesh]\nn = 32\n").unwrap();
        assert_eq!(cfg.flow.mesh, MeshSpec::Torus { n: 32 });
        assert_eq!(cfg.preset, Some(Preset::SubcriticalBaseline));
        let cfg = parse_config_str("preset = torus_translation\n").unwrap();
        assert_eq!(cfg.flow.group.len(), 2);
    }

    #[test]
    fn sphere_even_rejects_odd_f() {
        let err = parse_config_str("preset = sphere_even\n[flow]\nf = 1 + 0.5*cos(theta)\n").unwrap_err();
        assert!(matches!(
            err,
            ConfigError::Flow(FlowError::NotInvariant { what: "f", .. })
        ));
        let err = parse_config_str("preset = sphere_even\n[flow]\nf = 2 + cos(phi)\n").unwrap_err();
        assert!(matches!(err, ConfigError::Flow(FlowError::NotInvariant { .. })));
    }

    #[test]
    fn semantic_errors_surface_before_running() {
        assert!(matches!(
            parse_config_str("[mesh]\nn = 16\n[flow]\nf = cos(x)\n"),
            Err(ConfigError::Flow(FlowError::NotPositive(_)))
        ));
        assert!(matches!(
            parse_config_str("[mesh]\nn = 15\n"),
            Err(ConfigError::Flow(FlowError::Mesh(_)))
        ));
        assert!(matches!(
            parse_config_str("[mesh]\nn = 16\n[newton]\ndamping = 2\n"),
            Err(ConfigError::Newton(_))
        ));
        assert!(matches!(
            parse_config_str("[mesh]\nn = 16\n[group]\ngenerators = antipodal\n"),
            Err(ConfigError::Flow(FlowError::Group(_)))
        ));
    }
}
