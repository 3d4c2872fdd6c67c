//! Line-oriented experiment config: `key = value` pairs, optional
//! `[section]` headers, `#` comments. Keys before the first header are
//! root keys.
//!
//! ```text
//! instance = p1          # p1 | hvac | random
//! preset = S4
//! output_dir = runs/s4
//!
//! [params]
//! max_iters = 500
//! ```

use std::collections::HashSet;
use std::path::PathBuf;

use prox_admm::instances::HvacParams;
use prox_admm::SolverSettings;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("missing required key `{0}`")]
    MissingRequired(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceKind {
    P1,
    Hvac,
    Random,
}

impl InstanceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            InstanceKind::P1 => "p1",
            InstanceKind::Hvac => "hvac",
            InstanceKind::Random => "random",
        }
    }
}

/// Explicit `[params]` entries; anything left `None` comes from the preset
/// or from the instance's suggested parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamOverrides {
    pub rho: Option<f64>,
    pub tau: Option<f64>,
    pub beta: Option<f64>,
    pub c: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    /// `rho = rho_factor (L_f + L_g)` for hvac and random instances
    pub rho_factor: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvacScale {
    Desk,
    Full,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HvacOverrides {
    pub scale: Option<HvacScale>,
    pub zones: Option<usize>,
    pub horizon: Option<usize>,
    pub dt: Option<f64>,
    pub cp: Option<f64>,
    pub dr: Option<f64>,
    pub eta: Option<f64>,
    pub kappa_f: Option<f64>,
    pub t_cool: Option<f64>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub m_min: Option<f64>,
    pub m_max: Option<f64>,
    pub m_bar: Option<f64>,
    pub penalty_m: Option<f64>,
    pub t_init: Option<f64>,
    pub price: Option<Vec<f64>>,
    pub t_out: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomConfig {
    pub n_agents: usize,
    pub dims: usize,
    pub m_rows: usize,
    pub convex: bool,
    pub coupling_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub resolution: usize,
    pub penalty: f64,
    pub starts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub instance: InstanceKind,
    /// P1 preset name (`S1`..`S4`)
    pub preset: String,
    pub params: ParamOverrides,
    pub settings: SolverSettings<f64>,
    pub hvac: HvacOverrides,
    pub random: RandomConfig,
    pub oracle: OracleConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub strict_audits: bool,
    pub force: bool,
    pub workers: usize,
    /// `key = value` for every default filled in by the parser
    pub defaults_applied: Vec<String>,
}

impl ExperimentConfig {
    /// Desk-scale or full-size building data with the `[hvac]` overrides
    /// applied.
    pub fn hvac_params(&self) -> Result<HvacParams, String> {
        let h = &self.hvac;
        let base = match h.scale {
            Some(HvacScale::Full) => HvacParams::full_scale(),
            _ => HvacParams::default(),
        };
        let mut p = if h.zones.is_some() || h.horizon.is_some() {
            HvacParams::synthesized(h.zones.unwrap_or(base.zones), h.horizon.unwrap_or(base.horizon))
        } else {
            base
        };
        let scalars = [
            (h.dt, &mut p.dt),
            (h.cp, &mut p.cp),
            (h.dr, &mut p.dr),
            (h.eta, &mut p.eta),
            (h.kappa_f, &mut p.kappa_f),
            (h.t_cool, &mut p.t_cool),
            (h.t_min, &mut p.t_min),
            (h.t_max, &mut p.t_max),
            (h.m_min, &mut p.m_min),
            (h.m_max, &mut p.m_max),
            (h.m_bar, &mut p.m_bar),
            (h.penalty_m, &mut p.penalty_m),
        ];
        for (v, slot) in scalars {
            if let Some(v) = v {
                *slot = v;
            }
        }
        if let Some(t) = h.t_init {
            p.t_init = vec![t; p.zones];
        }
        for (name, list, slot) in [("price", &h.price, &mut p.price), ("t_out", &h.t_out, &mut p.t_out)] {
            if let Some(v) = list {
                if v.len() != p.horizon {
                    return Err(format!("{name} has {} entries, horizon is {}", v.len(), p.horizon));
                }
                *slot = v.clone();
            }
        }
        p.check().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

const SECTIONS: [&str; 7] = ["", "instance", "params", "solver", "hvac", "random", "oracle"];

struct Entry<'a> {
    line: usize,
    section: &'a str,
    key: &'a str,
    value: &'a str,
}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        message: message.into(),
    }
}

fn number<V: std::str::FromStr>(e: &Entry) -> Result<V, ConfigError> {
    e.value
        .parse()
        .map_err(|_| err(e.line, format!("`{}` is not a valid value for {}", e.value, e.key)))
}

fn real(e: &Entry, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64, ConfigError> {
    let v: f64 = number(e)?;
    if !v.is_finite() || !ok(v) {
        return Err(err(e.line, format!("{} = {v} out of range ({range})", e.key)));
    }
    Ok(v)
}

fn positive_int(e: &Entry) -> Result<usize, ConfigError> {
    let v: usize = number(e)?;
    if v == 0 {
        return Err(err(e.line, format!("{} must be at least 1", e.key)));
    }
    Ok(v)
}

fn boolean(e: &Entry) -> Result<bool, ConfigError> {
    match e.value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(err(e.line, format!("{} expects true or false, got `{other}`", e.key))),
    }
}

fn list(e: &Entry) -> Result<Vec<f64>, ConfigError> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(e.line, format!("bad number `{}` in {}", s.trim(), e.key)))
        })
        .collect()
}

fn any(_: f64) -> bool {
    true
}

fn pos(v: f64) -> bool {
    v > 0.0
}

fn nonneg(v: f64) -> bool {
    v >= 0.0
}

fn tokenize(text: &str) -> Result<Vec<Entry<'_>>, ConfigError> {
    let mut out = Vec::new();
    let mut section = "";
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?
                .trim();
            if name.is_empty() || !SECTIONS.contains(&name) {
                return Err(err(line, format!("unknown section [{name}]")));
            }
            section = name;
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{body}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(err(line, "empty key or value"));
        }
        if !seen.insert((section, key)) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }
        out.push(Entry {
            line,
            section,
            key,
            value,
        });
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let entries = tokenize(text)?;
    let mut instance = None;
    let mut preset = None;
    let mut seed = None;
    let mut output_dir = None;
    let mut strict_audits = None;
    let mut force = None;
    let mut workers = None;
    let mut params = ParamOverrides::default();
    let mut settings = SolverSettings::<f64>::default();
    let mut hvac = HvacOverrides::default();
    let mut random = RandomConfig {
        n_agents: 3,
        dims: 2,
        m_rows: 2,
        convex: false,
        coupling_weight: 0.05,
    };
    let mut oracle = OracleConfig {
        resolution: 2001,
        penalty: 1e4,
        starts: 16,
    };

    for e in &entries {
        let unknown = || ConfigError::UnknownKey {
            line: e.line,
            section: if e.section.is_empty() {
                "root".into()
            } else {
                e.section.into()
            },
            key: e.key.into(),
        };
        match (e.section, e.key) {
            ("", "instance") | ("instance", "name") => {
                instance = Some(match e.value {
                    "p1" => InstanceKind::P1,
                    "hvac" => InstanceKind::Hvac,
                    "random" => InstanceKind::Random,
                    other => return Err(err(e.line, format!("unknown instance `{other}`"))),
                })
            }
            ("", "preset") | ("instance", "preset") => {
                let name = e.value.to_ascii_uppercase();
                if !["S1", "S2", "S3", "S4"].contains(&name.as_str()) {
                    return Err(err(e.line, format!("unknown preset `{}`", e.value)));
                }
                preset = Some(name);
            }
            ("", "seed") | ("instance", "seed") => seed = Some(number::<u64>(e)?),
            ("", "output_dir") => output_dir = Some(PathBuf::from(e.value)),
            ("", "strict_audits") => strict_audits = Some(boolean(e)?),
            ("", "force") => force = Some(boolean(e)?),
            ("", "workers") => workers = Some(number::<usize>(e)?),

            ("params", "rho") => params.rho = Some(real(e, pos, "> 0")?),
            ("params", "tau") => params.tau = Some(real(e, |v| (0.0..1.0).contains(&v), "[0, 1)")?),
            ("params", "beta") => params.beta = Some(real(e, nonneg, ">= 0")?),
            ("params", "c") => params.c = Some(real(e, nonneg, ">= 0")?),
            ("params", "epsilon") => params.epsilon = Some(real(e, pos, "> 0")?),
            ("params", "max_iters") => params.max_iters = Some(positive_int(e)?),
            ("params", "rho_factor") => params.rho_factor = Some(real(e, pos, "> 0")?),

            ("solver", "grad_tol") => settings.grad_tol = real(e, pos, "> 0")?,
            ("solver", "max_inner_iters") => settings.max_inner_iters = positive_int(e)?,
            ("solver", "armijo_c") => settings.armijo_c = real(e, |v| v > 0.0 && v < 1.0, "(0, 1)")?,
            ("solver", "backtrack_factor") => settings.backtrack_factor = real(e, |v| v > 0.0 && v < 1.0, "(0, 1)")?,
            ("solver", "init_step") => settings.init_step = Some(real(e, pos, "> 0")?),

            ("hvac", "scale") => {
                hvac.scale = Some(match e.value {
                    "desk" => HvacScale::Desk,
                    "full" => HvacScale::Full,
                    other => return Err(err(e.line, format!("scale expects desk or full, got `{other}`"))),
                })
            }
            ("hvac", "zones") => hvac.zones = Some(positive_int(e)?),
            ("hvac", "horizon") => hvac.horizon = Some(positive_int(e)?),
            ("hvac", "dt") => hvac.dt = Some(real(e, pos, "> 0")?),
            ("hvac", "cp") => hvac.cp = Some(real(e, pos, "> 0")?),
            ("hvac", "dr") => hvac.dr = Some(real(e, |v| (0.0..=1.0).contains(&v), "[0, 1]")?),
            ("hvac", "eta") => hvac.eta = Some(real(e, |v| (0.0..=1.0).contains(&v), "[0, 1]")?),
            ("hvac", "kappa_f") => hvac.kappa_f = Some(real(e, nonneg, ">= 0")?),
            ("hvac", "t_cool") => hvac.t_cool = Some(real(e, any, "finite")?),
            ("hvac", "t_min") => hvac.t_min = Some(real(e, any, "finite")?),
            ("hvac", "t_max") => hvac.t_max = Some(real(e, any, "finite")?),
            ("hvac", "m_min") => hvac.m_min = Some(real(e, nonneg, ">= 0")?),
            ("hvac", "m_max") => hvac.m_max = Some(real(e, pos, "> 0")?),
            ("hvac", "m_bar") => hvac.m_bar = Some(real(e, pos, "> 0")?),
            ("hvac", "penalty_m") => hvac.penalty_m = Some(real(e, nonneg, ">= 0")?),
            ("hvac", "t_init") => hvac.t_init = Some(real(e, any, "finite")?),
            ("hvac", "price") => hvac.price = Some(list(e)?),
            ("hvac", "t_out") => hvac.t_out = Some(list(e)?),

            ("random", "n_agents") => random.n_agents = positive_int(e)?,
            ("random", "dims") => random.dims = positive_int(e)?,
            ("random", "m_rows") => random.m_rows = positive_int(e)?,
            ("random", "convex") => random.convex = boolean(e)?,
            ("random", "coupling_weight") => random.coupling_weight = real(e, nonneg, ">= 0")?,

            ("oracle", "resolution") => {
                let r = positive_int(e)?;
                if r < 2 {
                    return Err(err(e.line, "resolution must be at least 2"));
                }
                oracle.resolution = r;
            }
            ("oracle", "penalty") => oracle.penalty = real(e, pos, "> 0")?,
            ("oracle", "starts") => oracle.starts = positive_int(e)?,
            _ => return Err(unknown()),
        }
    }

    let instance = instance.ok_or(ConfigError::MissingRequired("instance"))?;
    let mut defaults_applied = Vec::new();
    let mut default = |key: &str, value: String| defaults_applied.push(format!("{key}={value}"));
    let preset = preset.unwrap_or_else(|| {
        if instance == InstanceKind::P1 {
            default("preset", "S1".into());
        }
        "S1".into()
    });
    let seed = seed.unwrap_or_else(|| {
        default("seed", "0".into());
        0
    });
    let output_dir = output_dir.unwrap_or_else(|| {
        default("output_dir", "out".into());
        PathBuf::from("out")
    });
    let strict_audits = strict_audits.unwrap_or_else(|| {
        default("strict_audits", "false".into());
        false
    });
    let force = force.unwrap_or_else(|| {
        default("force", "false".into());
        false
    });
    let workers = workers.unwrap_or_else(|| {
        default("workers", "1".into());
        1
    });
    Ok(ExperimentConfig {
        instance,
        preset,
        params,
        settings,
        hvac,
        random,
        oracle,
        output_dir,
        seed,
        strict_audits,
        force,
        workers,
        defaults_applied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_sections() {
        let c =
            parse_config("# demo\ninstance = random # inline\nseed = 9\n[random]\ndims = 3\nconvex = true\n").unwrap();
        assert_eq!(c.instance, InstanceKind::Random);
        assert_eq!(c.seed, 9);
        assert_eq!(c.random.dims, 3);
        assert!(c.random.convex);
        assert!(c.defaults_applied.contains(&"output_dir=out".to_string()));
    }

    #[test]
    fn bad_lines_report_their_number() {
        let e = parse_config("instance = p1\n\n[params]\nrho = -1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 4, .. }), "{e:?}");
        let e = parse_config("instance = p1\nrho\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        let e = parse_config("instance = p1\n[nope]\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        let e = parse_config("instance = p1\ninstance = hvac\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
        let e = parse_config("instance = p1\nstrict_audits = yes\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn typos_are_rejected() {
        let e = parse_config("instance = p1\n[params]\nrh0 = 3\n").unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                line: 3,
                section: "params".into(),
                key: "rh0".into()
            }
        );
        // a valid key in the wrong section is still unknown
        assert!(matches!(
            parse_config("instance = p1\n[solver]\ntau = 0.1\n"),
            Err(ConfigError::UnknownKey { line: 3, .. })
        ));
    }

    #[test]
    fn hvac_overrides_apply() {
        let c = parse_config("instance = hvac\n[hvac]\nzones = 2\nhorizon = 3\nprice = 0.1, 0.2, 0.3\nt_init = 25\n")
            .unwrap();
        let p = c.hvac_params().unwrap();
        assert_eq!((p.zones, p.horizon), (2, 3));
        assert_eq!(p.price, vec![0.1, 0.2, 0.3]);
        assert_eq!(p.t_init, vec![25.0, 25.0]);
        let c = parse_config("instance = hvac\n[hvac]\nprice = 0.1, 0.2\n").unwrap();
        assert!(c.hvac_params().is_err());
        let c = parse_config("instance = hvac\n[hvac]\nt_min = 27\n").unwrap();
        assert!(c.hvac_params().is_err());
    }
}
