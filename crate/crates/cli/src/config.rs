//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;

use capm_core::energy::DistanceMetric;
use capm_core::sim::ExperimentConfig;
use capm_core::SigmaMode;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("out of range: {0}")]
    Range(String),
}

type Getter = fn(&ExperimentConfig) -> String;
type Setter = fn(&mut ExperimentConfig, &str) -> Result<(), String>;

/// One configurable field.
pub struct Key {
    pub name: &'static str,
    pub help: &'static str,
    get: Getter,
    set: Setter,
}

fn num(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|_| format!("`{s}` is not a decimal number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn count(s: &str) -> Result<usize, String> {
    s.parse()
        .map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn u32_of(s: &str) -> Result<u32, String> {
    s.parse()
        .map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn flag(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("`{s}` is not 0 or 1")),
    }
}

fn exponent(s: &str) -> Result<u32, String> {
    match s {
        "1" => Ok(1),
        "2" => Ok(2),
        _ => Err(format!("`{s}` is not 1 or 2")),
    }
}

fn list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| num(t.trim())).collect()
}

fn show(v: f64) -> String {
    format!("{v}")
}

fn sigma_exponent(m: SigmaMode) -> u32 {
    match m {
        SigmaMode::Linear => 1,
        SigmaMode::Squared => 2,
    }
}

pub const KEYS: &[Key] = &[
    Key {
        name: "n_trials",
        help: "trials per path length",
        get: |c| c.n_trials.to_string(),
        set: |c, v| {
            c.n_trials = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "seed",
        help: "master seed",
        get: |c| c.master_seed.to_string(),
        set: |c, v| {
            c.master_seed = v.parse().map_err(|_| format!("`{v}` is not a u64"))?;
            Ok(())
        },
    },
    Key {
        name: "threads",
        help: "worker threads, 0 = all cores",
        get: |c| c.threads.to_string(),
        set: |c, v| {
            c.threads = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "workspace",
        help: "side of the square TROI workspace (m)",
        get: |c| show(c.workspace),
        set: |c, v| {
            c.workspace = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "r_w.min",
        help: "smallest TROI radius (m)",
        get: |c| show(c.r_w_range.0),
        set: |c, v| {
            c.r_w_range.0 = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "r_w.max",
        help: "largest TROI radius (m)",
        get: |c| show(c.r_w_range.1),
        set: |c, v| {
            c.r_w_range.1 = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "path_lengths",
        help: "comma-separated start-to-end distances (m)",
        get: |c| {
            c.path_lengths
                .iter()
                .map(|l| show(*l))
                .collect::<Vec<_>>()
                .join(",")
        },
        set: |c, v| {
            c.path_lengths = list(v)?;
            Ok(())
        },
    },
    Key {
        name: "sigma.exponent",
        help: "MPOI covariance r_w^k * I, k in {1, 2}",
        get: |c| sigma_exponent(c.sigma_mode).to_string(),
        set: |c, v| {
            c.sigma_mode = if exponent(v)? == 1 {
                SigmaMode::Linear
            } else {
                SigmaMode::Squared
            };
            Ok(())
        },
    },
    Key {
        name: "sigma.truncate",
        help: "1 = resample MPOI draws until inside the TROI",
        get: |c| u8::from(c.truncate_to_troi).to_string(),
        set: |c, v| {
            c.truncate_to_troi = flag(v)?;
            Ok(())
        },
    },
    Key {
        name: "mc_samples",
        help: "MPOI samples per probability estimate",
        get: |c| c.mc_samples.to_string(),
        set: |c, v| {
            c.mc_samples = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "energy.alpha",
        help: "fixed cost per body move",
        get: |c| show(c.energy.alpha),
        set: |c, v| {
            c.energy.alpha = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "energy.gamma",
        help: "cost per unit distance",
        get: |c| show(c.energy.gamma),
        set: |c, v| {
            c.energy.gamma = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "energy.beta",
        help: "orientation weight",
        get: |c| show(c.energy.beta),
        set: |c, v| {
            c.energy.beta = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "energy.exponent",
        help: "distance |dX|^k, k in {1, 2}",
        get: |c| c.energy.metric.exponent().to_string(),
        set: |c, v| {
            c.energy.metric = DistanceMetric::from_exponent(exponent(v)?).expect("checked");
            Ok(())
        },
    },
    Key {
        name: "task.delta",
        help: "minimum image-area ratio of the TROI",
        get: |c| show(c.task.delta),
        set: |c, v| {
            c.task.delta = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "task.eps_min",
        help: "lower squared tool distance (m^2)",
        get: |c| show(c.task.eps_min),
        set: |c, v| {
            c.task.eps_min = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "task.eps_max",
        help: "upper squared tool distance (m^2)",
        get: |c| show(c.task.eps_max),
        set: |c, v| {
            c.task.eps_max = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "task.xi",
        help: "ticks the manipulation pose is held",
        get: |c| c.task.xi.to_string(),
        set: |c, v| {
            c.task.xi = u32_of(v)?;
            Ok(())
        },
    },
    Key {
        name: "task.aim_tolerance_deg",
        help: "tool aiming tolerance (deg)",
        get: |c| show(c.task.aim_tolerance.to_degrees()),
        set: |c, v| {
            c.task.aim_tolerance = num(v)?.to_radians();
            Ok(())
        },
    },
    Key {
        name: "camera.focal_u",
        help: "focal length, u (px)",
        get: |c| show(c.robot.camera.focal_u),
        set: |c, v| {
            c.robot.camera.focal_u = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "camera.focal_v",
        help: "focal length, v (px)",
        get: |c| show(c.robot.camera.focal_v),
        set: |c, v| {
            c.robot.camera.focal_v = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "camera.center_u",
        help: "principal point, u (px)",
        get: |c| show(c.robot.camera.center_u),
        set: |c, v| {
            c.robot.camera.center_u = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "camera.center_v",
        help: "principal point, v (px)",
        get: |c| show(c.robot.camera.center_v),
        set: |c, v| {
            c.robot.camera.center_v = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "camera.width",
        help: "image width (px)",
        get: |c| c.robot.camera.width.to_string(),
        set: |c, v| {
            c.robot.camera.width = u32_of(v)?;
            Ok(())
        },
    },
    Key {
        name: "camera.height",
        help: "image height (px)",
        get: |c| c.robot.camera.height.to_string(),
        set: |c, v| {
            c.robot.camera.height = u32_of(v)?;
            Ok(())
        },
    },
    Key {
        name: "arm.reach_min",
        help: "inner radius of the reach shell (m)",
        get: |c| show(c.robot.arm.reach_min),
        set: |c, v| {
            c.robot.arm.reach_min = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "arm.reach_max",
        help: "outer radius of the reach shell (m)",
        get: |c| show(c.robot.arm.reach_max),
        set: |c, v| {
            c.robot.arm.reach_max = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "arm.shoulder_x",
        help: "shoulder offset along the heading (m)",
        get: |c| show(c.robot.arm.shoulder_offset.x),
        set: |c, v| {
            c.robot.arm.shoulder_offset.x = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "arm.shoulder_y",
        help: "shoulder offset to the left (m)",
        get: |c| show(c.robot.arm.shoulder_offset.y),
        set: |c, v| {
            c.robot.arm.shoulder_offset.y = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "arm.shoulder_z",
        help: "shoulder offset above the body (m)",
        get: |c| show(c.robot.arm.shoulder_offset.z),
        set: |c, v| {
            c.robot.arm.shoulder_offset.z = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "body.height",
        help: "body origin height (m)",
        get: |c| show(c.robot.body_height),
        set: |c, v| {
            c.robot.body_height = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "grid.angular",
        help: "planner grid, angular steps",
        get: |c| c.polar.angular.to_string(),
        set: |c, v| {
            c.polar.angular = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "grid.radial",
        help: "planner grid, radial steps",
        get: |c| c.polar.radial.to_string(),
        set: |c, v| {
            c.polar.radial = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "grid.refine",
        help: "planner grid refinement factor",
        get: |c| c.polar.refine_factor.to_string(),
        set: |c, v| {
            c.polar.refine_factor = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.standoff_steps",
        help: "region scan, first candidate axis",
        get: |c| c.search.standoff_steps.to_string(),
        set: |c, v| {
            c.search.standoff_steps = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.height_steps",
        help: "region scan, second candidate axis",
        get: |c| c.search.height_steps.to_string(),
        set: |c, v| {
            c.search.height_steps = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.radial_steps",
        help: "region scan, coarse body-distance steps",
        get: |c| c.search.radial_steps.to_string(),
        set: |c, v| {
            c.search.radial_steps = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.radial_margin",
        help: "body-distance sweep beyond reach_max (m)",
        get: |c| show(c.search.radial_margin),
        set: |c, v| {
            c.search.radial_margin = num(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.refine_factor",
        help: "region scan refinement factor",
        get: |c| c.search.refine_factor.to_string(),
        set: |c, v| {
            c.search.refine_factor = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.refine_levels",
        help: "region scan refinement levels",
        get: |c| c.search.refine_levels.to_string(),
        set: |c, v| {
            c.search.refine_levels = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.refine_seeds",
        help: "candidates refined per interval end",
        get: |c| c.search.refine_seeds.to_string(),
        set: |c, v| {
            c.search.refine_seeds = count(v)?;
            Ok(())
        },
    },
    Key {
        name: "search.candidate_levels",
        help: "end-effector candidate refinement levels",
        get: |c| c.search.candidate_levels.to_string(),
        set: |c, v| {
            c.search.candidate_levels = count(v)?;
            Ok(())
        },
    },
];

pub fn find_key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

/// Parse config text over the defaults and validate the result.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: "expected `key = value`".into(),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        let key = find_key(k).ok_or_else(|| ConfigError::UnknownKey {
            line,
            key: k.to_string(),
        })?;
        (key.set)(&mut cfg, v).map_err(|message| ConfigError::Parse {
            line,
            message: format!("{k}: {message}"),
        })?;
    }
    cfg.validate()
        .map_err(|e| ConfigError::Range(e.to_string()))?;
    Ok(cfg)
}

/// Every key with its current value, one `key = value` per line.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    for k in KEYS {
        let _ = writeln!(out, "{} = {}", k.name, (k.get)(cfg));
    }
    out
}

/// Key listing for the usage text.
pub fn key_help() -> String {
    let d = ExperimentConfig::default();
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys (`key = value`, `#` starts a comment):\n");
    for k in KEYS {
        let _ = writeln!(out, "  {:width$}  {:<14} {}", k.name, (k.get)(&d), k.help);
    }
    out
}
