//! Analysis configuration: defaults, config-file parsing, CLI overrides.
//!
//! The config file reuses the model file's section syntax: `[section]`
//! headers, `key = value ...` lines, `#` comments. Unknown sections or
//! keys are errors so typos cannot silently fall back to defaults.

use num_complex::Complex64;
use serde::Serialize;

use crate::equilibrium::SolverConfig;
use crate::model::{ModelSpec, ParameterPoint};

#[derive(Debug, Clone, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

/// Rank-test settings.
#[derive(Debug, Clone, Serialize)]
pub struct RankConfig {
    /// Relative singular-value threshold.
    pub rel_tol: f64,
    /// Number of extra random z samples beyond the fixed and user ones.
    pub samples: usize,
    pub seed: u64,
    /// User-supplied z values, tried in addition to the defaults.
    #[serde(serialize_with = "ser_complex_vec")]
    pub z_user: Vec<Complex64>,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            rel_tol: 1e-10,
            samples: 5,
            seed: 42,
            z_user: Vec::new(),
        }
    }
}

fn ser_complex_vec<S: serde::Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| format_complex(*z)))
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.im >= 0.0 {
        format!("{}+{}i", z.re, z.im)
    } else {
        format!("{}{}i", z.re, z.im)
    }
}

/// Sampling of extra parameter points for the structural verdict.
#[derive(Debug, Clone, Serialize)]
pub struct StructuralConfig {
    /// Number of random redraws of (P_s, delays).
    pub draws: usize,
    /// Uniform draw box for structural parameters and delays.
    pub box_lo: f64,
    pub box_hi: f64,
    pub seed: u64,
}

impl Default for StructuralConfig {
    fn default() -> Self {
        StructuralConfig {
            draws: 5,
            box_lo: 0.2,
            box_hi: 2.0,
            seed: 7,
        }
    }
}

/// Simulation / scaling-experiment settings.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub t_end: f64,
    pub h: f64,
    pub eps: Vec<f64>,
    /// Square-pulse amplitude before L2 normalization.
    pub amplitude: f64,
    /// Run the eps-scaling experiment as part of `analyze`.
    pub scaling: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            t_end: 10.0,
            h: 1e-3,
            eps: crate::sim::DEFAULT_EPS_LIST.to_vec(),
            amplitude: 1.0,
            scaling: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisConfig {
    /// Nominal point; missing pieces are filled per-model by
    /// [`AnalysisConfig::resolve_point`].
    pub point: PartialPoint,
    pub solver: SolverConfig,
    pub rank: RankConfig,
    pub structural: StructuralConfig,
    pub sim: SimConfig,
}

/// Point values as given in the config file; anything absent gets a
/// model-derived default.
#[derive(Debug, Clone, Default)]
pub struct PartialPoint {
    pub p_s: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
    pub u_bar: Option<Vec<f64>>,
}

impl AnalysisConfig {
    /// Fill missing point pieces: tau_i = i, nu_j = j, u = 0, p = 1.
    pub fn resolve_point(&self, spec: &ModelSpec) -> ParameterPoint {
        ParameterPoint {
            p_s: self
                .point
                .p_s
                .clone()
                .unwrap_or_else(|| vec![1.0; spec.p()]),
            tau: self
                .point
                .tau
                .clone()
                .unwrap_or_else(|| (1..=spec.l()).map(|i| i as f64).collect()),
            nu: self
                .point
                .nu
                .clone()
                .unwrap_or_else(|| (1..=spec.r()).map(|i| i as f64).collect()),
            u_bar: self
                .point
                .u_bar
                .clone()
                .unwrap_or_else(|| vec![0.0; spec.k()]),
        }
    }
}

/// Parse a string like `2`, `-1.5`, `1+1i`, `0.5-2i`, `3i`, `-i`.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty complex literal".into());
    }
    if let Ok(re) = s.parse::<f64>() {
        return Ok(Complex64::new(re, 0.0));
    }
    if let Some(body) = s.strip_suffix(['i', 'j']) {
        // split at the last +/- that is not part of an exponent and not leading
        let bytes = body.as_bytes();
        let mut split = None;
        for idx in (1..bytes.len()).rev() {
            let c = bytes[idx] as char;
            if (c == '+' || c == '-') && !matches!(bytes[idx - 1] as char, 'e' | 'E') {
                split = Some(idx);
                break;
            }
        }
        let (re_str, im_str) = match split {
            Some(idx) => (&body[..idx], &body[idx..]),
            None => ("0", body),
        };
        let re: f64 = if re_str.is_empty() {
            0.0
        } else {
            re_str
                .parse()
                .map_err(|_| format!("bad real part in '{s}'"))?
        };
        let im: f64 = match im_str {
            "" | "+" => 1.0,
            "-" => -1.0,
            other => other
                .parse()
                .map_err(|_| format!("bad imaginary part in '{s}'"))?,
        };
        return Ok(Complex64::new(re, im));
    }
    Err(format!("cannot parse '{s}' as a complex number"))
}

fn parse_f64_list(vals: &[&str], line: usize) -> Result<Vec<f64>, ConfigError> {
    vals.iter()
        .map(|v| {
            v.parse::<f64>().map_err(|_| ConfigError {
                line,
                message: format!("expected a number, got '{v}'"),
            })
        })
        .collect()
}

fn one_f64(vals: &[&str], line: usize, key: &str) -> Result<f64, ConfigError> {
    if vals.len() != 1 {
        return Err(ConfigError {
            line,
            message: format!("'{key}' takes exactly one value"),
        });
    }
    vals[0].parse().map_err(|_| ConfigError {
        line,
        message: format!("expected a number for '{key}', got '{}'", vals[0]),
    })
}

fn one_usize(vals: &[&str], line: usize, key: &str) -> Result<usize, ConfigError> {
    if vals.len() != 1 {
        return Err(ConfigError {
            line,
            message: format!("'{key}' takes exactly one value"),
        });
    }
    vals[0].parse().map_err(|_| ConfigError {
        line,
        message: format!("expected an integer for '{key}', got '{}'", vals[0]),
    })
}

/// Parse a config document into an [`AnalysisConfig`], starting from
/// defaults.
pub fn parse_config(source: &str) -> Result<AnalysisConfig, ConfigError> {
    let mut cfg = AnalysisConfig::default();
    let mut section: Option<String> = None;
    for (i, raw) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "point" | "solver" | "rank" | "structural" | "sim") {
                return Err(ConfigError {
                    line: lineno,
                    message: format!("unknown section '[{name}]'"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, rest)) = line.split_once('=') else {
            return Err(ConfigError {
                line: lineno,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim();
        let vals: Vec<&str> = rest.split_whitespace().collect();
        let sec = section.as_deref().ok_or(ConfigError {
            line: lineno,
            message: "key before any [section] header".into(),
        })?;
        match (sec, key) {
            ("point", "tau") => cfg.point.tau = Some(parse_f64_list(&vals, lineno)?),
            ("point", "nu") => cfg.point.nu = Some(parse_f64_list(&vals, lineno)?),
            ("point", "u") => cfg.point.u_bar = Some(parse_f64_list(&vals, lineno)?),
            ("point", "p") => cfg.point.p_s = Some(parse_f64_list(&vals, lineno)?),
            ("solver", "tol") => cfg.solver.tol_residual = one_f64(&vals, lineno, key)?,
            ("solver", "max_iters") => cfg.solver.max_iters = one_usize(&vals, lineno, key)?,
            ("solver", "starts") => cfg.solver.n_starts = one_usize(&vals, lineno, key)?,
            ("solver", "seed") => cfg.solver.seed = one_usize(&vals, lineno, key)? as u64,
            ("solver", "box") => {
                if vals.len() != 2 {
                    return Err(ConfigError {
                        line: lineno,
                        message: "'box' takes two values: lo hi".into(),
                    });
                }
                let v = parse_f64_list(&vals, lineno)?;
                cfg.solver.start_box = (v[0], v[1]);
            }
            ("rank", "rel_tol") => cfg.rank.rel_tol = one_f64(&vals, lineno, key)?,
            ("rank", "samples") => cfg.rank.samples = one_usize(&vals, lineno, key)?,
            ("rank", "seed") => cfg.rank.seed = one_usize(&vals, lineno, key)? as u64,
            ("rank", "z") => {
                let mut zs = Vec::new();
                for v in &vals {
                    zs.push(parse_complex(v).map_err(|message| ConfigError {
                        line: lineno,
                        message,
                    })?);
                }
                cfg.rank.z_user = zs;
            }
            ("structural", "draws") => cfg.structural.draws = one_usize(&vals, lineno, key)?,
            ("structural", "seed") => cfg.structural.seed = one_usize(&vals, lineno, key)? as u64,
            ("structural", "box") => {
                if vals.len() != 2 {
                    return Err(ConfigError {
                        line: lineno,
                        message: "'box' takes two values: lo hi".into(),
                    });
                }
                let v = parse_f64_list(&vals, lineno)?;
                if v[0] <= 0.0 || v[1] <= v[0] {
                    return Err(ConfigError {
                        line: lineno,
                        message: "structural box must satisfy 0 < lo < hi (delays stay positive)"
                            .into(),
                    });
                }
                cfg.structural.box_lo = v[0];
                cfg.structural.box_hi = v[1];
            }
            ("sim", "T") => cfg.sim.t_end = one_f64(&vals, lineno, key)?,
            ("sim", "h") => cfg.sim.h = one_f64(&vals, lineno, key)?,
            ("sim", "eps") => cfg.sim.eps = parse_f64_list(&vals, lineno)?,
            ("sim", "amplitude") => cfg.sim.amplitude = one_f64(&vals, lineno, key)?,
            ("sim", "scaling") => {
                cfg.sim.scaling = match vals.as_slice() {
                    ["true"] | ["1"] | ["on"] => true,
                    ["false"] | ["0"] | ["off"] => false,
                    _ => {
                        return Err(ConfigError {
                            line: lineno,
                            message: "'scaling' must be true or false".into(),
                        })
                    }
                }
            }
            _ => {
                return Err(ConfigError {
                    line: lineno,
                    message: format!("unknown key '{key}' in section [{sec}]"),
                })
            }
        }
    }
    if cfg.sim.t_end <= 0.0 {
        return Err(ConfigError {
            line: 0,
            message: format!("simulation horizon T must be positive, got {}", cfg.sim.t_end),
        });
    }
    if cfg.sim.h <= 0.0 {
        return Err(ConfigError {
            line: 0,
            message: format!("step size h must be positive, got {}", cfg.sim.h),
        });
    }
    Ok(cfg)
}
