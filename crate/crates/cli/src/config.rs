//! Experiment configuration: TOML file values overlaid by command-line flags.
//!
//! Both sources are first flattened to `key -> text` with the flag syntax
//! (comma lists, `start:end:step` grids), so a single parser validates them
//! and every error names the offending key.

use bog_lab::divsolve::DEFAULT_SEED;
use bog_lab::exponents::{parse_rational, rational_range, Q};
use bog_lab::geometry::DomainKind;
use bog_lab::{Error, Result};
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ConstantSweep,
    ExponentTable,
    TransformVerify,
    PressureCheck,
    EnergyCheck,
    CriterionSweep,
    CoveringStats,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ConstantSweep => "constant-sweep",
            Command::ExponentTable => "exponent-table",
            Command::TransformVerify => "transform-verify",
            Command::PressureCheck => "pressure-check",
            Command::EnergyCheck => "energy-check",
            Command::CriterionSweep => "criterion-sweep",
            Command::CoveringStats => "covering-stats",
        }
    }

    fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Command::ConstantSweep => &[("L", "2,1.5,1.25,1.125"), ("q", "2"), ("resolution", "8,16,16")],
            Command::ExponentTable => &[("delta", "0:1:1/100"), ("alpha", "0:2:1/100")],
            Command::TransformVerify => &[("L", "1.5,1.25"), ("resolution", "16,16,16")],
            Command::PressureCheck => &[("q", "2,3"), ("resolution", "6,6,8")],
            Command::EnergyCheck => &[("resolution", "32,32,64"), ("solution", "rigid_rotation")],
            Command::CriterionSweep => &[
                ("R", "1e3,1e4,1e5,1e6,1e7"),
                ("delta", "1/2"),
                ("alpha", "1/4"),
                ("resolution", "2,2,4"),
                ("solution", "constant"),
            ],
            Command::CoveringStats => &[("L", "auto"), ("sigma", "1/8,1/16,1/32,1/64"), ("samples", "100000")],
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const COMMON_DEFAULTS: &[(&str, &str)] = &[
    ("kind", "annulus3d"),
    ("R", "1"),
    ("L", "2"),
    ("q", "2"),
    ("delta", "0"),
    ("alpha", "0"),
    ("sigma", "1/8"),
    ("resolution", "8,8,8"),
    ("output", "bog-lab-out"),
    ("samples", "10000"),
    ("count", "20"),
    ("probes", "8"),
    ("solution", "constant"),
    ("criterion", "thin"),
    ("region", "whole"),
    ("variant", "spherical"),
];

/// Every key a config file or flag may set.
pub const KEYS: &[&str] = &[
    "kind", "R", "L", "q", "delta", "alpha", "sigma", "resolution", "output", "seed", "samples", "count",
    "probes", "solution", "criterion", "region", "variant",
];

/// Outer-to-inner radius ratio; `Thinnest` picks `1 + 8 sigma` per covering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Value(f64),
    Thinnest,
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Value(v) => s.serialize_f64(*v),
            Ratio::Thinnest => s.serialize_str("auto"),
        }
    }
}

/// Exact rationals serialized as `"n/d"` text.
fn rationals<S: Serializer>(v: &[Q], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

/// Fully resolved run configuration, recorded in every summary.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub kind: DomainKind,
    #[serde(rename = "R")]
    pub radii: Vec<f64>,
    #[serde(rename = "L")]
    pub ratios: Vec<Ratio>,
    pub q: Vec<f64>,
    #[serde(serialize_with = "rationals")]
    pub delta: Vec<Q>,
    #[serde(serialize_with = "rationals")]
    pub alpha: Vec<Q>,
    pub sigma: Vec<f64>,
    pub resolution: [usize; 3],
    #[serde(skip)]
    pub output: PathBuf,
    pub seed: u64,
    pub samples: usize,
    pub count: usize,
    pub probes: usize,
    pub solution: String,
    pub criterion: String,
    pub region: String,
    pub variant: String,
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid { field: field.into(), message: message.into() }
}

/// Reads a TOML file into flag-syntax text values.
pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    parse_toml(&text)
}

pub fn parse_toml(text: &str) -> Result<BTreeMap<String, String>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("config", e.message().to_string()))?;
    let mut out = BTreeMap::new();
    for (key, value) in table {
        if !KEYS.contains(&key.as_str()) {
            return Err(invalid(&key, "unknown key"));
        }
        let text = match value {
            toml::Value::Array(items) => {
                items.iter().map(|v| scalar_text(&key, v)).collect::<Result<Vec<_>>>()?.join(",")
            }
            v => scalar_text(&key, &v)?,
        };
        out.insert(key, text);
    }
    Ok(out)
}

fn scalar_text(key: &str, v: &toml::Value) -> Result<String> {
    match v {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        other => Err(invalid(key, format!("unsupported value {other}"))),
    }
}

fn items<'a>(key: &str, text: &'a str) -> Result<Vec<&'a str>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.is_empty() {
        return Err(invalid(key, "list must not be empty"));
    }
    Ok(parts)
}

fn real(key: &str, s: &str) -> Result<f64> {
    let v = match parse_rational(s) {
        Some(r) => bog_lab::exponents::to_f64(&r),
        None => s.parse::<f64>().map_err(|_| invalid(key, format!("`{s}` is not a number")))?,
    };
    if !v.is_finite() {
        return Err(invalid(key, format!("`{s}` is not finite")));
    }
    Ok(v)
}

fn reals(key: &str, text: &str) -> Result<Vec<f64>> {
    items(key, text)?.into_iter().map(|s| real(key, s)).collect()
}

fn exact(key: &str, s: &str) -> Result<Q> {
    parse_rational(s).ok_or_else(|| invalid(key, format!("`{s}` is not an exact decimal or fraction")))
}

/// Comma list of exact values, or a `start:end:step` grid.
fn rational_grid(key: &str, text: &str) -> Result<Vec<Q>> {
    let parts: Vec<&str> = text.split(':').collect();
    let out = match parts.as_slice() {
        [start, end, step] => {
            let step = exact(key, step)?;
            if step <= Q::from_integer(0.into()) {
                return Err(invalid(key, "grid step must be positive"));
            }
            rational_range(&exact(key, start)?, &exact(key, end)?, &step)
        }
        [_] => items(key, text)?.into_iter().map(|s| exact(key, s)).collect::<Result<_>>()?,
        _ => return Err(invalid(key, "expected a list or start:end:step")),
    };
    if out.is_empty() {
        return Err(invalid(key, "grid is empty"));
    }
    Ok(out)
}

fn count(key: &str, s: &str) -> Result<usize> {
    match s.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(invalid(key, format!("`{s}` is not a positive integer"))),
    }
}

impl ExperimentConfig {
    /// Resolves defaults, then file values, then flags (flags win).
    pub fn resolve(
        command: Command,
        file: BTreeMap<String, String>,
        flags: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut v: BTreeMap<String, String> =
            COMMON_DEFAULTS.iter().map(|(k, d)| (k.to_string(), d.to_string())).collect();
        v.extend(command.defaults().iter().map(|(k, d)| (k.to_string(), d.to_string())));
        v.extend(file);
        v.extend(flags);
        let get = |k: &str| v.get(k).map(String::as_str).unwrap_or("");

        let kind = DomainKind::from_str(get("kind"))?;
        let radii = reals("R", get("R"))?;
        if radii.iter().any(|&r| r <= 0.0) {
            return Err(invalid("R", "radii must be positive"));
        }
        let ratios = items("L", get("L"))?
            .into_iter()
            .map(|s| match s {
                "auto" if command == Command::CoveringStats => Ok(Ratio::Thinnest),
                _ => real("L", s).and_then(|l| {
                    if l > 1.0 { Ok(Ratio::Value(l)) } else { Err(invalid("L", format!("ratio {l} must exceed 1"))) }
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let q = reals("q", get("q"))?;
        if q.iter().any(|&x| x <= 1.0) {
            return Err(invalid("q", "exponents must exceed 1"));
        }
        let sigma = reals("sigma", get("sigma"))?;
        let res = items("resolution", get("resolution"))?;
        let resolution: [usize; 3] = match res.as_slice() {
            [a, b, c] => [count("resolution", a)?, count("resolution", b)?, count("resolution", c)?],
            [a] => [count("resolution", a)?; 3],
            _ => return Err(invalid("resolution", "expected one or three cell counts")),
        };
        let seed = match v.get("seed") {
            None => DEFAULT_SEED,
            Some(s) => {
                let s = s.trim();
                let parsed = match s.strip_prefix("0x") {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => s.parse(),
                };
                parsed.map_err(|_| invalid("seed", format!("`{s}` is not an unsigned integer")))?
            }
        };
        let output = get("output");
        if output.is_empty() {
            return Err(invalid("output", "path must not be empty"));
        }
        let word = |k: &str, allowed: &[&str]| -> Result<String> {
            let s = get(k).trim().to_ascii_lowercase().replace('-', "_");
            if allowed.contains(&s.as_str()) {
                Ok(s)
            } else {
                Err(invalid(k, format!("`{}` is not one of {}", get(k), allowed.join(", "))))
            }
        };
        Ok(Self {
            command,
            kind,
            radii,
            ratios,
            q,
            delta: rational_grid("delta", get("delta"))?,
            alpha: rational_grid("alpha", get("alpha"))?,
            sigma,
            resolution,
            output: PathBuf::from(output),
            seed,
            samples: count("samples", get("samples"))?,
            count: count("count", get("count"))?,
            probes: count("probes", get("probes"))?,
            solution: word("solution", &["zero", "constant", "shear", "rigid_rotation", "point_source"])?,
            criterion: word("criterion", &["ratio", "thin", "slab_power", "slab_integral"])?,
            region: word("region", &["whole", "half", "slab"])?,
            variant: word("variant", &["spherical", "cylindrical"])?,
        })
    }

    /// Fixed-ratio values of `L`.
    pub fn fixed_ratios(&self) -> Result<Vec<f64>> {
        self.ratios
            .iter()
            .map(|r| match r {
                Ratio::Value(l) => Ok(*l),
                Ratio::Thinnest => Err(invalid("L", "`auto` is only meaningful for covering-stats")),
            })
            .collect()
    }

    /// SHA-256 of the canonical JSON form; the output path is excluded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
