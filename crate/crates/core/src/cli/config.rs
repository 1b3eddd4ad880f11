//! Config-file loading and flag/config resolution. Flags win on conflict.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Low-pass cutoff, or explicitly none.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    Off,
    Hz(f64),
}

impl FromStr for Cutoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "none" => Ok(Self::Off),
            t => match t.parse::<f64>() {
                Ok(hz) if hz.is_finite() && hz > 0.0 => Ok(Self::Hz(hz)),
                _ => Err(Error::parameter(format!("cutoff must be a positive frequency in Hz or \"off\", got {s:?}"))),
            },
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Off => f.write_str("off"),
            Self::Hz(hz) => write!(f, "{hz}"),
        }
    }
}

impl Serialize for Cutoff {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Off => s.serialize_str("off"),
            Self::Hz(hz) => s.serialize_f64(*hz),
        }
    }
}

impl<'de> Deserialize<'de> for Cutoff {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Hz(f64),
            Text(String),
        }
        let text = match Repr::deserialize(d)? {
            Repr::Hz(hz) => hz.to_string(),
            Repr::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Every key a config file may set; each command reads the keys it uses.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub units: Option<PathBuf>,
    pub cutoff_hz: Option<Cutoff>,
    pub subtract_mean: Option<bool>,
    pub library: Option<String>,
    pub eta: Option<f64>,
    pub etas: Option<Vec<f64>>,
    pub boundary_trim: Option<usize>,
    pub exempt_forcing: Option<bool>,
    pub normalize: Option<bool>,
    pub substeps: Option<usize>,
    pub phase: Option<bool>,
    pub model: Option<PathBuf>,
    pub min_separation_s: Option<f64>,
    pub smoothing_s: Option<f64>,
    pub relative_height: Option<f64>,
    pub train_cycles: Option<Vec<usize>>,
    pub features: Option<PathBuf>,
    pub partitions: Option<usize>,
    pub train_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub objective: Option<String>,
    pub lambda: Option<f64>,
    pub max_iterations: Option<usize>,
    pub plain_random: Option<bool>,
    pub permute_labels: Option<bool>,
    pub regions: Option<Vec<String>>,
    pub grid_steps: Option<usize>,
    pub slice_value: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub eps: Option<f64>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub noise_p: Option<f64>,
    pub noise_v: Option<f64>,
    pub burn_in: Option<f64>,
    pub sine_hz: Option<f64>,
    pub libraries: Option<Vec<String>>,
    pub runs: Option<usize>,
    pub iterations: Option<usize>,
    pub criterion: Option<String>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parameter(format!("config file {}: {e}", path.display())))
    }
}

/// Flag value, else config value, else `None`.
pub fn pick<T>(flag: Option<T>, config: &Option<T>) -> Option<T>
where
    T: Clone,
{
    flag.or_else(|| config.clone())
}

/// A flag that can only switch a setting on; the config may also switch it on.
pub fn switch(flag: bool, config: Option<bool>) -> bool {
    flag || config.unwrap_or(false)
}

pub fn required<T>(value: Option<T>, name: &str) -> Result<T> {
    value.ok_or_else(|| Error::parameter(format!("--{name} is required (flag or config key {:?})", name.replace('-', "_"))))
}

pub fn positive(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::parameter(format!("--{name} must be positive, got {value}")))
    }
}

pub fn non_negative(value: f64, name: &str) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::parameter(format!("--{name} must be finite and ≥ 0, got {value}")))
    }
}

pub fn at_least(value: usize, min: usize, name: &str) -> Result<usize> {
    if value >= min {
        Ok(value)
    } else {
        Err(Error::parameter(format!("--{name} must be ≥ {min}, got {value}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_forms() {
        assert_eq!("off".parse::<Cutoff>().unwrap(), Cutoff::Off);
        assert_eq!("25".parse::<Cutoff>().unwrap(), Cutoff::Hz(25.0));
        assert!("-1".parse::<Cutoff>().is_err());
        assert!("fast".parse::<Cutoff>().is_err());
        let c: Cutoff = serde_json::from_str("12.5").unwrap();
        assert_eq!(c, Cutoff::Hz(12.5));
        let c: Cutoff = serde_json::from_str("\"off\"").unwrap();
        assert_eq!(serde_json::to_string(&c).unwrap(), "\"off\"");
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<ConfigFile>(r#"{"eta": 1.0}"#).is_ok());
        assert!(serde_json::from_str::<ConfigFile>(r#"{"etaa": 1.0}"#).is_err());
    }

    #[test]
    fn flags_win() {
        assert_eq!(pick(Some(1), &Some(2)), Some(1));
        assert_eq!(pick(None, &Some(2)), Some(2));
        assert!(switch(false, Some(true)));
        assert!(!switch(false, None));
    }
}
