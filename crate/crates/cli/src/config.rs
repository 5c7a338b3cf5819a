//! Flat `key=value` experiment configuration with typed, validated access.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use fracsmooth::{MarketModel, Measure, Payoff};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("cannot read config: {0}")]
    Read(String),
}

const DEFAULTS: &[(&str, &str)] = &[
    ("s0", "1"),
    ("sigma", "1"),
    ("mu", "0"),
    ("T", "1"),
    ("payoff", "binary"),
    ("K", "1"),
    ("holder", "0.25"),
    ("c0", "0"),
    ("c1", "1"),
    ("theta", "1"),
    ("n_list", "8,16,32,64,128,256,512"),
    ("n", "256"),
    ("m", "100000"),
    ("seed", "0"),
    ("measure", "martingale"),
    ("depth", "24"),
    ("t_list", "0,0.5,0.9,0.99"),
    ("s_list", "0.5,0.75,1,1.25,1.5"),
    ("order", "4096"),
    ("besov_theta", "0.5"),
    ("p_norm", "2"),
    ("lp_paths", "20000"),
    ("octaves", "24"),
    ("steps_per_octave", "16"),
];

/// Every known key with its resolved value, in key order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(ConfigError::UnknownKey(key.to_string())),
        }
    }

    /// Applies a `key=value` file; `#` starts a comment.
    pub fn load_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read(format!("{}: {e}", path.display())))?;
        self.load_str(&text)
    }

    /// `--key value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), ConfigError> {
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| invalid(flag, "overrides must look like --key value"))?;
            if let Some((k, v)) = key.split_once('=') {
                self.set(k, v)?;
                continue;
            }
            let value = it.next().ok_or_else(|| invalid(key, "missing value"))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).parse().map_err(|e: T::Err| invalid(key, e.to_string()))
    }

    pub fn real(&self, key: &str) -> Result<f64, ConfigError> {
        let v: f64 = self.get(key)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(invalid(key, "must be finite"))
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let items: Result<Vec<T>, _> = self
            .raw(key)
            .split(',')
            .map(|s| s.trim().parse::<T>().map_err(|e| invalid(key, e.to_string())))
            .collect();
        let items = items?;
        if items.is_empty() {
            return Err(invalid(key, "empty list"));
        }
        Ok(items)
    }

    pub fn model(&self) -> Result<MarketModel, ConfigError> {
        MarketModel::new(self.real("s0")?, self.real("sigma")?, self.real("mu")?, self.real("T")?)
            .map_err(|e| field_error(&e))
    }

    pub fn payoff(&self) -> Result<Payoff, ConfigError> {
        let k = self.real("K")?;
        let p = match self.raw("payoff") {
            "binary" => Payoff::binary(k),
            "call" => Payoff::call(k),
            "put" => Payoff::put(k),
            "power" => Payoff::power_holder(k, self.real("holder")?),
            "affine" => Payoff::affine(self.real("c0")?, self.real("c1")?),
            "constant" => Payoff::constant(self.real("c0")?),
            other => return Err(invalid("payoff", format!("unknown kind `{other}`"))),
        };
        p.map_err(|e| field_error(&e))
    }

    pub fn measure(&self) -> Result<Measure, ConfigError> {
        self.raw("measure").parse().map_err(|e| field_error(&e))
    }

    /// Checks every typed key, so a bad value fails even when the command ignores it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for key in ["s0", "sigma", "mu", "T", "K", "holder", "c0", "c1", "theta", "besov_theta", "p_norm"] {
            self.real(key)?;
        }
        for key in ["n", "m", "depth", "order", "lp_paths", "octaves", "steps_per_octave"] {
            self.get::<usize>(key)?;
        }
        self.get::<u64>("seed")?;
        self.list::<usize>("n_list")?;
        self.list::<f64>("t_list")?;
        self.list::<f64>("s_list")?;
        self.measure()?;
        Ok(())
    }

    /// Comment lines recording the resolved configuration.
    pub fn preamble(&self, command: &str) -> Vec<String> {
        let mut lines = vec![
            format!("fracsmooth {}", env!("CARGO_PKG_VERSION")),
            format!("command={command}"),
        ];
        lines.extend(self.values.iter().map(|(k, v)| format!("{k}={v}")));
        lines
    }
}

/// Maps a library parameter error onto the offending config key.
pub fn field_error(e: &fracsmooth::Error) -> ConfigError {
    match e {
        fracsmooth::Error::InvalidParameter { name, reason } => {
            let key = match *name {
                "maturity" => "T",
                "strike" => "K",
                "holder_theta" => "holder",
                other => other,
            };
            invalid(key, reason.clone())
        }
        other => invalid("config", other.to_string()),
    }
}
