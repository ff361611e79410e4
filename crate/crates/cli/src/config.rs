//! Layered settings: command-line flags, then a TOML config file, then
//! `Q2D_*` environment variables.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use q2d_core::query_expansion::API_KEY_ENV;

use crate::error::{CliError, CliResult};

const ENV_PREFIX: &str = "Q2D_";

#[derive(Debug, Default, Clone)]
pub struct Layers {
    file: toml::Table,
    env: HashMap<String, String>,
}

impl Layers {
    pub fn new(file: toml::Table, env: HashMap<String, String>) -> CliResult<Self> {
        if file.keys().any(|k| k.replace('-', "_") == "api_key") {
            return Err(CliError::usage(format!(
                "credentials are not read from config files; set {API_KEY_ENV}"
            )));
        }
        Ok(Layers { file, env })
    }

    /// Reads the optional config file and the process environment.
    pub fn load(config: Option<&Path>) -> CliResult<Self> {
        let file = match config {
            None => toml::Table::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?
            }
        };
        let env = std::env::vars()
            .filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != API_KEY_ENV)
            .collect();
        Self::new(file, env)
    }

    fn file_value(&self, key: &str) -> Option<String> {
        let v = self
            .file
            .get(key)
            .or_else(|| self.file.get(&key.replace('_', "-")))?;
        Some(match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    /// First of `flag`, the config file entry `key`, and `Q2D_<KEY>`.
    pub fn get<T>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        let env_key = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
        let (raw, origin) = match self.file_value(key) {
            Some(v) => (v, format!("config key {key}")),
            None => match self.env.get(&env_key) {
                Some(v) => (v.clone(), env_key),
                None => return Ok(None),
            },
        };
        raw.parse()
            .map(Some)
            .map_err(|e| CliError::usage(format!("{origin}: cannot parse {raw:?}: {e}")))
    }

    pub fn get_or<T>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    pub fn require<T>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.get(flag, key)?.ok_or_else(|| {
            CliError::usage(format!(
                "--{} is required (or `{key}` in the config file, or {ENV_PREFIX}{})",
                key.replace('_', "-"),
                key.to_ascii_uppercase()
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn layers(file: &str, env: &[(&str, &str)]) -> Layers {
        Layers::new(
            file.parse().unwrap(),
            env.iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn flags_beat_file_beat_env() {
        let l = layers(
            "top_k = 50\nmodel = \"from-file\"",
            &[("Q2D_TOP_K", "7"), ("Q2D_SEED", "9")],
        );
        assert_eq!(l.get(Some(3usize), "top_k").unwrap(), Some(3));
        assert_eq!(l.get(None::<usize>, "top_k").unwrap(), Some(50));
        assert_eq!(l.get(None::<u64>, "seed").unwrap(), Some(9));
        assert_eq!(
            l.get(None::<String>, "model").unwrap().as_deref(),
            Some("from-file")
        );
        assert_eq!(l.get(None::<String>, "cache").unwrap(), None);
    }

    #[test]
    fn dashed_keys_and_floats() {
        let l = layers(
            "max-tokens = 64\ntemperature = 0.5\nindex = \"a/b.idx\"",
            &[],
        );
        assert_eq!(l.get(None::<u32>, "max_tokens").unwrap(), Some(64));
        assert_eq!(l.get(None::<f64>, "temperature").unwrap(), Some(0.5));
        assert_eq!(
            l.get(None::<PathBuf>, "index").unwrap(),
            Some(PathBuf::from("a/b.idx"))
        );
    }

    #[test]
    fn bad_values_and_missing_required() {
        let l = layers("top_k = \"many\"", &[]);
        assert!(matches!(
            l.get(None::<usize>, "top_k"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            l.require(None::<String>, "queries"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn api_key_never_from_file() {
        let r = Layers::new("api_key = \"secret\"".parse().unwrap(), HashMap::new());
        assert!(matches!(r, Err(CliError::Usage(_))));
    }
}
