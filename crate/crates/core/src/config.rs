//! Pipeline configuration: a flat TOML file plus `LOV_*` environment
//! overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::post_analyzer::DEFAULT_ALPHA;
use crate::quarantine::{DEFAULT_T_THR, PURGE_DAYS, QUARANTINE_DAYS};
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "LOV_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub snapshot_dir: PathBuf,
    pub model_path: PathBuf,
    /// Whitelist store: generations, journal and published exports.
    pub store_dir: PathBuf,
    pub report_dir: PathBuf,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_t_thr")]
    pub t_thr: f64,
    #[serde(default = "default_quarantine_days")]
    pub quarantine_days: i64,
    #[serde(default = "default_purge_days")]
    pub purge_days: i64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bind")]
    pub http_bind: String,
    #[serde(default = "default_port")]
    pub http_port: u16,
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_t_thr() -> f64 {
    DEFAULT_T_THR
}
fn default_quarantine_days() -> i64 {
    QUARANTINE_DAYS
}
fn default_purge_days() -> i64 {
    PURGE_DAYS
}
fn default_bind() -> String {
    "127.0.0.1".into()
}
fn default_port() -> u16 {
    8080
}

impl PipelineConfig {
    /// Defaults for every threshold, with all paths under `root`.
    pub fn under(root: impl AsRef<Path>) -> Self {
        let root = root.as_ref();
        PipelineConfig {
            snapshot_dir: root.join("snapshots"),
            model_path: root.join("model.json"),
            store_dir: root.join("store"),
            report_dir: root.join("reports"),
            alpha: DEFAULT_ALPHA,
            t_thr: DEFAULT_T_THR,
            quarantine_days: QUARANTINE_DAYS,
            purge_days: PURGE_DAYS,
            seed: 0,
            http_bind: default_bind(),
            http_port: default_port(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and applies overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.with_env(std::env::vars())
    }

    /// Applies `LOV_<FIELD>` overrides (case-insensitive field name) and
    /// validates the result. Unrelated variables are ignored; unknown
    /// `LOV_` keys are an error so typos do not pass silently.
    pub fn with_env(mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut overrides: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|f| (f.to_ascii_lowercase(), v))
            })
            .collect();
        overrides.sort();
        for (field, value) in overrides {
            let bad = |what: &str| {
                Error::Config(format!(
                    "{ENV_PREFIX}{}: {what} {value:?}",
                    field.to_uppercase()
                ))
            };
            match field.as_str() {
                "snapshot_dir" => self.snapshot_dir = value.clone().into(),
                "model_path" => self.model_path = value.clone().into(),
                "store_dir" => self.store_dir = value.clone().into(),
                "report_dir" => self.report_dir = value.clone().into(),
                "alpha" => self.alpha = value.parse().map_err(|_| bad("not a number:"))?,
                "t_thr" => self.t_thr = value.parse().map_err(|_| bad("not a number:"))?,
                "quarantine_days" => {
                    self.quarantine_days = value.parse().map_err(|_| bad("not an integer:"))?
                }
                "purge_days" => {
                    self.purge_days = value.parse().map_err(|_| bad("not an integer:"))?
                }
                "seed" => self.seed = value.parse().map_err(|_| bad("not an integer:"))?,
                "http_bind" => self.http_bind = value.clone(),
                "http_port" => self.http_port = value.parse().map_err(|_| bad("not a port:"))?,
                // the config file location itself is read by the CLI
                "config" | "log" => {}
                _ => return Err(bad("unknown setting, value")),
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        // tightness ranges over [-1, 1] because weights sum to one
        if !(-1.0..=1.0).contains(&self.t_thr) {
            return fail(format!("t_thr must lie in [-1, 1], got {}", self.t_thr));
        }
        if !(7..=365).contains(&self.quarantine_days) {
            return fail(format!(
                "quarantine_days must lie in 7..=365, got {}",
                self.quarantine_days
            ));
        }
        if !(1..=3650).contains(&self.purge_days) {
            return fail(format!(
                "purge_days must lie in 1..=3650, got {}",
                self.purge_days
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
snapshot_dir = "/data/snapshots"
model_path = "/data/model.json"
store_dir = "/data/store"
report_dir = "/data/reports"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = PipelineConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.t_thr, 0.3);
        assert_eq!(c.quarantine_days, 14);
        assert_eq!(c.purge_days, 30);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = PipelineConfig::under("/tmp/x");
        c.alpha = 0.01;
        c.t_thr = -0.25;
        c.seed = 99;
        c.http_port = 9000;
        let text = c.to_toml().unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn env_overrides_apply() {
        let c = PipelineConfig::from_toml(MINIMAL).unwrap();
        let vars = vec![
            ("LOV_T_THR".to_string(), "0.5".to_string()),
            ("LOV_seed".to_string(), "3".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let c = c.with_env(vars).unwrap();
        assert_eq!(c.t_thr, 0.5);
        assert_eq!(c.seed, 3);
    }

    #[test]
    fn rejects_out_of_range_and_unknown() {
        let c = PipelineConfig::from_toml(MINIMAL).unwrap();
        for (k, v) in [
            ("LOV_ALPHA", "1.5"),
            ("LOV_ALPHA", "0"),
            ("LOV_T_THR", "2"),
            ("LOV_QUARANTINE_DAYS", "3"),
            ("LOV_PURGE_DAYS", "0"),
            ("LOV_SEED", "-1"),
            ("LOV_COLOUR", "red"),
        ] {
            assert!(
                c.clone()
                    .with_env([(k.to_string(), v.to_string())])
                    .is_err(),
                "{k}={v}"
            );
        }
        assert!(PipelineConfig::from_toml("alpha = 0.1").is_err());
        assert!(PipelineConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }
}
