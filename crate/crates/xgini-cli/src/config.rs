//! Run configuration: a TOML file with input paths, thresholds and filters.
//! Unknown keys are rejected and the file round-trips losslessly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xgini_core::{Error, FilterConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub trade_file: Option<PathBuf>,
    pub gini_file: Option<PathBuf>,
    /// Optional `product,section_name` lookup for treemap grouping.
    pub sections_file: Option<PathBuf>,
    /// Optional `product,x,y` layout; enables SVG overlays.
    pub coordinates_file: Option<PathBuf>,
    /// Optional region rosters (`GROUP: CODE,...`); defaults are built in.
    pub regions_file: Option<PathBuf>,
    /// Workspace directory; overridden by --workspace and XGINI_WORKSPACE.
    pub output_dir: Option<PathBuf>,
    pub rca_threshold: f64,
    pub edge_threshold: f64,
    /// Trailing window of years averaged into each year slice.
    pub average_years: usize,
    /// Trailing smoothing window for emitted Xgini series; 0 or 1 = off.
    pub smoothing_window: usize,
    pub filters: FilterConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            trade_file: None,
            gini_file: None,
            sections_file: None,
            coordinates_file: None,
            regions_file: None,
            output_dir: None,
            rca_threshold: 1.0,
            edge_threshold: 0.55,
            average_years: 1,
            smoothing_window: 0,
            filters: FilterConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for entry in [
            &mut config.trade_file,
            &mut config.gini_file,
            &mut config.sections_file,
            &mut config.coordinates_file,
            &mut config.regions_file,
            &mut config.output_dir,
        ] {
            if let Some(p) = entry {
                if p.is_relative() {
                    *p = base.join(&p);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.rca_threshold.is_finite() && self.rca_threshold > 0.0) {
            return Err(Error::Config(format!("rca_threshold must be > 0, got {}", self.rca_threshold)));
        }
        if !(0.0..=1.0).contains(&self.edge_threshold) {
            return Err(Error::Config(format!(
                "edge_threshold must be in [0, 1], got {}",
                self.edge_threshold
            )));
        }
        if self.average_years == 0 {
            return Err(Error::Config("average_years must be >= 1".to_string()));
        }
        self.filters.validate()
    }

    pub fn trade_file(&self) -> Result<&Path, Error> {
        self.trade_file
            .as_deref()
            .ok_or_else(|| Error::Config("trade_file is not set in the config".to_string()))
    }

    pub fn gini_file(&self) -> Result<&Path, Error> {
        self.gini_file
            .as_deref()
            .ok_or_else(|| Error::Config("gini_file is not set in the config".to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_is_lossless() {
        let mut config = RunConfig::default();
        config.trade_file = Some(PathBuf::from("/data/trade.csv"));
        config.gini_file = Some(PathBuf::from("/data/gini.csv"));
        config.rca_threshold = 1.25;
        config.filters.min_country_trade = 1e6;
        config.filters.year_range = Some((1990, 2013));
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("nonsense_key = 3\n").unwrap_err();
        assert!(err.to_string().contains("nonsense_key"));
    }

    #[test]
    fn bad_thresholds_fail_validation() {
        let config = RunConfig { edge_threshold: 1.5, ..RunConfig::default() };
        assert!(config.validate().is_err());
        let config = RunConfig { rca_threshold: 0.0, ..RunConfig::default() };
        assert!(config.validate().is_err());
        let config = RunConfig { average_years: 0, ..RunConfig::default() };
        assert!(config.validate().is_err());
    }
}
