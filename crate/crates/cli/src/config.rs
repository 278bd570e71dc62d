//! Experiment configuration read from TOML, with the paper presets embedded.

use std::path::Path;

use longevity::hjb::Readout;
use longevity::mortality::{cbd_model, stylized_model, CbdParams, MortalityModel, StylizedParams};
use longevity::{MarketParams, Preferences, SimConfig, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const PRESETS: [(&str, &str); 5] = [
    ("figure1", include_str!("../presets/figure1.toml")),
    ("table2", include_str!("../presets/table2.toml")),
    ("fig2", include_str!("../presets/fig2.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("stylized", include_str!("../presets/stylized.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    Stylized {
        a: f64,
        b: f64,
    },
    Cbd {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preset: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        params: Option<CbdParams>,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<MortalityModel, CliError> {
        let m = match self {
            ModelConfig::Stylized { a, b } => stylized_model(StylizedParams::new(*a, *b)?)?,
            ModelConfig::Cbd { preset: Some(_), params: Some(_) } => {
                return Err(CliError::Config("give either model.preset or model.params, not both".into()))
            }
            ModelConfig::Cbd { params: Some(p), .. } => cbd_model(*p)?,
            ModelConfig::Cbd { preset, .. } => {
                cbd_model(CbdParams::preset(preset.as_deref().unwrap_or(CbdParams::PRESET_2019))?)?
            }
        };
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub lo: f64,
    pub hi: f64,
    pub resolution: usize,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Self { lo: -10.0, hi: 1.0, resolution: 110 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Table2Config {
    /// `(α, ρ)` of each row and column, `δ = 0`.
    pub prefs: Vec<[f64; 2]>,
    pub lambda0: f64,
    pub t0: f64,
    pub readout: Readout,
}

impl Default for Table2Config {
    fn default() -> Self {
        Self {
            prefs: vec![[-10.0, -1.0], [-5.0, -1.0], [-3.0, -1.0], [-2.0, -1.0], [0.15, 1.0 / 3.0], [0.25, 1.0 / 3.0]],
            lambda0: 0.01,
            t0: 0.0,
            readout: Readout::Lattice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub svg: bool,
    /// Keep every n-th stored time in lattice CSVs.
    pub time_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { svg: true, time_stride: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub market: MarketParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finite: Option<Preferences>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infinite: Option<Preferences>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub figure1: Figure1Config,
    #[serde(default)]
    pub table2: Table2Config,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A file path, or the name of an embedded preset.
    pub fn load(spec: &str) -> Result<Self, CliError> {
        let path = Path::new(spec);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            return Self::parse(&text);
        }
        match preset(spec) {
            Some(text) => Self::parse(text),
            None => Err(CliError::Config(format!("no config file or preset named '{spec}'"))),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.model.build()?;
        self.market.validate()?;
        self.solver.validate()?;
        self.sim.validate()?;
        for p in self.finite.iter().chain(&self.infinite) {
            p.validate()?;
        }
        if self.table2.prefs.is_empty() {
            return Err(CliError::Config("table2.prefs is empty".into()));
        }
        for &[a, r] in &self.table2.prefs {
            Preferences::new(a, r, 0.0)?;
        }
        if self.output.time_stride == 0 {
            return Err(CliError::Config("output.time_stride must be positive".into()));
        }
        Ok(())
    }

    pub fn finite_prefs(&self) -> Result<Preferences, CliError> {
        self.finite.ok_or_else(|| CliError::Config("config has no [finite] preferences".into()))
    }

    pub fn infinite_prefs(&self) -> Result<Preferences, CliError> {
        self.infinite.ok_or_else(|| CliError::Config("config has no [infinite] preferences".into()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    /// SHA-256 of the resolved configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_toml())
    }

    /// Hash of the parts that determine the PDE solutions.
    pub fn solve_key(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model: &'a ModelConfig,
            market: &'a MarketParams,
            finite: &'a Option<Preferences>,
            infinite: &'a Option<Preferences>,
            solver: &'a SolverConfig,
        }
        let key = Key {
            model: &self.model,
            market: &self.market,
            finite: &self.finite,
            infinite: &self.infinite,
            solver: &self.solver,
        };
        sha256_hex(&toml::to_string(&key).expect("key is serialisable"))
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for (name, text) in PRESETS {
            let cfg = ExperimentConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            // round trip through the serialiser keeps the hash stable
            let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
            assert_eq!(cfg, again, "{name}");
            assert_eq!(cfg.hash(), again.hash());
        }
    }

    #[test]
    fn figure_presets_match_the_captions() {
        let fig2 = ExperimentConfig::load("fig2").unwrap();
        assert_eq!(fig2.finite_prefs().unwrap(), Preferences::vnm(-3.0).unwrap());
        assert_eq!(fig2.infinite_prefs().unwrap(), Preferences::vnm(-1.0).unwrap());
        let fig3 = ExperimentConfig::load("fig3").unwrap();
        assert_eq!(fig3.finite_prefs().unwrap(), Preferences::vnm(0.15).unwrap());
        let fig1 = ExperimentConfig::load("figure1").unwrap();
        assert_eq!(fig1.model, ModelConfig::Stylized { a: 4.0, b: 1.0 });
        assert_eq!(fig1.market.r, 0.0);
        assert_eq!(fig1.market.mu, 0.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let base = preset("fig2").unwrap();
        assert!(ExperimentConfig::parse(&base.replace("[finite]", "[finit]")).is_err());
        assert!(ExperimentConfig::parse(&base.replace("n_l = 801", "n_l = 3")).is_err());
        assert!(ExperimentConfig::parse("[model]\nkind = \"cbd\"\npreset = \"nope\"\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nkind = \"stylized\"\na = 4.0\nb = -1.0\n").is_err());
        let p = ExperimentConfig::parse(&base.replace("alpha = -3.0", "alpha = 2.0"));
        assert!(matches!(p, Err(CliError::Core(_))));
        assert!(ExperimentConfig::load("/no/such/file.toml").is_err());
    }

    #[test]
    fn solve_key_ignores_simulation_settings() {
        let a = ExperimentConfig::load("fig2").unwrap();
        let mut b = a.clone();
        b.sim.seed += 1;
        assert_eq!(a.solve_key(), b.solve_key());
        assert_ne!(a.hash(), b.hash());
        b.solver.n_l += 2;
        assert_ne!(a.solve_key(), b.solve_key());
    }
}
