//! Run configuration: a single TOML file with flat sections; CLI flags
//! override file entries, which override built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::IngestConfig;
use crate::error::{Error, Result};
use crate::model::Variant;
use crate::sampler::SamplerConfig;

fn default_delimiter() -> String {
    ",".into()
}
fn default_year_min() -> i32 {
    1990
}
fn default_year_max() -> i32 {
    2005
}
fn default_min_ab() -> u32 {
    1
}
fn default_age_min() -> i32 {
    20
}
fn default_age_max() -> i32 {
    49
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_year_min")]
    pub year_min: i32,
    #[serde(default = "default_year_max")]
    pub year_max: i32,
    #[serde(default = "default_min_ab")]
    pub min_ab: u32,
    #[serde(default = "default_age_min")]
    pub age_min: i32,
    #[serde(default = "default_age_max")]
    pub age_max: i32,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            train: None,
            holdout: None,
            delimiter: default_delimiter(),
            year_min: default_year_min(),
            year_max: default_year_max(),
            min_ab: default_min_ab(),
            age_min: default_age_min(),
            age_max: default_age_max(),
        }
    }
}

fn default_tau2() -> f64 {
    10_000.0
}
fn default_omega() -> f64 {
    1.0
}
fn default_variant() -> String {
    "full".into()
}
fn default_intercept_age() -> f64 {
    23.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default = "default_tau2")]
    pub tau2: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Interior knots of the age basis; empty gives the minimal
    /// four-coefficient cubic basis.
    pub interior_knots: Vec<f64>,
    /// Basis range override; defaults to the observed age range.
    pub age_lo: Option<f64>,
    pub age_hi: Option<f64>,
    /// Age at which trajectories are pinned to zero; defaults to the
    /// median observed age.
    pub reference_age: Option<f64>,
    /// Age for the intercept summary export.
    #[serde(default = "default_intercept_age")]
    pub intercept_reference_age: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            variant: default_variant(),
            tau2: default_tau2(),
            omega: default_omega(),
            interior_knots: Vec::new(),
            age_lo: None,
            age_hi: None,
            reference_age: None,
            intercept_reference_age: default_intercept_age(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSection {
    pub chains: usize,
    pub iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub accept_lo: f64,
    pub accept_hi: f64,
    pub adapt_factor: f64,
    pub initial_scale: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let c = SamplerConfig::default();
        SamplerSection {
            chains: c.n_chains,
            iters: c.n_iter,
            burn_in: c.burn_in,
            thin: c.thin,
            seed: c.seed,
            adapt_window: c.adapt_window,
            accept_lo: c.target_accept.0,
            accept_hi: c.target_accept.1,
            adapt_factor: c.adapt_factor,
            initial_scale: c.initial_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalKind {
    /// External columns are per-at-bat rates; scale by true at-bats.
    Rate,
    /// External columns are already home-run totals.
    Total,
}

fn default_young_cutoff() -> i32 {
    26
}
fn default_elite_min_ab() -> u32 {
    300
}
fn default_elite_rate_denominator() -> u32 {
    40
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Directory holding chain files; defaults to the output directory.
    pub chains_dir: Option<PathBuf>,
    /// External prediction columns expected in the hold-out file.
    pub external: Vec<String>,
    pub external_kind: ExternalKind,
    #[serde(default = "default_true")]
    pub strawman: bool,
    #[serde(default = "default_young_cutoff")]
    pub young_cutoff: i32,
    #[serde(default = "default_elite_min_ab")]
    pub elite_min_ab: u32,
    #[serde(default = "default_elite_rate_denominator")]
    pub elite_rate_denominator: u32,
}

impl Default for PredictSection {
    fn default() -> Self {
        PredictSection {
            chains_dir: None,
            external: Vec::new(),
            external_kind: ExternalKind::Total,
            strawman: true,
            young_cutoff: default_young_cutoff(),
            elite_min_ab: default_elite_min_ab(),
            elite_rate_denominator: default_elite_rate_denominator(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionTable {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    /// Prediction tables (cmd_predict outputs) forming the internal
    /// comparison rows; defaults to the output directory's table.
    pub predictions: Vec<PredictionTable>,
}

fn default_n_curves() -> usize {
    100
}
fn default_grid_step() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_n_curves")]
    pub n_curves: usize,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Positions to export curves for; empty means all.
    pub curve_positions: Vec<String>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            n_curves: default_n_curves(),
            grid_step: default_grid_step(),
            curve_positions: Vec::new(),
        }
    }
}

fn default_sim_players() -> usize {
    500
}
fn default_sim_seasons() -> usize {
    10
}
fn default_sim_parks() -> usize {
    24
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub players: usize,
    pub seasons: usize,
    pub parks: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            players: default_sim_players(),
            seasons: default_sim_seasons(),
            parks: default_sim_parks(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub sampler: SamplerSection,
    pub predict: PredictSection,
    pub validate: ValidateSection,
    pub report: ReportSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

/// Flag-level overrides; every field beats the config file when set.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub iters: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub variant: Option<String>,
    pub out: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let mut cfg = match path {
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str::<RunConfig>(&raw)
                    .map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = overrides.seed {
            cfg.sampler.seed = v;
        }
        if let Some(v) = overrides.chains {
            cfg.sampler.chains = v;
        }
        if let Some(v) = overrides.iters {
            cfg.sampler.iters = v;
        }
        if let Some(v) = overrides.burn_in {
            cfg.sampler.burn_in = v;
        }
        if let Some(v) = overrides.thin {
            cfg.sampler.thin = v;
        }
        if let Some(v) = &overrides.variant {
            cfg.model.variant = v.clone();
        }
        if let Some(v) = &overrides.out {
            cfg.output.dir = v.clone();
        }
        if let Some(v) = &overrides.train {
            cfg.data.train = Some(v.clone());
        }
        if let Some(v) = &overrides.holdout {
            cfg.data.holdout = Some(v.clone());
        }
        cfg.variant()?;
        Ok(cfg)
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.model.variant)
    }

    pub fn delimiter(&self) -> Result<u8> {
        let bytes = self.data.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(Error::Usage(format!(
                "delimiter must be a single byte, got `{}`",
                self.data.delimiter
            )));
        }
        Ok(bytes[0])
    }

    pub fn ingest_config(&self) -> Result<IngestConfig> {
        Ok(IngestConfig {
            delimiter: self.delimiter()?,
            year_min: self.data.year_min,
            year_max: self.data.year_max,
            min_ab: self.data.min_ab,
            age_min: self.data.age_min,
            age_max: self.data.age_max,
        })
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            n_chains: self.sampler.chains,
            n_iter: self.sampler.iters,
            burn_in: self.sampler.burn_in,
            thin: self.sampler.thin,
            seed: self.sampler.seed,
            adapt_window: self.sampler.adapt_window,
            target_accept: (self.sampler.accept_lo, self.sampler.accept_hi),
            adapt_factor: self.sampler.adapt_factor,
            initial_scale: self.sampler.initial_scale,
        }
    }

    pub fn chains_dir(&self) -> PathBuf {
        self.predict
            .chains_dir
            .clone()
            .unwrap_or_else(|| self.output.dir.clone())
    }

    /// Short hex fingerprint of the resolved configuration.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let encoded = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(encoded.as_bytes());
        hex_prefix(&digest, 12)
    }
}

pub fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes
        .iter()
        .flat_map(|b| [b >> 4, b & 0xf])
        .take(n)
        .map(|d| char::from_digit(u32::from(d), 16).unwrap())
        .collect()
}

/// Full hex SHA-256 of a file's bytes.
pub fn file_fingerprint(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_prefix(&Sha256::digest(&bytes), 64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    #[test]
    fn defaults_match_protocol() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.sampler.iters, 9000);
        assert_eq!(cfg.sampler.burn_in, 1000);
        assert_eq!(cfg.sampler.thin, 8);
        assert_eq!(cfg.sampler.chains, 3);
        assert_eq!(cfg.model.tau2, 10_000.0);
        assert_eq!(cfg.model.omega, 1.0);
        assert_eq!(cfg.predict.young_cutoff, 26);
        assert_eq!(cfg.predict.elite_min_ab, 300);
        assert_eq!(cfg.variant().unwrap(), Variant::Full);
    }

    #[test]
    fn flags_override_file() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "[sampler]\nseed = 5\niters = 100\n[model]\nvariant = \"pshmm\"\n"
        )
        .unwrap();
        let ov = Overrides {
            seed: Some(9),
            variant: Some("full".into()),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(f.path()), &ov).unwrap();
        assert_eq!(cfg.sampler.seed, 9);
        assert_eq!(cfg.sampler.iters, 100);
        assert_eq!(cfg.variant().unwrap(), Variant::Full);
    }

    #[test]
    fn bad_variant_is_usage_error() {
        let ov = Overrides {
            variant: Some("bogus".into()),
            ..Overrides::default()
        };
        let err = RunConfig::load(None, &ov).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[sampler]\nnot_a_key = 1\n").unwrap();
        let err = RunConfig::load(Some(f.path()), &Overrides::default()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.sampler.seed = 77;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
