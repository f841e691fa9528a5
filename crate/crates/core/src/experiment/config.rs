//! Experiment configuration (TOML).
//!
//! Every key is optional; absent keys take the reference scenario values.
//! Unknown keys are rejected with the dotted path of the offending key.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codebook::{AntennaPair, Ordering};
use crate::error::{Error, Result};
use crate::geometry::{
    dbm_to_watts, AngleMode, ArrayGeometry, ChannelModel, LinkSet, LinkStatistics,
};
use crate::schemes::{SchemeConfig, SchemeKind, SchemeSpec};
use crate::training::PilotConfig;
use crate::weights::OptimizerSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: u64,
    pub master_seed: u64,
    /// Training blocks are noise free.
    pub noiseless_training: bool,
    /// Random scheme designs its precoder on the true channel.
    pub genie_random: bool,
    /// Requested data streams `M_s`.
    pub streams: usize,
    pub output: Option<PathBuf>,
    pub angle_mode: AngleMode,
    pub antenna_pair: AntennaPair,
    pub geometry: ArrayGeometry,
    pub links: LinksConfig,
    pub power: PowerConfig,
    pub optimizer: OptimizerSettings,
    pub schemes: Vec<SchemeEntry>,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            master_seed: 1,
            noiseless_training: false,
            genie_random: false,
            streams: 4,
            output: None,
            angle_mode: AngleMode::Geometric,
            antenna_pair: AntennaPair::default(),
            geometry: ArrayGeometry::default(),
            links: LinksConfig::default(),
            power: PowerConfig::default(),
            optimizer: OptimizerSettings::default(),
            schemes: SchemeKind::ALL
                .iter()
                .map(|&kind| SchemeEntry {
                    kind,
                    q: DEFAULT_Q,
                    ordering: Ordering::Sequential,
                })
                .collect(),
            sweep: SweepConfig::default(),
        }
    }
}

const DEFAULT_Q: usize = 6;

/// One link in dB terms. Absent fields fall back to that link's defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub rician_factor_db: Option<f64>,
    pub path_loss_exponent: Option<f64>,
    pub reference_loss_db: Option<f64>,
    pub reference_distance_m: Option<f64>,
}

impl LinkConfig {
    fn resolve(&self, f_db: f64, alpha: f64) -> LinkStatistics {
        let mut s = LinkStatistics::from_db(
            self.rician_factor_db.unwrap_or(f_db),
            self.path_loss_exponent.unwrap_or(alpha),
            self.reference_loss_db.unwrap_or(-20.0),
        );
        if let Some(d0) = self.reference_distance_m {
            s.reference_distance = d0;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinksConfig {
    pub bs_ris: LinkConfig,
    pub ris_ue: LinkConfig,
    pub bs_ue: LinkConfig,
}

impl LinksConfig {
    pub fn resolve(&self) -> LinkSet {
        LinkSet {
            bs_ris: self.bs_ris.resolve(6.0, 2.4),
            ris_ue: self.ris_ue.resolve(4.0, 2.5),
            bs_ue: self.bs_ue.resolve(3.0, 3.5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub p_d_dbm: f64,
    pub p_u_dbm: f64,
    pub bs_noise_dbm: f64,
    pub ue_noise_dbm: f64,
    /// Pilot length; defaults to the number of UE antennas.
    pub pilot_length: Option<usize>,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            p_d_dbm: 30.0,
            p_u_dbm: 0.0,
            bs_noise_dbm: -120.0,
            ue_noise_dbm: -110.0,
            pilot_length: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeEntry {
    pub kind: SchemeKind,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default)]
    pub ordering: Ordering,
}

fn default_q() -> usize {
    DEFAULT_Q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Q,
    PDDbm,
    N,
    PUDbm,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Q => "q",
            SweepAxis::PDDbm => "p_d_dbm",
            SweepAxis::N => "n",
            SweepAxis::PUDbm => "p_u_dbm",
        }
    }

    fn integral(self) -> bool {
        matches!(self, SweepAxis::Q | SweepAxis::N)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Q,
            values: vec![DEFAULT_Q as f64],
        }
    }
}

/// Everything needed to run the trials of one sweep value, on linear scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub model: ChannelModel,
    pub schemes: Vec<SchemeSpec>,
    pub scheme_config: SchemeConfig,
    pub n: usize,
    pub p_d_dbm: f64,
    pub p_u_dbm: f64,
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("", e.to_string()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn check(ok: bool, path: impl Into<String>, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.trials >= 1, "trials", "must be at least 1")?;
        check(self.streams >= 1, "streams", "must be at least 1")?;
        check(!self.schemes.is_empty(), "schemes", "at least one scheme is required")?;
        check(
            self.optimizer.tolerance >= 0.0 && self.optimizer.max_iterations >= 1,
            "optimizer",
            "tolerance must be >= 0 and max_iterations >= 1",
        )?;
        check(
            self.antenna_pair.tx < self.geometry.bs_antennas
                && self.antenna_pair.rx < self.geometry.ue_antennas,
            "antenna_pair",
            "antenna index out of range",
        )?;
        for (key, v) in [
            ("power.p_d_dbm", self.power.p_d_dbm),
            ("power.p_u_dbm", self.power.p_u_dbm),
            ("power.bs_noise_dbm", self.power.bs_noise_dbm),
            ("power.ue_noise_dbm", self.power.ue_noise_dbm),
        ] {
            check(v.is_finite(), key, "must be finite")?;
        }

        let values = &self.sweep.values;
        check(!values.is_empty(), "sweep.values", "must not be empty")?;
        for (i, &v) in values.iter().enumerate() {
            let key = format!("sweep.values[{i}]");
            check(v.is_finite(), &key, "must be finite")?;
            if self.sweep.axis.integral() {
                check(v >= 1.0 && v.fract() == 0.0, &key, "must be a positive integer")?;
            }
            if self.sweep.axis == SweepAxis::N {
                let nx = self.geometry.ris_nx;
                check(
                    nx > 0 && (v as usize).is_multiple_of(nx),
                    &key,
                    format!("N = {v} is not a whole number of rows of {nx} elements"),
                )?;
            }
        }
        for &v in values {
            self.point(v)?;
        }
        Ok(())
    }

    /// Resolves the configuration at one sweep value.
    pub fn point(&self, value: f64) -> Result<SweepPoint> {
        let mut geometry = self.geometry.clone();
        let mut power = self.power;
        match self.sweep.axis {
            SweepAxis::N => geometry.ris_ny = value as usize / geometry.ris_nx.max(1),
            SweepAxis::PDDbm => power.p_d_dbm = value,
            SweepAxis::PUDbm => power.p_u_dbm = value,
            SweepAxis::Q => {}
        }
        let model = ChannelModel {
            geometry,
            links: self.links.resolve(),
            angle_mode: self.angle_mode,
        };
        model
            .geometry
            .validate()
            .map_err(|e| Error::config("geometry", e.to_string()))?;
        for (key, link) in [
            ("links.bs_ris", &model.links.bs_ris),
            ("links.ris_ue", &model.links.ris_ue),
            ("links.bs_ue", &model.links.bs_ue),
        ] {
            link.validate().map_err(|e| Error::config(key, e.to_string()))?;
        }

        let n = model.geometry.ris_elements();
        let m_r = model.geometry.ue_antennas;
        let tau = power.pilot_length.unwrap_or(m_r);
        check(tau >= m_r, "power.pilot_length", format!("must be at least M_r = {m_r}"))?;

        let schemes = self
            .schemes
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let q = if self.sweep.axis == SweepAxis::Q { value as usize } else { e.q };
                let spec = SchemeSpec {
                    kind: e.kind,
                    q,
                    ordering: e.ordering,
                };
                spec.validate(n)
                    .map_err(|err| Error::config(format!("schemes[{i}]"), err.to_string()))?;
                Ok(spec)
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(SweepPoint {
            value,
            schemes,
            scheme_config: SchemeConfig {
                pilot: PilotConfig {
                    tau,
                    uplink_power: dbm_to_watts(power.p_u_dbm),
                    bs_noise: dbm_to_watts(power.bs_noise_dbm),
                },
                downlink_power: dbm_to_watts(power.p_d_dbm),
                ue_noise: dbm_to_watts(power.ue_noise_dbm),
                streams: self.streams,
                optimizer: self.optimizer,
                antenna_pair: self.antenna_pair,
                noiseless_training: self.noiseless_training,
                genie_random: self.genie_random,
            },
            n,
            p_d_dbm: power.p_d_dbm,
            p_u_dbm: power.p_u_dbm,
            model,
        })
    }
}
