//! Run configuration: a single JSON document with a versioned schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rbt_core::experiment::{default_reference_lengths, ProtocolSettings};
use rbt_core::fit::BootstrapSettings;
use rbt_core::noise::{
    NoiseModel, SpamModel, DEFAULT_ASSIGNMENT_FIDELITY, DEFAULT_GATE_DURATION, DEFAULT_T1, DEFAULT_T2,
};
use rbt_core::pauli::{SuperOp, UnitaryOp};
use rbt_core::pulse::{
    DuffingModel, RotationSpec, DEFAULT_ANHARMONICITY, DEFAULT_DRAG_COEFFICIENT, DUFFING_LEVELS,
    SWEEP_SAMPLES,
};
use rbt_core::reconstruct::w_gate;
use rbt_core::sequence::{default_repeats, Length, MAX_EXHAUSTIVE_LENGTH};
use rbt_core::simulate::{SampleConfig, SamplingMode, DEFAULT_BIN_SIZE, DEFAULT_SHOTS};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// A rejected configuration, located by JSON pointer.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("config error at {pointer}: {message}")]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl ConfigError {
    fn at(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Seeds shot sampling and every bootstrap.
    pub seed: u64,
    /// Output directory; `--out` takes precedence. Not part of the hash.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub target: TargetSpec,
    pub noise: NoiseConfig,
    pub spam: SpamConfig,
    pub protocol: ProtocolConfig,
    pub qpt: QptConfig,
    pub witness: WitnessConfig,
    pub pulse: PulseConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            output_dir: None,
            target: TargetSpec::Named(GateName::Hadamard),
            noise: NoiseConfig::default(),
            spam: SpamConfig::default(),
            protocol: ProtocolConfig::default(),
            qpt: QptConfig::default(),
            witness: WitnessConfig::default(),
            pulse: PulseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub enum GateName {
    #[serde(rename = "identity", alias = "I")]
    Identity,
    #[serde(rename = "hadamard", alias = "H")]
    Hadamard,
    #[serde(rename = "w", alias = "W")]
    W,
}

/// A named gate or a rotation by `angle` radians about `axis`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum TargetSpec {
    Named(GateName),
    Rotation { axis: [f64; 3], angle: f64 },
}

impl TargetSpec {
    pub fn label(&self) -> String {
        match self {
            TargetSpec::Named(GateName::Identity) => "identity".into(),
            TargetSpec::Named(GateName::Hadamard) => "hadamard".into(),
            TargetSpec::Named(GateName::W) => "w".into(),
            TargetSpec::Rotation { axis, angle } => {
                format!("rotation({},{},{};{})", axis[0], axis[1], axis[2], angle)
            }
        }
    }

    pub fn unitary(&self) -> Result<UnitaryOp, ConfigError> {
        match self {
            TargetSpec::Named(GateName::Identity) => Ok(UnitaryOp::identity()),
            TargetSpec::Named(GateName::Hadamard) => Ok(UnitaryOp::hadamard()),
            TargetSpec::Named(GateName::W) => Ok(w_gate()),
            TargetSpec::Rotation { axis, angle } => {
                UnitaryOp::rotation(*axis, *angle).map_err(|e| ConfigError::at("/target/axis", e.to_string()))
            }
        }
    }

    pub fn is_w(&self) -> bool {
        matches!(self, TargetSpec::Named(GateName::W))
    }

    /// Rotation for pulse synthesis.
    pub fn rotation(&self) -> Result<RotationSpec, ConfigError> {
        let n = 1.0 / 3f64.sqrt();
        let (axis, angle) = match self {
            TargetSpec::Named(GateName::Identity) => ([0.0, 0.0, 1.0], 0.0),
            TargetSpec::Named(GateName::Hadamard) => return Ok(RotationSpec::hadamard()),
            TargetSpec::Named(GateName::W) => ([n, n, n], std::f64::consts::PI / 6.0),
            TargetSpec::Rotation { axis, angle } => (*axis, *angle),
        };
        RotationSpec::new(axis, angle).map_err(|e| ConfigError::at("/target", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Perfect gates; overrides everything else in this section.
    pub ideal: bool,
    /// Seconds.
    pub t1: f64,
    pub t2: f64,
    pub gate_time: f64,
    /// Depolarizing parameter replacing the coherence-limited channel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depolarizing: Option<f64>,
    pub frame_updates_noiseless: bool,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            ideal: false,
            t1: DEFAULT_T1,
            t2: DEFAULT_T2,
            gate_time: DEFAULT_GATE_DURATION,
            depolarizing: None,
            frame_updates_noiseless: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct SpamConfig {
    pub assignment_fidelity: f64,
}

impl Default for SpamConfig {
    fn default() -> Self {
        Self {
            assignment_fidelity: DEFAULT_ASSIGNMENT_FIDELITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Shots,
    Expected,
}

/// Schema stand-in for a sequence length: a positive integer or `"inf"`.
#[derive(JsonSchema)]
#[serde(untagged)]
#[allow(dead_code)]
enum LengthSchema {
    Finite(u32),
    Infinite(InfTag),
}

#[derive(JsonSchema)]
#[allow(dead_code)]
enum InfTag {
    #[serde(rename = "inf")]
    Inf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub shots: usize,
    pub bin_size: usize,
    pub sampling: Sampling,
    #[schemars(with = "Vec<LengthSchema>")]
    pub lengths: Vec<Length>,
    /// Copies per length, keyed by length (`"inf"` for the surrogate).
    pub repeats: BTreeMap<String, u32>,
    #[schemars(with = "Vec<LengthSchema>")]
    pub reference_lengths: Vec<Length>,
    pub reference_per_length: usize,
    pub sequence_seed: u64,
    pub replications: usize,
    /// Also run the null operation, for left/right corrected estimates.
    pub null_correction: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let p = ProtocolSettings::default();
        Self {
            shots: DEFAULT_SHOTS,
            bin_size: DEFAULT_BIN_SIZE,
            sampling: Sampling::Shots,
            lengths: p.lengths,
            repeats: default_repeats().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            reference_lengths: default_reference_lengths(),
            reference_per_length: p.reference_per_length,
            sequence_seed: p.sequence_seed,
            replications: p.bootstrap.replications,
            null_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct QptConfig {
    pub enabled: bool,
    /// Readout assignment fidelity divided out of the data; `null` uses
    /// the simulated value.
    pub assumed_assignment_fidelity: Option<f64>,
}

impl Default for QptConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            assumed_assignment_fidelity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessConfig {
    pub replications: usize,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self { replications: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    /// Samples per gate; dt is the gate time over this.
    pub samples: Vec<usize>,
    /// rad/s.
    pub anharmonicity: f64,
    pub drag_coefficient: f64,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            samples: SWEEP_SAMPLES.to_vec(),
            anharmonicity: DEFAULT_ANHARMONICITY,
            drag_coefficient: DEFAULT_DRAG_COEFFICIENT,
        }
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = to_pointer(&e.path().to_string());
        ConfigError::at(pointer, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::at("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn to_pointer(path: &str) -> String {
    if path == "." || path.is_empty() {
        return String::new();
    }
    let mut out = String::new();
    for part in path.split('.') {
        let mut rest = part;
        while let Some(i) = rest.find('[') {
            push_token(&mut out, &rest[..i]);
            let j = rest[i..].find(']').map_or(rest.len(), |j| i + j);
            push_token(&mut out, &rest[i + 1..j]);
            rest = rest.get(j + 1..).unwrap_or("");
        }
        push_token(&mut out, rest);
    }
    out
}

fn push_token(out: &mut String, token: &str) {
    if !token.is_empty() {
        out.push('/');
        out.push_str(&token.replace('~', "~0").replace('/', "~1"));
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::at(
                "/schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        self.target.unitary()?;
        self.noise_model()?;
        self.spam_model()?;
        let p = &self.protocol;
        self.sample_config()
            .validate()
            .map_err(|e| ConfigError::at("/protocol/shots", e.to_string()))?;
        let bins = p.shots / p.bin_size;
        if bins < 2 || bins % 2 != 0 {
            return Err(ConfigError::at(
                "/protocol/shots",
                format!("{bins} bins per configuration; split-half analysis needs an even count of at least 2"),
            ));
        }
        check_lengths("/protocol/lengths", &p.lengths, Some(MAX_EXHAUSTIVE_LENGTH))?;
        check_lengths("/protocol/reference_lengths", &p.reference_lengths, None)?;
        if p.reference_lengths.iter().filter(|l| l.finite().is_some()).count() < 3 {
            return Err(ConfigError::at(
                "/protocol/reference_lengths",
                "at least three finite lengths are needed",
            ));
        }
        for key in p.repeats.keys() {
            key.parse::<Length>()
                .map_err(|e| ConfigError::at(format!("/protocol/repeats/{key}"), e))?;
        }
        if p.reference_per_length == 0 {
            return Err(ConfigError::at("/protocol/reference_per_length", "must be positive"));
        }
        if p.replications < 2 {
            return Err(ConfigError::at("/protocol/replications", "at least 2 replications are needed"));
        }
        if self.witness.replications < 2 {
            return Err(ConfigError::at("/witness/replications", "at least 2 replications are needed"));
        }
        if let Some(f) = self.qpt.assumed_assignment_fidelity {
            if !(f > 0.5 && f <= 1.0) {
                return Err(ConfigError::at(
                    "/qpt/assumed_assignment_fidelity",
                    format!("{f} is outside (0.5, 1]"),
                ));
            }
        }
        if self.pulse.samples.is_empty() {
            return Err(ConfigError::at("/pulse/samples", "empty"));
        }
        if let Some(i) = self.pulse.samples.iter().position(|&n| n == 0) {
            return Err(ConfigError::at(format!("/pulse/samples/{i}"), "must be positive"));
        }
        if !(self.pulse.anharmonicity.is_finite() && self.pulse.anharmonicity != 0.0) {
            return Err(ConfigError::at("/pulse/anharmonicity", "must be finite and nonzero"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization, excluding the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }

    pub fn noise_model(&self) -> Result<NoiseModel, ConfigError> {
        let n = &self.noise;
        let model = if n.ideal {
            Ok(NoiseModel::noiseless())
        } else if let Some(l) = n.depolarizing {
            NoiseModel::depolarizing(l).map_err(|e| ConfigError::at("/noise/depolarizing", e.to_string()))
        } else {
            if !(n.t1 > 0.0 && n.t1.is_finite()) {
                return Err(ConfigError::at("/noise/t1", "must be positive"));
            }
            if !(n.t2 > 0.0 && n.t2.is_finite()) {
                return Err(ConfigError::at("/noise/t2", "must be positive"));
            }
            if !(n.gate_time >= 0.0 && n.gate_time.is_finite()) {
                return Err(ConfigError::at("/noise/gate_time", "must be non-negative"));
            }
            NoiseModel::coherence_limited(n.gate_time, n.t1, n.t2)
                .map_err(|e| ConfigError::at("/noise/t2", e.to_string()))
        }?;
        Ok(model.with_frame_updates_noiseless(n.frame_updates_noiseless))
    }

    pub fn spam_model(&self) -> Result<SpamModel, ConfigError> {
        SpamModel::with_assignment_fidelity(self.spam.assignment_fidelity)
            .map_err(|e| ConfigError::at("/spam/assignment_fidelity", e.to_string()))
    }

    pub fn sample_config(&self) -> SampleConfig {
        SampleConfig {
            shots: self.protocol.shots,
            bin_size: self.protocol.bin_size,
            seed: self.seed,
            mode: match self.protocol.sampling {
                Sampling::Shots => SamplingMode::Shots,
                Sampling::Expected => SamplingMode::Expected,
            },
        }
    }

    pub fn bootstrap(&self) -> BootstrapSettings {
        BootstrapSettings {
            replications: self.protocol.replications,
            seed: self.seed,
        }
    }

    /// Protocol settings for the core experiment layer. Call after
    /// [`RunConfig::validate`].
    pub fn protocol_settings(&self) -> ProtocolSettings {
        let p = &self.protocol;
        ProtocolSettings {
            lengths: p.lengths.clone(),
            repeats: p
                .repeats
                .iter()
                .filter_map(|(k, v)| k.parse().ok().map(|l| (l, *v)))
                .collect(),
            reference_lengths: p.reference_lengths.clone(),
            reference_per_length: p.reference_per_length,
            sequence_seed: p.sequence_seed,
            sample: self.sample_config(),
            bootstrap: self.bootstrap(),
        }
    }

    pub fn target_superop(&self) -> Result<SuperOp, ConfigError> {
        Ok(SuperOp::from_unitary(&self.target.unitary()?))
    }

    pub fn duffing(&self) -> DuffingModel {
        DuffingModel {
            levels: DUFFING_LEVELS,
            anharmonicity: self.pulse.anharmonicity,
            drive_detuning: 0.0,
            drag_coefficient: self.pulse.drag_coefficient,
        }
    }
}

fn check_lengths(pointer: &str, lengths: &[Length], max: Option<usize>) -> Result<(), ConfigError> {
    if lengths.is_empty() {
        return Err(ConfigError::at(pointer, "empty"));
    }
    for (i, l) in lengths.iter().enumerate() {
        match l.finite() {
            Some(0) => return Err(ConfigError::at(format!("{pointer}/{i}"), "lengths start at 1")),
            Some(n) if max.is_some_and(|m| n > m) => {
                return Err(ConfigError::at(
                    format!("{pointer}/{i}"),
                    format!("exhaustive generation stops at length {}", max.unwrap_or(0)),
                ))
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// The published JSON schema of [`RunConfig`].
pub fn config_schema() -> String {
    let schema = schemars::schema_for!(RunConfig);
    serde_json::to_string_pretty(&schema).expect("schema serializes") + "\n"
}
