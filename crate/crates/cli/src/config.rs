//! Experiment configuration: strict TOML (unknown keys rejected), one
//! block per experiment kind, master seed mandatory.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use homog_core::env::{EnvMode, EnvironmentSpec, ReactionForm, ReactionSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ValidateEnv,
    SpeedTable,
    WulffShape,
    SubaddSynthetic,
    Sandwich,
    GeqLimit,
    FullPipeline,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::ValidateEnv => "validate_env",
            ExperimentKind::SpeedTable => "speed_table",
            ExperimentKind::WulffShape => "wulff_shape",
            ExperimentKind::SubaddSynthetic => "subadd_synthetic",
            ExperimentKind::Sandwich => "sandwich",
            ExperimentKind::GeqLimit => "geq_limit",
            ExperimentKind::FullPipeline => "full_pipeline",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvBlock {
    pub dimension: usize,
    pub mode: EnvMode,
    #[serde(default = "one")]
    pub t_cell: f64,
    #[serde(default = "one")]
    pub l_cell: f64,
    #[serde(default = "quarter")]
    pub r_mol: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub lambda_max: f64,
    #[serde(default)]
    pub b_max: f64,
    #[serde(default)]
    pub g_min: f64,
    #[serde(default)]
    pub g_max: f64,
    #[serde(default)]
    pub c_min: f64,
    #[serde(default)]
    pub c_max: f64,
    #[serde(default)]
    pub psi_max: f64,
    #[serde(default)]
    pub mean_flow: [f64; 2],
}

fn one() -> f64 {
    1.0
}

fn quarter() -> f64 {
    0.25
}

impl EnvBlock {
    pub fn to_spec(&self) -> EnvironmentSpec {
        EnvironmentSpec {
            dimension: self.dimension,
            mode: self.mode,
            t_cell: self.t_cell,
            l_cell: self.l_cell,
            r_mol: self.r_mol,
            lambda: self.lambda,
            lambda_max: self.lambda_max,
            b_max: self.b_max,
            g_min: self.g_min,
            g_max: self.g_max,
            c_min: self.c_min,
            c_max: self.c_max,
            psi_max: self.psi_max,
            mean_flow: self.mean_flow,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionBlock {
    pub form: ReactionForm,
}

impl ReactionBlock {
    pub fn to_spec(&self) -> ReactionSpec {
        ReactionSpec { form: self.form }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedTableBlock {
    pub directions: usize,
    pub radius: u32,
    pub samples: u32,
    pub h: f64,
    /// 0 skips calibration and uses the a-priori constant.
    #[serde(default)]
    pub calibration_seeds: u32,
    #[serde(default = "default_t_cal")]
    pub calibration_horizon: f64,
}

fn default_t_cal() -> f64 {
    8.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubaddBlock {
    pub n_grid: Vec<u32>,
    pub samples_per_n: u32,
    #[serde(default = "one")]
    pub increment_lo: f64,
    #[serde(default = "two")]
    pub increment_hi: f64,
    #[serde(default = "default_validation_samples")]
    pub validation_samples: u32,
}

fn two() -> f64 {
    2.0
}

fn default_validation_samples() -> u32 {
    200
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichBlock {
    pub epsilons: Vec<f64>,
    pub times: Vec<f64>,
    pub seeds: u32,
    pub delta: f64,
    pub theta: f64,
    pub theta_prime: f64,
    pub rho_coeff: f64,
    pub shift_lambda: f64,
    pub h: f64,
    /// G is a ball of this radius at the origin.
    #[serde(default = "one")]
    pub g_radius: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeqLimitBlock {
    pub epsilon: f64,
    pub seeds: u32,
    pub h: f64,
    /// Radius of the smooth initial bump.
    #[serde(default = "two")]
    pub bump_radius: f64,
    #[serde(default = "default_probe_tol")]
    pub probe_tolerance: f64,
    #[serde(default = "default_rho")]
    pub rho_coeff: f64,
    #[serde(default = "one")]
    pub shift_lambda: f64,
}

fn default_probe_tol() -> f64 {
    0.1
}

fn default_rho() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub master_seed: u64,
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_out")]
    pub out_dir: String,
    pub env: EnvBlock,
    #[serde(default)]
    pub reaction: Option<ReactionBlock>,
    #[serde(default)]
    pub speed_table: Option<SpeedTableBlock>,
    #[serde(default)]
    pub subadd: Option<SubaddBlock>,
    #[serde(default)]
    pub sandwich: Option<SandwichBlock>,
    #[serde(default)]
    pub geq_limit: Option<GeqLimitBlock>,
}

fn default_out() -> String {
    "out".into()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("config parse failed")?;
        cfg.check_blocks()?;
        Ok(cfg)
    }

    /// Presence checks for the blocks the chosen kind needs; value-level
    /// validation happens in the run (parse and validate are separate).
    fn check_blocks(&self) -> Result<()> {
        let need_reaction = self.env.mode == EnvMode::Kpp
            && !matches!(self.kind, ExperimentKind::SubaddSynthetic);
        if need_reaction && self.reaction.is_none() {
            bail!("kind {} with a kpp environment needs a [reaction] block", self.kind.as_str());
        }
        match self.kind {
            ExperimentKind::SpeedTable | ExperimentKind::WulffShape => {
                if self.speed_table.is_none() {
                    bail!("kind {} needs a [speed_table] block", self.kind.as_str());
                }
            }
            ExperimentKind::SubaddSynthetic => {
                if self.subadd.is_none() {
                    bail!("kind subadd_synthetic needs a [subadd] block");
                }
            }
            ExperimentKind::Sandwich => {
                if self.speed_table.is_none() || self.sandwich.is_none() {
                    bail!("kind sandwich needs [speed_table] and [sandwich] blocks");
                }
            }
            ExperimentKind::GeqLimit => {
                if self.speed_table.is_none() || self.geq_limit.is_none() {
                    bail!("kind geq_limit needs [speed_table] and [geq_limit] blocks");
                }
            }
            ExperimentKind::FullPipeline => {
                if self.speed_table.is_none() {
                    bail!("kind full_pipeline needs a [speed_table] block");
                }
                match self.env.mode {
                    EnvMode::Kpp if self.sandwich.is_none() => {
                        bail!("full_pipeline (kpp) needs a [sandwich] block")
                    }
                    EnvMode::Geq if self.geq_limit.is_none() => {
                        bail!("full_pipeline (geq) needs a [geq_limit] block")
                    }
                    _ => {}
                }
            }
            ExperimentKind::ValidateEnv => {}
        }
        Ok(())
    }

    /// Canonical hash of the configuration (stable across runs).
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in canon.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Default configuration text for a kind, round-trippable through the
/// strict parser.
pub fn emit_defaults(kind: ExperimentKind) -> String {
    let common_kpp = r#"[env]
dimension = 2
mode = "kpp"
t_cell = 1.0
l_cell = 1.0
r_mol = 0.25
lambda = 1.0
lambda_max = 1.0
b_max = 0.0
g_min = 1.0
g_max = 1.0

[reaction]
form = "logistic"
"#;
    let table = r#"
[speed_table]
directions = 16
radius = 16
samples = 2
h = 0.15
calibration_seeds = 0
calibration_horizon = 8.0
"#;
    match kind {
        ExperimentKind::ValidateEnv => format!(
            "kind = \"validate_env\"\nmaster_seed = 1\nworkers = 1\nout_dir = \"out\"\n\n{common_kpp}"
        ),
        ExperimentKind::SpeedTable => format!(
            "kind = \"speed_table\"\nmaster_seed = 1\nworkers = 1\nout_dir = \"out\"\n\n{common_kpp}{table}"
        ),
        ExperimentKind::WulffShape => format!(
            "kind = \"wulff_shape\"\nmaster_seed = 1\nworkers = 1\nout_dir = \"out\"\n\n{common_kpp}{table}"
        ),
        ExperimentKind::SubaddSynthetic => format!(
            "kind = \"subadd_synthetic\"\nmaster_seed = 1\nworkers = 1\nout_dir = \"out\"\n\n{common_kpp}
[subadd]
n_grid = [8, 32, 128]
samples_per_n = 200
increment_lo = 1.0
increment_hi = 2.0
validation_samples = 200
"
        ),
        ExperimentKind::Sandwich | ExperimentKind::FullPipeline => format!(
            "kind = \"{}\"\nmaster_seed = 1\nworkers = 1\nout_dir = \"out\"\n\n{common_kpp}{table}
[sandwich]
epsilons = [0.25, 0.125]
times = [0.5, 1.0]
seeds = 4
delta = 0.25
theta = 0.9
theta_prime = 0.5
rho_coeff = 0.05
shift_lambda = 1.0
h = 0.3
g_radius = 1.0
",
            kind.as_str()
        ),
        ExperimentKind::GeqLimit => r#"kind = "geq_limit"
master_seed = 1
workers = 1
out_dir = "out"

[env]
dimension = 2
mode = "geq"
t_cell = 1.0
l_cell = 1.0
r_mol = 0.25
c_min = 0.8
c_max = 1.2
psi_max = 0.15
mean_flow = [0.0, 0.0]

[speed_table]
directions = 16
radius = 16
samples = 2
h = 0.1
calibration_seeds = 0
calibration_horizon = 8.0

[geq_limit]
epsilon = 0.0625
seeds = 4
h = 0.1
bump_radius = 2.0
probe_tolerance = 0.1
rho_coeff = 0.05
shift_lambda = 1.0
"#
        .to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_for_every_kind() {
        for kind in [
            ExperimentKind::ValidateEnv,
            ExperimentKind::SpeedTable,
            ExperimentKind::WulffShape,
            ExperimentKind::SubaddSynthetic,
            ExperimentKind::Sandwich,
            ExperimentKind::GeqLimit,
            ExperimentKind::FullPipeline,
        ] {
            let text = emit_defaults(kind);
            let cfg = ExperimentConfig::parse(&text).unwrap_or_else(|e| {
                panic!("defaults for {} failed to parse: {e}", kind.as_str())
            });
            assert_eq!(cfg.kind, kind);
            // Re-serialized config hashes equal across parses.
            let again = ExperimentConfig::parse(&text).unwrap();
            assert_eq!(cfg.hash(), again.hash());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = emit_defaults(ExperimentKind::ValidateEnv);
        text.push_str("\nsurprise = 1\n");
        assert!(ExperimentConfig::parse(&text).is_err());
        let bad_nested = emit_defaults(ExperimentKind::ValidateEnv)
            .replace("[env]", "[env]\ntypo_tolerance = 0.1");
        assert!(ExperimentConfig::parse(&bad_nested).is_err());
    }

    #[test]
    fn parse_succeeds_with_invalid_physics() {
        // Parse and validate are separate stages: a drift violating the
        // spreading condition parses fine and fails only in validation.
        let text = emit_defaults(ExperimentKind::ValidateEnv).replace("b_max = 0.0", "b_max = 2.0");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert!(cfg.env.to_spec().validate().is_err());
    }

    #[test]
    fn missing_block_is_an_error() {
        let text = emit_defaults(ExperimentKind::SpeedTable).replace("[speed_table]", "[subadd]");
        assert!(ExperimentConfig::parse(&text).is_err());
    }
}
