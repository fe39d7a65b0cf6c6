use std::path::Path;

use ccts_core::{ModelParams, PolicyKind, RunConfig, SelectionPolicy, TeacherParams};
use ccts_llm::{ExecutionLimits, LlmConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Flat hyperparameter file; every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperParams {
    pub p_exploit: f64,
    pub k: usize,
    #[serde(rename = "T")]
    pub iterations: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub rho_elite: f64,
    pub lambda0: f64,
    pub alpha: f64,
    pub d_max: usize,
    pub n_max: usize,
    pub mu0: f64,
    pub sigma0: f64,
    pub p_keep: f64,
    pub nu: f64,
    pub p_local: f64,
    pub walk_len: usize,
    pub r_retain: f64,
    pub sigma_y: f64,
    pub llm: LlmSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSection {
    #[serde(flatten)]
    pub client: LlmConfig,
    #[serde(flatten)]
    pub limits: ExecutionLimits,
}

impl Default for LlmSection {
    fn default() -> Self {
        Self { client: LlmConfig::default(), limits: ExecutionLimits::default() }
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        let model = ModelParams::default();
        let policy = SelectionPolicy::new(PolicyKind::Ccts);
        let teacher = TeacherParams::default();
        Self {
            p_exploit: policy.p_exploit,
            k: policy.k,
            iterations: 25,
            lambda: model.lambda_mix,
            gamma: model.gamma,
            alpha0: model.alpha0,
            beta0: model.beta0,
            rho_elite: model.rho_elite,
            lambda0: teacher.lambda0,
            alpha: teacher.alpha,
            d_max: teacher.d_max,
            n_max: teacher.n_max,
            mu0: teacher.mu0,
            sigma0: teacher.sigma0,
            p_keep: teacher.p_keep,
            nu: teacher.nu,
            p_local: teacher.p_local,
            walk_len: teacher.walk_len,
            r_retain: teacher.r_retain,
            sigma_y: teacher.sigma_y,
            llm: LlmSection::default(),
        }
    }
}

impl HyperParams {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    pub fn model(&self) -> ModelParams {
        ModelParams {
            alpha0: self.alpha0,
            beta0: self.beta0,
            gamma: self.gamma,
            lambda_mix: self.lambda,
            rho_elite: self.rho_elite,
        }
    }

    pub fn run_config(&self, kind: PolicyKind, seed: u64) -> RunConfig {
        let mut config = RunConfig::new(kind, seed);
        config.policy.p_exploit = self.p_exploit;
        config.policy.k = self.k;
        config.iterations = self.iterations;
        config.model = self.model();
        config
    }

    pub fn teacher(&self) -> TeacherParams {
        TeacherParams {
            lambda0: self.lambda0,
            alpha: self.alpha,
            d_max: self.d_max,
            n_max: self.n_max,
            mu0: self.mu0,
            sigma0: self.sigma0,
            sigma_y: self.sigma_y,
            p_keep: self.p_keep,
            nu: self.nu,
            p_local: self.p_local,
            walk_len: self.walk_len,
            r_retain: self.r_retain,
            ..TeacherParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.run_config(PolicyKind::Ccts, 0).validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.teacher().validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
