//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use is2::likelihood::SamplingOptions;
use is2::models::lgss::{self, LgssEstimator, LgssModel, LgssParams};
use is2::models::panel_logit::{PanelData, PanelLogitModel, PanelParams};
use is2::models::sv::{self, SvModel, SvParams};
use is2::models::{Model, ParticleBudget};
use is2::tuning::TuningProfile;
use is2::ParameterProposal;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesSource<P> {
    /// CSV with a header and one observation per row in the first column.
    File { path: PathBuf },
    Simulate { params: P, periods: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PanelSource {
    File {
        path: PathBuf,
    },
    Simulate {
        params: PanelParams,
        individuals: usize,
        occasions: usize,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Lgss {
        data: SeriesSource<LgssParams>,
        r: f64,
        #[serde(default)]
        estimator: LgssEstimator,
        #[serde(default)]
        antithetic: bool,
    },
    Sv {
        data: SeriesSource<SvParams>,
        #[serde(default)]
        antithetic: bool,
    },
    PanelLogit {
        data: PanelSource,
        #[serde(default = "half")]
        pi: f64,
        #[serde(default)]
        antithetic: bool,
        #[serde(default = "yes")]
        stratified: bool,
        #[serde(default = "twenty")]
        pilot_particles: usize,
    },
}

fn half() -> f64 {
    0.5
}

fn yes() -> bool {
    true
}

fn twenty() -> usize {
    20
}

/// Either a numeric target or the optimum recorded in a tuning profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigma2Target {
    Value(f64),
    Named(String),
}

/// Pilot-based refit of the proposal before the main run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptSpec {
    pub pilot_draws: usize,
    #[serde(default = "five")]
    pub df: f64,
    #[serde(default = "one")]
    pub rounds: usize,
}

fn five() -> f64 {
    5.0
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSpec {
    /// Parameter draws used to estimate `γ̄²`.
    #[serde(default = "twenty")]
    pub pilot_draws: usize,
    /// Particles per pilot likelihood estimate.
    pub n0: usize,
    /// Replicate estimates per pilot draw when the estimator has no
    /// single-run variance estimate.
    #[serde(default = "ten")]
    pub replicates: usize,
    /// Particle counts timed to fit the cost model.
    #[serde(default = "timing_counts")]
    pub timing_counts: Vec<usize>,
    #[serde(default = "five_usize")]
    pub timing_repeats: usize,
}

fn ten() -> usize {
    10
}

fn five_usize() -> usize {
    5
}

fn timing_counts() -> Vec<usize> {
    vec![16, 128]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmmhSpec {
    pub iterations: usize,
    #[serde(default)]
    pub burnin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    pub replications: usize,
    #[serde(default)]
    pub burnin: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSpec {
    /// Parameter draws from the proposal.
    pub thetas: usize,
    /// Likelihood estimates per draw.
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub proposal: ParameterProposal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt: Option<AdaptSpec>,
    pub draws: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_target: Option<Sigma2Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Antithetic pairs of parameter draws.
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub trim: bool,
    #[serde(default = "bootstrap")]
    pub bootstrap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tune: Option<TuneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmmh: Option<PmmhSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnose: Option<DiagnoseSpec>,
}

fn bootstrap() -> usize {
    200
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parse and validate; relative data paths are resolved against the
    /// directory of the config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.model {
            ModelSpec::Lgss {
                data: SeriesSource::File { path },
                ..
            }
            | ModelSpec::Sv {
                data: SeriesSource::File { path },
                ..
            }
            | ModelSpec::PanelLogit {
                data: PanelSource::File { path },
                ..
            } => fix(path),
            _ => {}
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sigma2_target.is_some() == self.fixed_n.is_some() {
            return Err(config_err("set exactly one of sigma2_target and fixed_n"));
        }
        if self.draws == 0 {
            return Err(config_err("draws must be positive"));
        }
        if self.antithetic && self.draws % 2 == 1 {
            return Err(config_err("antithetic parameter draws need an even draw count"));
        }
        match &self.sigma2_target {
            Some(Sigma2Target::Value(v)) if !(*v > 0.0) => {
                return Err(config_err("sigma2_target must be positive"))
            }
            Some(Sigma2Target::Named(s)) if s != "optimal" => {
                return Err(config_err(format!("sigma2_target must be a number or \"optimal\", got {s:?}")))
            }
            _ => {}
        }
        if self.fixed_n == Some(0) {
            return Err(config_err("fixed_n must be positive"));
        }
        if self.bootstrap < 100 {
            return Err(config_err("bootstrap needs at least 100 resamples"));
        }
        Ok(())
    }

    /// The seed from the command line, else from the config.
    pub fn seed(&self, cli_seed: Option<u64>) -> Result<u64, CliError> {
        cli_seed
            .or(self.seed)
            .ok_or_else(|| config_err("a seed is required (config \"seed\" or --seed)"))
    }

    /// Particle budget; a profile supplies `γ̄²` and, for `"optimal"`, `σ²`.
    pub fn budget(&self, profile: Option<&TuningProfile>) -> Result<ParticleBudget, CliError> {
        if let Some(n) = self.fixed_n {
            return Ok(ParticleBudget::fixed(n));
        }
        let gamma_bar2 = profile.map(|p| p.gamma_bar2);
        let sigma2 = match &self.sigma2_target {
            Some(Sigma2Target::Value(v)) => *v,
            _ => profile
                .map(|p| p.sigma2_opt)
                .ok_or_else(|| config_err("sigma2_target \"optimal\" needs --profile"))?,
        };
        Ok(ParticleBudget::Target { sigma2, gamma_bar2 })
    }
}

fn read_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let field = l.split(',').next().unwrap_or("").trim();
            field
                .parse::<f64>()
                .map_err(|e| config_err(format!("{}: bad value {field:?}: {e}", path.display())))
        })
        .collect()
}

fn series<P>(src: &SeriesSource<P>, simulate: impl Fn(&P, usize, u64) -> Vec<f64>) -> Result<Vec<f64>, CliError> {
    match src {
        SeriesSource::File { path } => read_series(path),
        SeriesSource::Simulate { params, periods, seed } => Ok(simulate(params, *periods, *seed)),
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<Box<dyn Model>, CliError> {
        Ok(match self {
            ModelSpec::Lgss {
                data,
                r,
                estimator,
                antithetic,
            } => {
                if let SeriesSource::Simulate { params, .. } = data {
                    LgssParams::new(params.phi, params.q, params.r)?;
                }
                let mut m = LgssModel::new(series(data, lgss::simulate)?, *r, *estimator);
                m.antithetic = *antithetic;
                Box::new(m)
            }
            ModelSpec::Sv { data, antithetic } => {
                if let SeriesSource::Simulate { params, .. } = data {
                    SvParams::new(params.c, params.phi, params.sigma_eta2)?;
                }
                let mut m = SvModel::new(series(data, sv::simulate)?);
                m.antithetic = *antithetic;
                Box::new(m)
            }
            ModelSpec::PanelLogit {
                data,
                pi,
                antithetic,
                stratified,
                pilot_particles,
            } => {
                let data = match data {
                    PanelSource::File { path } => PanelData::read_csv(path)?,
                    PanelSource::Simulate {
                        params,
                        individuals,
                        occasions,
                        seed,
                    } => PanelData::simulate(params, *individuals, *occasions, *seed)?,
                };
                let mut m = PanelLogitModel::new(data).with_sampling(SamplingOptions {
                    antithetic: *antithetic,
                    stratified: *stratified,
                });
                m.pi = *pi;
                m.pilot_particles = *pilot_particles;
                Box::new(m)
            }
        })
    }
}
