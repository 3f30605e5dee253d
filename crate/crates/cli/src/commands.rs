//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use is2::estimator;
use is2::exec::{try_map_indexed, Execution};
use is2::io::{read_json, write_draws, write_json};
use is2::likelihood::{batch_diagnostics, BatchDiagnostics, LogLikDiagnostics};
use is2::models::{Model, ParticleBudget};
use is2::pmmh::{compare_is2_pmmh, pmmh_run, CompareOptions, TestFunction};
use is2::proposals::fit_from_weighted_draws;
use is2::rng;
use is2::runner::{run_is2, Is2Options};
use is2::summary::{summarize, PosteriorSummary, SummaryOptions};
use is2::tuning::{self, TuningProfile};
use is2::{Is2Error, ParameterProposal};

use crate::config::RunConfig;
use crate::{CliError, CommonArgs, DiagnoseArgs, EvidenceArgs};

// stream families of a command, kept apart from the core's own keys
const KEY_ADAPT: u64 = 101;
const KEY_PILOT_THETA: u64 = 102;
const KEY_PILOT_LIK: u64 = 103;
const KEY_TIMING: u64 = 104;
const KEY_SUMMARY: u64 = 105;

pub fn configure_threads(threads: Option<usize>) -> Result<Execution, CliError> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(k) => {
            // a pool may already exist when called twice in one process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::Parallel),
    }
}

struct Loaded {
    cfg: RunConfig,
    model: Box<dyn Model>,
    seed: u64,
    profile: Option<TuningProfile>,
}

fn load(config: &Path, seed: Option<u64>, profile: Option<&Path>) -> Result<Loaded, CliError> {
    let cfg = RunConfig::load(config)?;
    let seed = cfg.seed(seed)?;
    let model = cfg.model.build()?;
    if cfg.proposal.dim() != model.dim() {
        return Err(CliError::Config(format!(
            "proposal has dimension {} but the model has {} parameters",
            cfg.proposal.dim(),
            model.dim()
        )));
    }
    let profile = profile.map(read_json::<TuningProfile>).transpose()?;
    Ok(Loaded {
        cfg,
        model,
        seed,
        profile,
    })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

/// The configured proposal, refitted to pilot runs when `adapt` is set.
fn proposal_for(l: &Loaded, budget: &ParticleBudget, exec: Execution) -> Result<ParameterProposal, CliError> {
    let mut proposal = l.cfg.proposal.clone();
    if let Some(adapt) = l.cfg.adapt {
        for round in 0..adapt.rounds {
            let pilot = run_is2(
                &*l.model,
                &proposal,
                &Is2Options {
                    draws: adapt.pilot_draws,
                    budget: *budget,
                    seed: rng::derive(rng::derive(l.seed, KEY_ADAPT), round as u64),
                    exec,
                    antithetic_theta: false,
                },
            )?;
            let fit = fit_from_weighted_draws(&pilot, adapt.df)?;
            if fit.diagonal_fallback {
                eprintln!("warning: pilot covariance not positive definite; using a diagonal scale");
            }
            proposal = fit.proposal;
        }
    }
    Ok(proposal)
}

pub fn run(args: &CommonArgs, exec: Execution) -> Result<(), CliError> {
    let l = load(&args.config, args.seed, args.profile.as_deref())?;
    prepare_out(&args.out)?;
    let start = Instant::now();
    let budget = l.cfg.budget(l.profile.as_ref())?;
    let proposal = proposal_for(&l, &budget, exec)?;
    let draws = run_is2(
        &*l.model,
        &proposal,
        &Is2Options {
            draws: l.cfg.draws,
            budget,
            seed: l.seed,
            exec,
            antithetic_theta: l.cfg.antithetic,
        },
    )?;
    let names = l.model.param_names();
    let summary = summarize(
        &draws,
        &names,
        &SummaryOptions {
            bootstrap_resamples: l.cfg.bootstrap,
            seed: rng::derive(l.seed, KEY_SUMMARY),
            exec,
            trim: l.cfg.trim,
        },
    )?;
    let elapsed = start.elapsed().as_secs_f64();
    write_draws(&draws, &names, &args.out)?;
    write_json(&proposal, &args.out.join("proposal.json"))?;
    write_json(&summary, &args.out.join("summary.json"))?;
    std::fs::write(args.out.join("summary.txt"), summary.to_table()).map_err(Is2Error::from)?;
    write_json(&summary.timing(elapsed), &args.out.join("timing.json"))?;
    print!("{}", summary.to_table());
    Ok(())
}

pub fn tune(args: &CommonArgs, exec: Execution) -> Result<(), CliError> {
    let l = load(&args.config, args.seed, None)?;
    let spec = l
        .cfg
        .tune
        .clone()
        .ok_or_else(|| CliError::Config("tune needs a \"tune\" section".into()))?;
    if spec.pilot_draws < 5 {
        return Err(Is2Error::TooFewPilots {
            needed: 5,
            got: spec.pilot_draws,
        }
        .into());
    }
    prepare_out(&args.out)?;
    let thetas = l.cfg.proposal.sample(spec.pilot_draws, rng::derive(l.seed, KEY_PILOT_THETA));
    let lik_seed = rng::derive(l.seed, KEY_PILOT_LIK);
    let pilot_budget = ParticleBudget::fixed(spec.n0);
    let variances = try_map_indexed(thetas.len(), exec, |j| -> is2::Result<f64> {
        let mut r = rng::stream(lik_seed, j as u64);
        let first = l.model.estimate_loglik(&thetas[j], &pilot_budget, &mut r)?;
        match first.loglik_var_hat {
            Some(v) if v.is_finite() => Ok(v),
            _ => {
                let mut reps = vec![first];
                for _ in 1..spec.replicates.max(2) {
                    reps.push(l.model.estimate_loglik(&thetas[j], &pilot_budget, &mut r)?);
                }
                Ok(tuning::replicate_loglik_variance(&reps))
            }
        }
    })?;
    let gamma_bar2 = tuning::gamma_bar_from_variances(spec.n0, &variances);
    if !(gamma_bar2 > 0.0) {
        return Err(CliError::Config("the likelihood estimates have zero variance; nothing to tune".into()));
    }
    let mut timing_rng = rng::stream(rng::derive(l.seed, KEY_TIMING), 0);
    let cost = tuning::measure_cost_model(
        |n| {
            l.model
                .estimate_loglik(&thetas[0], &ParticleBudget::fixed(n), &mut timing_rng)
                .map(|_| ())
        },
        &spec.timing_counts,
        spec.timing_repeats,
    )?;
    let mut profile = TuningProfile::new(cost, gamma_bar2, spec.n0);
    profile.per_theta_gamma2 = Some(
        variances
            .iter()
            .enumerate()
            .map(|(j, v)| (j, spec.n0 as f64 * v))
            .collect::<BTreeMap<_, _>>(),
    );
    write_json(&profile, &args.out.join("tuning.json"))?;
    println!(
        "gamma_bar2 {:.4}  tau0 {:.3e}  tau1 {:.3e}  sigma2_opt {:.4}  N {}",
        profile.gamma_bar2,
        cost.tau0,
        cost.tau1,
        profile.sigma2_opt,
        profile.particles_for(profile.sigma2_opt)
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub first_log_ml: f64,
    pub first_se: f64,
    pub second_log_ml: f64,
    pub second_se: f64,
    pub log_bayes_factor: f64,
    /// Standard error assuming the two runs are independent.
    pub log_bayes_factor_se: f64,
    pub bayes_factor: f64,
}

pub fn evidence_report(a: &PosteriorSummary, b: &PosteriorSummary) -> EvidenceReport {
    let (la, lb) = (&a.log_marginal_likelihood, &b.log_marginal_likelihood);
    let log_bf = la.log_value - lb.log_value;
    EvidenceReport {
        first_log_ml: la.log_value,
        first_se: la.mc_se_of_log,
        second_log_ml: lb.log_value,
        second_se: lb.mc_se_of_log,
        log_bayes_factor: log_bf,
        log_bayes_factor_se: la.mc_se_of_log.hypot(lb.mc_se_of_log),
        bayes_factor: log_bf.exp(),
    }
}

pub fn evidence(args: &EvidenceArgs) -> Result<(), CliError> {
    let a: PosteriorSummary = read_json(&args.first.join("summary.json"))?;
    let b: PosteriorSummary = read_json(&args.second.join("summary.json"))?;
    let report = evidence_report(&a, &b);
    if let Some(out) = &args.out {
        prepare_out(out)?;
        write_json(&report, &out.join("evidence.json"))?;
    }
    println!(
        "log Bayes factor {:.4} ({:.4})  Bayes factor {:.4}",
        report.log_bayes_factor, report.log_bayes_factor_se, report.bayes_factor
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParameter {
    pub name: String,
    pub mean: f64,
    pub batch_means_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub iterations: usize,
    pub burnin: usize,
    pub acceptance_rate: f64,
    pub parameters: Vec<ChainParameter>,
}

pub fn pmmh(args: &CommonArgs, exec: Execution) -> Result<(), CliError> {
    let l = load(&args.config, args.seed, args.profile.as_deref())?;
    let spec = l
        .cfg
        .pmmh
        .ok_or_else(|| CliError::Config("pmmh needs a \"pmmh\" section".into()))?;
    if spec.burnin >= spec.iterations {
        return Err(CliError::Config("burnin must be below iterations".into()));
    }
    prepare_out(&args.out)?;
    let budget = l.cfg.budget(l.profile.as_ref())?;
    let proposal = proposal_for(&l, &budget, exec)?;
    let chain = pmmh_run(&*l.model, &proposal, spec.iterations, spec.burnin, &budget, l.seed)?;
    let report = ChainReport {
        iterations: spec.iterations,
        burnin: spec.burnin,
        acceptance_rate: chain.acceptance_rate(),
        parameters: l
            .model
            .param_names()
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let (mean, se) = chain.estimate(estimator::coordinate(j));
                ChainParameter {
                    name,
                    mean,
                    batch_means_se: se,
                }
            })
            .collect(),
    };
    chain.write_csv(&args.out.join("chain.csv"))?;
    write_json(&report, &args.out.join("pmmh.json"))?;
    println!("acceptance rate {:.3}", report.acceptance_rate);
    for p in &report.parameters {
        println!("{:<20}{:>12.4} ({:.4})", p.name, p.mean, p.batch_means_se);
    }
    Ok(())
}

pub fn compare(args: &CommonArgs, exec: Execution) -> Result<(), CliError> {
    let l = load(&args.config, args.seed, args.profile.as_deref())?;
    let spec = l
        .cfg
        .compare
        .ok_or_else(|| CliError::Config("compare needs a \"compare\" section".into()))?;
    prepare_out(&args.out)?;
    let budget = l.cfg.budget(l.profile.as_ref())?;
    let proposal = proposal_for(&l, &budget, exec)?;
    let report = compare_is2_pmmh(
        &*l.model,
        &proposal,
        &budget,
        &TestFunction::coordinates(&l.model.param_names()),
        None,
        &CompareOptions {
            draws: l.cfg.draws,
            burnin: spec.burnin,
            replications: spec.replications,
            seed: l.seed,
            exec,
        },
    )?;
    write_json(&report, &args.out.join("comparison.json"))?;
    std::fs::write(args.out.join("comparison.txt"), report.to_table()).map_err(Is2Error::from)?;
    print!("{}", report.to_table());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    #[serde(flatten)]
    pub diagnostics: LogLikDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub aggregate: BatchDiagnostics,
    pub records: Vec<DiagnosticsRecord>,
}

fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f = l.split(',').next().unwrap_or("").trim();
            f.parse::<f64>()
                .map_err(|e| CliError::Config(format!("{}: bad value {f:?}: {e}", path.display())))
        })
        .collect()
}

pub fn diagnose(args: &DiagnoseArgs, exec: Execution) -> Result<(), CliError> {
    let (batches, thetas) = if let Some(input) = &args.input {
        let sample = read_column(input)?;
        let batches = match args.batch_size {
            Some(0) => return Err(CliError::Config("--batch-size must be positive".into())),
            Some(m) => sample.chunks(m).filter(|c| c.len() == m).map(<[f64]>::to_vec).collect(),
            None => vec![sample],
        };
        (batches, None)
    } else {
        let config = args.config.as_deref().expect("clap requires --config or --input");
        let l = load(config, args.seed, args.profile.as_deref())?;
        let spec = l
            .cfg
            .diagnose
            .ok_or_else(|| CliError::Config("diagnose needs a \"diagnose\" section".into()))?;
        let budget = l.cfg.budget(l.profile.as_ref())?;
        let thetas = l.cfg.proposal.sample(spec.thetas, rng::derive(l.seed, KEY_PILOT_THETA));
        let lik_seed = rng::derive(l.seed, KEY_PILOT_LIK);
        let batches = try_map_indexed(thetas.len(), exec, |j| -> is2::Result<Vec<f64>> {
            let mut r = rng::stream(lik_seed, j as u64);
            (0..spec.replicates)
                .map(|_| Ok(l.model.estimate_loglik(&thetas[j], &budget, &mut r)?.log_value))
                .collect()
        })?;
        (batches, Some(thetas))
    };
    if batches.is_empty() {
        return Err(CliError::Config("no complete batch to diagnose".into()));
    }
    let (aggregate, per) = batch_diagnostics(&batches)?;
    let records = per
        .into_iter()
        .enumerate()
        .map(|(j, diagnostics)| DiagnosticsRecord {
            theta: thetas.as_ref().map(|t| t[j].clone()),
            diagnostics,
        })
        .collect();
    let report = DiagnosticsReport { aggregate, records };
    prepare_out(&args.out)?;
    write_json(&report, &args.out.join("diagnostics.json"))?;
    let a = &report.aggregate;
    println!(
        "batches {}  variance {:.4}  skewness {:.4}  kurtosis {:.4}  JB rejections {:.3}",
        a.batches, a.mean_variance, a.mean_skewness, a.mean_kurtosis, a.jb_rejection_rate
    );
    Ok(())
}
