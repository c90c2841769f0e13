//! Experiment runner behind the command-line tool: convergence runs, parameter
//! sweeps, the value-of-information study, the economics calculators and the
//! exact-gradient self-check. Every table carries the config hash and seed.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use config::{
    EconSettings, EvalSettings, ExperimentConfig, LearnerSettings, PremiumQuery, ProtectionQuery, SweepAxis,
    SweepSettings, VerifySettings, VoiSettings,
};

use crate::baselines::{
    evaluate_kind, evaluate_policy, replication_rng, Controller, EvalError, EvalReport, InsuredPolicy, PolicyKind,
    SoftmaxController, UninsuredPolicy,
};
use crate::econ::{
    ids_equilibria, max_acceptable_premium, self_protection_decision, threshold_classification, EconError,
    IdsInstance, IdsOutcome, PremiumDecomposition, ProtectionChoice, ProtectionDecision, Strategy,
};
use crate::exact::{
    bellman_residual, gradient_finite_difference, ActionModel, AnalysisError, MdpAnalysis,
};
use crate::learning::{train, LearnError, LearnerState, TrainOutcome, TrajectoryPoint};
use crate::model::{EnvConfig, ModelError};
use crate::policy::{action_probabilities, ParamTable};
use crate::voi::{station_count_study, Topology, VoiError, VoiTable};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing output: {0}")]
    Write(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("learning: {0}")]
    Learn(#[from] LearnError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("exact analysis: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("value-of-information study: {0}")]
    Voi(#[from] VoiError),
    #[error("economics: {0}")]
    Econ(#[from] EconError),
}

/// Streams at and above this offset of the run seed drive training, so they
/// never coincide with evaluation replications.
const TRAIN_STREAM_BASE: u64 = 1 << 40;

/// Training RNG for run `run`; identical across sweep values (common random numbers).
pub fn training_rng(seed: u64, run: u64) -> rand_chacha::ChaCha8Rng {
    replication_rng(seed, TRAIN_STREAM_BASE + run)
}

/// Opens `path` for writing, reporting the path on failure.
pub fn create_output(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// `runs/train.csv` → `runs/train_policy.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

// ---------------------------------------------------------------------------
// train

#[derive(Clone, Debug)]
pub struct TrainResult {
    /// `None` when zero iterations were requested.
    pub learned: Option<TrainOutcome<f64>>,
    pub theta: ParamTable<f64>,
    pub baselines: Vec<(PolicyKind, Vec<TrajectoryPoint>)>,
}

impl TrainResult {
    /// Final `(ψ̃ or running mean)` per policy, for quick comparison.
    pub fn finals(&self) -> Vec<(PolicyKind, f64)> {
        let mut out = Vec::new();
        if let Some(la) = &self.learned {
            out.push((PolicyKind::Learned, la.learner.psi));
        }
        for (kind, traj) in &self.baselines {
            if let Some(last) = traj.last() {
                out.push((*kind, last.cumulative_mean_cost));
            }
        }
        out
    }
}

/// Running-mean trajectory of a fixed controller, sampled like the learner's.
pub fn controller_trajectory<C: Controller + ?Sized>(
    controller: &mut C,
    env: &EnvConfig<f64>,
    iterations: u64,
    every: u64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<TrajectoryPoint>, ModelError> {
    let every = every.max(1);
    let mut out = Vec::with_capacity((iterations / every) as usize + 1);
    let mut state = env.initial_state(rng);
    let mut total = 0.0;
    for it in 1..=iterations {
        let a = controller.act(&state.pev, it, rng);
        let (next, cost) = env.step(&state, a, rng)?;
        total += cost.total();
        if it % every == 0 || it == iterations {
            let mean = total / it as f64;
            out.push(TrajectoryPoint {
                iteration: it,
                psi_tilde: mean,
                cumulative_mean_cost: mean,
            });
        }
        state = next;
    }
    Ok(out)
}

/// Trains the learner and runs both baselines for the same number of periods,
/// all from the same seed.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainResult, HarnessError> {
    cfg.validate()?;
    let env = &cfg.env;
    let n = cfg.learner.iterations;
    let every = cfg.learner.config.record_every;
    let init = LearnerState::new(env, &cfg.learner.config);
    let learned = if n == 0 {
        None
    } else {
        Some(train(env, init.clone(), &cfg.learner.config, n, &mut training_rng(cfg.seed, 0))?)
    };
    let theta = learned.as_ref().map_or(init.theta, |o| o.learner.theta.clone());
    let bl = env.battery_levels;
    let mut ip = InsuredPolicy {
        coverage_len: env.cost.coverage_len,
        battery_levels: bl,
    };
    let mut wp = UninsuredPolicy { battery_levels: bl };
    let baselines = vec![
        (
            PolicyKind::Insured,
            controller_trajectory(&mut ip, env, n, every, &mut training_rng(cfg.seed, 0))?,
        ),
        (
            PolicyKind::Uninsured,
            controller_trajectory(&mut wp, env, n, every, &mut training_rng(cfg.seed, 0))?,
        ),
    ];
    Ok(TrainResult {
        learned,
        theta,
        baselines,
    })
}

pub const TRAIN_HEADER: [&str; 6] = ["policy", "iteration", "psi_tilde", "cumulative_mean_cost", "config_hash", "seed"];

/// Convergence trajectories; baselines leave `psi_tilde` empty.
pub fn write_train_csv<W: Write>(cfg: &ExperimentConfig, result: &TrainResult, out: W) -> Result<(), HarnessError> {
    let hash = cfg.hash();
    let seed = cfg.seed.to_string();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAIN_HEADER)?;
    if let Some(la) = &result.learned {
        for p in &la.trajectory {
            w.write_record([
                PolicyKind::Learned.label(),
                &p.iteration.to_string(),
                &p.psi_tilde.to_string(),
                &p.cumulative_mean_cost.to_string(),
                &hash,
                &seed,
            ])?;
        }
    }
    for (kind, traj) in &result.baselines {
        for p in traj {
            w.write_record([
                kind.label(),
                &p.iteration.to_string(),
                "",
                &p.cumulative_mean_cost.to_string(),
                &hash,
                &seed,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Learned action probabilities per observed state.
pub fn write_policy_csv<W: Write>(cfg: &ExperimentConfig, theta: &ParamTable<f64>, out: W) -> Result<(), HarnessError> {
    let hash = cfg.hash();
    let seed = cfg.seed.to_string();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["b", "p", "i", "a1", "a2", "probability", "theta", "config_hash", "seed"])?;
    for s in cfg.env.observed_states() {
        let probs = action_probabilities(theta, &s);
        for a in cfg.env.valid_actions(&s).iter() {
            w.write_record([
                s.battery.to_string(),
                s.period.to_string(),
                u8::from(s.insured).to_string(),
                a.energy.code().to_string(),
                a.insurance.code().to_string(),
                probs[a.index()].to_string(),
                theta.get(&s, a).to_string(),
                hash.clone(),
                seed.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub value: f64,
    /// Evaluations of every training run, pooled.
    pub learned: EvalReport,
    pub insured: EvalReport,
    pub uninsured: EvalReport,
    /// Final ψ̃ of each training run.
    pub psi_tilde: Vec<f64>,
}

impl SweepPoint {
    pub fn report(&self, kind: PolicyKind) -> &EvalReport {
        match kind {
            PolicyKind::Learned => &self.learned,
            PolicyKind::Insured => &self.insured,
            PolicyKind::Uninsured => &self.uninsured,
        }
    }
}

/// Trains and evaluates at one axis value. Training runs and evaluation
/// replications use the same streams at every value.
pub fn sweep_point(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<SweepPoint, HarnessError> {
    let env = axis.apply(&cfg.env, value);
    env.validate()?;
    let (horizon, reps, seed) = (cfg.eval.horizon, cfg.eval.replications, cfg.seed);
    let runs = (0..cfg.sweep.training_runs)
        .into_par_iter()
        .map(|run| -> Result<(f64, EvalReport), HarnessError> {
            let init = LearnerState::new(&env, &cfg.learner.config);
            let theta = if cfg.learner.iterations == 0 {
                init.theta
            } else {
                let out = train(&env, init, &cfg.learner.config, cfg.learner.iterations, &mut training_rng(seed, run))?;
                return Ok((
                    out.learner.psi,
                    evaluate_kind(PolicyKind::Learned, Some(&out.learner.theta), &env, horizon, reps, seed)?,
                ));
            };
            let report = evaluate_policy(|| SoftmaxController { theta: theta.clone() }, &env, horizon, reps, seed)?;
            Ok((0.0, report))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let psi_tilde = runs.iter().map(|r| r.0).collect();
    let learned = EvalReport::from_ledgers(runs.into_iter().flat_map(|r| r.1.ledgers).collect());
    Ok(SweepPoint {
        value,
        learned,
        insured: evaluate_kind::<f64>(PolicyKind::Insured, None, &env, horizon, reps, seed)?,
        uninsured: evaluate_kind::<f64>(PolicyKind::Uninsured, None, &env, horizon, reps, seed)?,
        psi_tilde,
    })
}

/// One [`sweep_point`] per configured value, in value order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>, HarnessError> {
    cfg.validate()?;
    let axis = cfg.sweep.axis;
    cfg.sweep
        .resolved_values()
        .par_iter()
        .map(|&v| sweep_point(cfg, axis, v))
        .collect()
}

pub const SWEEP_HEADER: [&str; 8] = ["axis", "value", "policy", "metric", "mean", "stderr", "config_hash", "seed"];

pub fn write_sweep_csv<W: Write>(cfg: &ExperimentConfig, points: &[SweepPoint], out: W) -> Result<(), HarnessError> {
    let hash = cfg.hash();
    let seed = cfg.seed.to_string();
    let axis = cfg.sweep.axis.as_str();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for pt in points {
        for kind in [PolicyKind::Learned, PolicyKind::Insured, PolicyKind::Uninsured] {
            for (metric, est) in pt.report(kind).metrics() {
                w.write_record([
                    axis,
                    &pt.value.to_string(),
                    kind.label(),
                    metric,
                    &est.mean.to_string(),
                    &est.stderr.to_string(),
                    &hash,
                    &seed,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// voi

/// The configured topology file, or a seeded random layout large enough for
/// the biggest station count.
pub fn load_topology(cfg: &ExperimentConfig) -> Result<Topology, HarnessError> {
    let v = &cfg.voi;
    match &v.topology {
        Some(path) => {
            let file = File::open(path).map_err(|e| HarnessError::Io {
                path: path.clone(),
                source: e,
            })?;
            Ok(Topology::from_csv(v.area, file)?)
        }
        None => {
            let n = v.station_counts.iter().copied().max().unwrap_or(1);
            Ok(Topology::random(
                v.area,
                n,
                &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(v.topology_seed),
            ))
        }
    }
}

pub fn run_voi(cfg: &ExperimentConfig) -> Result<Vec<VoiTable>, HarnessError> {
    cfg.validate()?;
    let topo = load_topology(cfg)?;
    Ok(station_count_study(
        &topo,
        &cfg.voi.station_counts,
        &cfg.voi.vehicle,
        cfg.voi.trials,
        cfg.seed,
    )?)
}

pub const VOI_HEADER: [&str; 7] = ["stations", "arm", "mode", "mean", "stderr", "config_hash", "seed"];

pub fn write_voi_csv<W: Write>(cfg: &ExperimentConfig, tables: &[VoiTable], out: W) -> Result<(), HarnessError> {
    let hash = cfg.hash();
    let seed = cfg.seed.to_string();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VOI_HEADER)?;
    for t in tables {
        for (arm, mode, est) in t.rows() {
            w.write_record([
                &t.stations.to_string(),
                arm,
                mode.as_str(),
                &est.mean.to_string(),
                &est.stderr.to_string(),
                &hash,
                &seed,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// econ

/// An instance, its enumerated equilibria and what the threshold rule predicts.
pub type IdsRow = (IdsInstance, IdsOutcome, Vec<(Strategy, Strategy)>);

#[derive(Clone, Debug)]
pub struct EconReport {
    pub premiums: Vec<(PremiumQuery, PremiumDecomposition)>,
    pub protection: Vec<(ProtectionQuery, ProtectionDecision)>,
    pub ids: Vec<IdsRow>,
}

pub fn run_econ(cfg: &ExperimentConfig) -> Result<EconReport, HarnessError> {
    let e = &cfg.econ;
    let premiums = e
        .premiums
        .iter()
        .map(|q| Ok((q.clone(), max_acceptable_premium(&q.utility, q.w0, q.l, q.p)?)))
        .collect::<Result<_, EconError>>()?;
    let protection = e
        .protection
        .iter()
        .map(|q| {
            Ok((
                q.clone(),
                self_protection_decision(&q.utility, q.w0, q.l, &q.curve, q.insurance_price)?,
            ))
        })
        .collect::<Result<_, EconError>>()?;
    let ids = e
        .ids
        .iter()
        .map(|inst| {
            let out = ids_equilibria(inst)?;
            let rule = threshold_classification(inst.c, &out.thresholds);
            Ok((*inst, out, rule))
        })
        .collect::<Result<_, EconError>>()?;
    Ok(EconReport {
        premiums,
        protection,
        ids,
    })
}

fn profiles(set: &[(Strategy, Strategy)]) -> String {
    set.iter().map(|(a, b)| format!("{a:?}{b:?}")).collect::<Vec<_>>().join(" ")
}

pub const ECON_HEADER: [&str; 6] = ["calculator", "case", "quantity", "value", "config_hash", "seed"];

/// Long-format table: one `(calculator, case, quantity, value)` row per number.
pub fn write_econ_csv<W: Write>(cfg: &ExperimentConfig, report: &EconReport, out: W) -> Result<(), HarnessError> {
    let hash = cfg.hash();
    let seed = cfg.seed.to_string();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ECON_HEADER)?;
    let mut row = |calc: &str, case: usize, qty: &str, value: String| {
        w.write_record([calc, &case.to_string(), qty, &value, &hash, &seed])
    };
    for (k, (q, d)) in report.premiums.iter().enumerate() {
        row("premium", k, "utility", q.utility.to_string())?;
        row("premium", k, "w0", q.w0.to_string())?;
        row("premium", k, "l", q.l.to_string())?;
        row("premium", k, "p", q.p.to_string())?;
        row("premium", k, "max_premium", d.premium.to_string())?;
        row("premium", k, "fair_premium", d.fair_premium.to_string())?;
        row("premium", k, "risk_premium", d.risk_premium.to_string())?;
    }
    for (k, (q, d)) in report.protection.iter().enumerate() {
        row("protection", k, "utility", q.utility.to_string())?;
        row("protection", k, "best_spend", d.best_spend.to_string())?;
        row("protection", k, "best_value", d.best_value.to_string())?;
        row("protection", k, "unprotected_value", d.unprotected_value.to_string())?;
        let choice = match d.choice {
            ProtectionChoice::DoNothing => "do_nothing".to_string(),
            ProtectionChoice::SelfProtect { spend } => format!("self_protect({spend})"),
            ProtectionChoice::Insure { price } => format!("insure({price})"),
        };
        row("protection", k, "choice", choice)?;
        row("protection", k, "chosen_value", d.chosen_value.to_string())?;
    }
    for (k, (inst, out, rule)) in report.ids.iter().enumerate() {
        row("ids", k, "utility", inst.utility.to_string())?;
        row("ids", k, "c", inst.c.to_string())?;
        row("ids", k, "c1", out.thresholds.c1.to_string())?;
        row("ids", k, "c2", out.thresholds.c2.to_string())?;
        row("ids", k, "equilibria", profiles(&out.equilibria))?;
        row("ids", k, "threshold_rule", profiles(rule))?;
        row("ids", k, "boundary", out.boundary.to_string())?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.limit
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Exact gradient against central finite differences on the desk-sized
/// instance, plus the Bellman and regeneration identities, over random Θ.
pub fn run_verify(cfg: &ExperimentConfig) -> Result<VerifyReport, HarnessError> {
    cfg.validate()?;
    let v = &cfg.verify;
    let env = EnvConfig::<f64>::small_instance();
    let model = ActionModel::build(&env)?;
    let mut rng = replication_rng(cfg.seed, 0);
    let (mut fd_err, mut form_err, mut residual, mut anchor, mut consistency) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..v.draws {
        let mut theta = ParamTable::zeros(&env);
        for s in env.observed_states() {
            for a in env.valid_actions(&s).iter() {
                theta.set(&s, a, rng.gen_range(-v.theta_scale..=v.theta_scale));
            }
        }
        let an = MdpAnalysis::with_model(model.clone(), &theta)?;
        let exact = an.gradient(&theta);
        let fd = gradient_finite_difference(&theta, &model, v.step)?;
        fd_err = fd_err.max(exact.max_abs_diff(&fd) / fd.max_abs().max(1e-12));
        let direct = an.gradient_direct(&theta);
        form_err = form_err.max(exact.max_abs_diff(&direct));
        residual = residual.max(bellman_residual(
            &an.transition,
            &an.policy_costs,
            an.average_cost,
            &an.differential,
        ));
        anchor = anchor.max(an.differential[an.anchor()].abs());
        for i in 0..an.model.len() {
            let mixed: f64 = an.model.mask(i).iter().map(|a| an.probabilities[i][a.index()] * an.q[i][a.index()]).sum();
            consistency = consistency.max((mixed - an.differential[i]).abs());
        }
    }
    Ok(VerifyReport {
        checks: vec![
            Check {
                name: "gradient_vs_finite_difference",
                value: fd_err,
                limit: v.tolerance,
            },
            Check {
                name: "score_vs_direct_gradient",
                value: form_err,
                limit: 1e-10,
            },
            Check {
                name: "bellman_residual",
                value: residual,
                limit: 1e-10,
            },
            Check {
                name: "anchor_differential",
                value: anchor,
                limit: 0.0,
            },
            Check {
                name: "policy_weighted_q_equals_d",
                value: consistency,
                limit: 1e-10,
            },
        ],
    })
}

pub fn write_verify_report<W: Write>(cfg: &ExperimentConfig, report: &VerifyReport, mut out: W) -> Result<(), HarnessError> {
    writeln!(out, "# config_hash={} seed={}", cfg.hash(), cfg.seed)?;
    for c in &report.checks {
        let tag = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} {:<32} {:.3e} (limit {:.1e})", c.name, c.value, c.limit)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.learner.iterations = 2_000;
        c.eval.horizon = 1_000;
        c.eval.replications = 2;
        c.sweep.training_runs = 1;
        c.voi.trials = 500;
        c.verify.draws = 2;
        c
    }

    #[test]
    fn zero_iterations_header_only() {
        let mut c = quick();
        c.learner.iterations = 0;
        let r = run_train(&c).unwrap();
        let mut buf = Vec::new();
        write_train_csv(&c, &r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), TRAIN_HEADER.join(",") + "\n");
    }

    #[test]
    fn train_is_deterministic_and_tagged() {
        let c = quick();
        let render = || {
            let r = run_train(&c).unwrap();
            let mut buf = Vec::new();
            write_train_csv(&c, &r, &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = render();
        assert_eq!(a, render());
        for label in ["LA", "IP", "WP"] {
            assert!(a.lines().any(|l| l.starts_with(&format!("{label},"))));
        }
        assert!(a.lines().skip(1).all(|l| l.contains(&c.hash())));
    }

    #[test]
    fn policy_table_rows_sum_to_one() {
        let c = quick();
        let r = run_train(&c).unwrap();
        let mut buf = Vec::new();
        write_policy_csv(&c, &r.theta, &mut buf).unwrap();
        let mut rdr = csv::Reader::from_reader(buf.as_slice());
        let mut sums = std::collections::BTreeMap::<(u32, u32, u32), f64>::new();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            let key = (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[2].parse().unwrap());
            *sums.entry(key).or_default() += rec[5].parse::<f64>().unwrap();
        }
        assert_eq!(sums.len(), c.env.num_observed_states());
        assert!(sums.values().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sweep_rows_cover_every_value() {
        let mut c = quick();
        c.sweep.axis = SweepAxis::Premium;
        c.sweep.values = vec![1.0, 5.0];
        let pts = run_sweep(&c).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].value, 1.0);
        let mut buf = Vec::new();
        write_sweep_csv(&c, &pts, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 3 * 6);
        // Baselines do not learn, so premium only moves the insured policy.
        assert_eq!(pts[0].uninsured.avg_total_cost, pts[1].uninsured.avg_total_cost);
        assert!(pts[1].insured.avg_total_cost.mean > pts[0].insured.avg_total_cost.mean);
    }

    #[test]
    fn sweep_seed_derivation_is_stable() {
        use rand::RngCore;
        let a = training_rng(5, 2).next_u64();
        assert_eq!(a, training_rng(5, 2).next_u64());
        assert_ne!(a, training_rng(5, 3).next_u64());
        assert_ne!(a, replication_rng(5, 2).next_u64());
    }

    #[test]
    fn voi_and_econ_tables() {
        let c = quick();
        let tables = run_voi(&c).unwrap();
        assert_eq!(tables.len(), 4);
        let mut buf = Vec::new();
        write_voi_csv(&c, &tables, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 16);

        let report = run_econ(&c).unwrap();
        assert_eq!(report.premiums[0].1.premium, 1.0);
        let mut buf = Vec::new();
        write_econ_csv(&c, &report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("ids,0,equilibria,SS"));
    }

    #[test]
    fn bad_topology_file_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topo.csv");
        std::fs::write(&path, "x_km,y_km,price_mu_per_kwh\n1,1,0.2\n2,2,abc\n").unwrap();
        let mut c = quick();
        c.voi.topology = Some(path);
        let err = run_voi(&c).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn verify_passes() {
        let c = quick();
        let r = run_verify(&c).unwrap();
        assert!(r.passed(), "{r:?}");
        let mut buf = Vec::new();
        write_verify_report(&c, &r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().matches("PASS").count(), r.checks.len());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling_path(Path::new("out/train.csv"), "policy"), PathBuf::from("out/train_policy.csv"));
        assert_eq!(sibling_path(Path::new("train"), "policy"), PathBuf::from("train_policy"));
    }
}
