//! Reference policies and a common Monte Carlo evaluator.
//!
//! IP buys cover on the absolute clock `t = 1, 1+ν, 1+2ν, …`; WP never buys.
//! Both always charge at the lowest battery level and otherwise pick a valid
//! energy action uniformly at random.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionPair, EnergyAction, EnvConfig, InsuranceAction, ModelError, PevState};
use crate::policy::{sample_action, ParamTable};
use crate::scalar::Scalar;
use crate::stats::{Estimate, RunningStats};

/// Shortest horizon the evaluator accepts.
pub const MIN_HORIZON: u64 = 1_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("horizon {0} is below the minimum of {MIN_HORIZON} periods")]
    HorizonTooShort(u64),
    #[error("at least one replication is required")]
    NoReplications,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A decision rule that may depend on the period clock (1-based).
pub trait Controller {
    fn act(&mut self, s: &PevState, clock: u64, rng: &mut dyn RngCore) -> ActionPair;
}

fn baseline_energy(s: &PevState, battery_levels: u32, rng: &mut dyn RngCore) -> EnergyAction {
    if s.battery == 1 {
        return EnergyAction::Charge;
    }
    let choices = crate::model::ActionMask::for_battery(s.battery, battery_levels).energy_choices();
    choices[rng.gen_range(0..choices.len())]
}

/// Always-insured action: buy exactly when `clock ≡ 1 (mod ν)`.
pub fn ip_action(
    s: &PevState,
    clock: u64,
    coverage_len: u32,
    battery_levels: u32,
    rng: &mut dyn RngCore,
) -> ActionPair {
    let buy = (clock.max(1) - 1).is_multiple_of(coverage_len.max(1) as u64);
    let insurance = if buy {
        InsuranceAction::Buy
    } else {
        InsuranceAction::NoBuy
    };
    ActionPair::new(baseline_energy(s, battery_levels, rng), insurance)
}

/// Never-insured action.
pub fn wp_action(s: &PevState, battery_levels: u32, rng: &mut dyn RngCore) -> ActionPair {
    ActionPair::new(baseline_energy(s, battery_levels, rng), InsuranceAction::NoBuy)
}

#[derive(Clone, Debug)]
pub struct InsuredPolicy {
    pub coverage_len: u32,
    pub battery_levels: u32,
}

impl Controller for InsuredPolicy {
    fn act(&mut self, s: &PevState, clock: u64, rng: &mut dyn RngCore) -> ActionPair {
        ip_action(s, clock, self.coverage_len, self.battery_levels, rng)
    }
}

#[derive(Clone, Debug)]
pub struct UninsuredPolicy {
    pub battery_levels: u32,
}

impl Controller for UninsuredPolicy {
    fn act(&mut self, s: &PevState, _clock: u64, rng: &mut dyn RngCore) -> ActionPair {
        wp_action(s, self.battery_levels, rng)
    }
}

/// A frozen softmax policy.
#[derive(Clone, Debug)]
pub struct SoftmaxController<T> {
    pub theta: ParamTable<T>,
}

impl<T: Scalar> Controller for SoftmaxController<T> {
    fn act(&mut self, s: &PevState, _clock: u64, rng: &mut dyn RngCore) -> ActionPair {
        sample_action(&self.theta, s, rng)
    }
}

/// The three policies compared throughout the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PolicyKind {
    Learned,
    Insured,
    Uninsured,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Learned => "LA",
            PolicyKind::Insured => "IP",
            PolicyKind::Uninsured => "WP",
        }
    }
}

/// Totals accumulated over one replication.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ledger {
    pub periods: u64,
    pub total_cost: f64,
    pub charging_cost: f64,
    pub discharging_profit: f64,
    pub insurance_cost: f64,
    pub penalty_cost: f64,
    pub purchases: u64,
}

impl Ledger {
    /// `total − (charging − discharging + insurance + penalty)`; zero up to rounding.
    pub fn identity_gap(&self) -> f64 {
        self.total_cost
            - (self.charging_cost - self.discharging_profit + self.insurance_cost + self.penalty_cost)
    }
}

/// Per-period metrics averaged over replications, with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub avg_total_cost: Estimate,
    pub avg_charging_cost: Estimate,
    pub avg_discharging_profit: Estimate,
    pub insurance_buy_rate: Estimate,
    pub avg_insurance_cost: Estimate,
    pub avg_penalty_cost: Estimate,
    #[serde(skip)]
    pub ledgers: Vec<Ledger>,
}

impl EvalReport {
    /// Per-period averages with one sample per replication ledger.
    pub fn from_ledgers(ledgers: Vec<Ledger>) -> Self {
        let per = |f: fn(&Ledger) -> f64| -> Estimate {
            ledgers
                .iter()
                .map(|l| f(l) / l.periods as f64)
                .collect::<RunningStats>()
                .summary()
        };
        Self {
            avg_total_cost: per(|l| l.total_cost),
            avg_charging_cost: per(|l| l.charging_cost),
            avg_discharging_profit: per(|l| l.discharging_profit),
            insurance_buy_rate: per(|l| l.purchases as f64),
            avg_insurance_cost: per(|l| l.insurance_cost),
            avg_penalty_cost: per(|l| l.penalty_cost),
            ledgers,
        }
    }

    /// `(metric name, estimate)` pairs in a stable order.
    pub fn metrics(&self) -> [(&'static str, Estimate); 6] {
        [
            ("avg_total_cost", self.avg_total_cost),
            ("avg_charging_cost", self.avg_charging_cost),
            ("avg_discharging_profit", self.avg_discharging_profit),
            ("insurance_buy_rate", self.insurance_buy_rate),
            ("avg_insurance_cost", self.avg_insurance_cost),
            ("avg_penalty_cost", self.avg_penalty_cost),
        ]
    }
}

/// RNG for replication `rep` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Simulates one replication of `horizon` periods from the start state.
pub fn run_replication<T: Scalar, C: Controller + ?Sized>(
    controller: &mut C,
    env: &EnvConfig<T>,
    horizon: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Ledger, ModelError> {
    let mut ledger = Ledger::default();
    let mut state = env.initial_state(rng);
    for clock in 1..=horizon {
        let a = controller.act(&state.pev, clock, rng);
        let (next, cost) = env.step(&state, a, rng)?;
        ledger.periods += 1;
        ledger.total_cost += cost.total().to_f64_lossy();
        ledger.charging_cost += cost.charging.to_f64_lossy();
        ledger.discharging_profit += cost.discharge_revenue.to_f64_lossy();
        ledger.insurance_cost += cost.premium.to_f64_lossy();
        ledger.penalty_cost += cost.penalty.to_f64_lossy();
        ledger.purchases += a.buys() as u64;
        state = next;
    }
    Ok(ledger)
}

/// Time-averaged metrics over independent replications. Replication `r`
/// uses stream `r` of `seed`, so results do not depend on thread scheduling.
pub fn evaluate_policy<T, C, F>(
    make_controller: F,
    env: &EnvConfig<T>,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<EvalReport, EvalError>
where
    T: Scalar,
    C: Controller,
    F: Fn() -> C + Sync,
{
    if horizon < MIN_HORIZON {
        return Err(EvalError::HorizonTooShort(horizon));
    }
    if replications == 0 {
        return Err(EvalError::NoReplications);
    }
    env.validate()?;
    let ledgers = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replication_rng(seed, rep);
            let mut c = make_controller();
            run_replication(&mut c, env, horizon, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_ledgers(ledgers))
}

/// Evaluates one of the three standard policies. `theta` is required for `Learned`.
pub fn evaluate_kind<T: Scalar>(
    kind: PolicyKind,
    theta: Option<&ParamTable<T>>,
    env: &EnvConfig<T>,
    horizon: u64,
    replications: u64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let bl = env.battery_levels;
    match kind {
        PolicyKind::Learned => {
            let theta = theta.expect("learned policy needs parameters");
            evaluate_policy(
                || SoftmaxController {
                    theta: theta.clone(),
                },
                env,
                horizon,
                replications,
                seed,
            )
        }
        PolicyKind::Insured => evaluate_policy(
            || InsuredPolicy {
                coverage_len: env.cost.coverage_len,
                battery_levels: bl,
            },
            env,
            horizon,
            replications,
            seed,
        ),
        PolicyKind::Uninsured => evaluate_policy(
            || UninsuredPolicy { battery_levels: bl },
            env,
            horizon,
            replications,
            seed,
        ),
    }
}
