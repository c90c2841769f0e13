//! The PEV charging MDP: states, masked composite actions, stochastic
//! dynamics and the four-term immediate cost.
//!
//! Battery levels run `1..=B` and periods `1..=P`. Insurance bought in a
//! period guarantees the information-available prices for `ν` periods,
//! counting the purchase period. The learner only sees whether it is
//! currently covered; the environment tracks the remaining coverage.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

/// Number of composite actions `{Idle, Charge, Discharge} × {NoBuy, Buy}`.
pub const NUM_ACTIONS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("state {state} is outside the model (B={battery_levels}, P={periods})")]
    InvalidState {
        state: PevState,
        battery_levels: u32,
        periods: u32,
    },
    #[error("action {action} is not allowed in state {state}")]
    InvalidAction { state: PevState, action: ActionPair },
    #[error("inconsistent coverage: insured={insured} with {coverage} periods remaining")]
    InconsistentCoverage { insured: bool, coverage: u32 },
    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },
}

fn config_err(field: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnergyAction {
    Idle = 0,
    Charge = 1,
    Discharge = 2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InsuranceAction {
    NoBuy = 0,
    Buy = 1,
}

impl EnergyAction {
    pub const ALL: [EnergyAction; 3] = [Self::Idle, Self::Charge, Self::Discharge];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl InsuranceAction {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::NoBuy),
            1 => Some(Self::Buy),
            _ => None,
        }
    }
}

/// Composite action: what to do with the battery, and whether to buy cover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionPair {
    pub energy: EnergyAction,
    pub insurance: InsuranceAction,
}

impl ActionPair {
    pub const ALL: [ActionPair; NUM_ACTIONS] = [
        ActionPair::new(EnergyAction::Idle, InsuranceAction::NoBuy),
        ActionPair::new(EnergyAction::Idle, InsuranceAction::Buy),
        ActionPair::new(EnergyAction::Charge, InsuranceAction::NoBuy),
        ActionPair::new(EnergyAction::Charge, InsuranceAction::Buy),
        ActionPair::new(EnergyAction::Discharge, InsuranceAction::NoBuy),
        ActionPair::new(EnergyAction::Discharge, InsuranceAction::Buy),
    ];

    pub const fn new(energy: EnergyAction, insurance: InsuranceAction) -> Self {
        Self { energy, insurance }
    }

    /// Dense index `2·a1 + a2`, matching the order of [`ActionPair::ALL`].
    pub fn index(self) -> usize {
        2 * self.energy as usize + self.insurance as usize
    }

    pub fn from_index(idx: usize) -> Option<Self> {
        Self::ALL.get(idx).copied()
    }

    pub fn buys(self) -> bool {
        self.insurance == InsuranceAction::Buy
    }
}

impl fmt::Display for ActionPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.energy.code(), self.insurance.code())
    }
}

/// What the learner observes: battery level, period and insurance status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PevState {
    pub battery: u32,
    pub period: u32,
    pub insured: bool,
}

impl PevState {
    pub fn new(battery: u32, period: u32, insured: bool) -> Self {
        Self {
            battery,
            period,
            insured,
        }
    }
}

impl fmt::Display for PevState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.battery, self.period, self.insured as u8)
    }
}

/// Environment-side state. `pev.insured` mirrors `coverage_remaining > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FullEnvState {
    pub pev: PevState,
    pub coverage_remaining: u32,
    pub info_available: bool,
}

impl FullEnvState {
    pub fn new(battery: u32, period: u32, coverage_remaining: u32, info_available: bool) -> Self {
        Self {
            pev: PevState::new(battery, period, coverage_remaining > 0),
            coverage_remaining,
            info_available,
        }
    }
}

/// Valid-action mask for one battery level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActionMask([bool; NUM_ACTIONS]);

impl ActionMask {
    pub fn for_battery(battery: u32, battery_levels: u32) -> Self {
        let mut mask = [true; NUM_ACTIONS];
        for a in ActionPair::ALL {
            let allowed = match a.energy {
                EnergyAction::Idle => true,
                EnergyAction::Charge => battery < battery_levels,
                EnergyAction::Discharge => battery > 1,
            };
            mask[a.index()] = allowed;
        }
        Self(mask)
    }

    pub fn contains(&self, a: ActionPair) -> bool {
        self.0[a.index()]
    }

    pub fn contains_index(&self, idx: usize) -> bool {
        self.0[idx]
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ActionPair> + '_ {
        ActionPair::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    pub fn energy_choices(&self) -> Vec<EnergyAction> {
        EnergyAction::ALL
            .into_iter()
            .filter(|&e| self.contains(ActionPair::new(e, InsuranceAction::NoBuy)))
            .collect()
    }
}

/// Per-period prices. Discharge entries are revenue magnitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule<T> {
    pub charge_avail: Vec<T>,
    pub charge_unavail: Vec<T>,
    pub discharge_avail: Vec<T>,
    pub discharge_unavail: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskModel<T> {
    /// Probability that infrastructure information is unavailable, per period.
    pub unavail_prob: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel<T> {
    pub premium: T,
    pub coverage_len: u32,
    pub penalty_uninsured: T,
    pub penalty_insured: T,
    pub consumption_rate: T,
}

/// Complete environment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig<T> {
    pub battery_levels: u32,
    pub periods: u32,
    pub cost: CostModel<T>,
    pub prices: PriceSchedule<T>,
    pub risk: RiskModel<T>,
}

/// Signed cost components of one period. `total = charging − discharge_revenue + penalty + premium`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostBreakdown<T> {
    pub charging: T,
    pub discharge_revenue: T,
    pub penalty: T,
    pub premium: T,
}

impl<T: Scalar> CostBreakdown<T> {
    pub fn total(&self) -> T {
        self.charging - self.discharge_revenue + self.penalty + self.premium
    }
}

impl<T: Scalar> EnvConfig<T> {
    /// Six battery levels, four periods, `λ = 0.6`, `l_p = 0.1`, `m = 1`, `ν = 4`,
    /// and penalties `h1 = 20`, `h2 = 22`.
    pub fn default_instance() -> Self {
        let v = |xs: [f64; 4]| xs.iter().map(|&x| T::lit(x)).collect::<Vec<_>>();
        Self {
            battery_levels: 6,
            periods: 4,
            cost: CostModel {
                premium: T::one(),
                coverage_len: 4,
                penalty_uninsured: T::lit(20.0),
                penalty_insured: T::lit(22.0),
                consumption_rate: T::lit(0.6),
            },
            prices: PriceSchedule {
                charge_avail: v([10.5, 10.0, 9.5, 9.0]),
                charge_unavail: v([14.5, 14.0, 13.5, 13.0]),
                discharge_avail: v([15.5, 15.0, 14.5, 14.0]),
                discharge_unavail: v([11.5, 11.0, 10.5, 10.0]),
            },
            risk: RiskModel {
                unavail_prob: vec![T::lit(0.1); 4],
            },
        }
    }

    /// Desk-sized variant (`B = 3`, `P = 2`, `ν = 1`, twelve analysis states)
    /// used by the exact-gradient checks.
    pub fn small_instance() -> Self {
        let mut c = Self::default_instance();
        c.battery_levels = 3;
        c.periods = 2;
        c.cost.coverage_len = 1;
        for t in [
            &mut c.prices.charge_avail,
            &mut c.prices.charge_unavail,
            &mut c.prices.discharge_avail,
            &mut c.prices.discharge_unavail,
            &mut c.risk.unavail_prob,
        ] {
            t.truncate(2);
        }
        c
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.battery_levels < 2 {
            return Err(config_err("battery_levels", "need at least 2 levels"));
        }
        if self.periods < 1 {
            return Err(config_err("periods", "need at least 1 period"));
        }
        let n = self.periods as usize;
        let tables = [
            ("prices.charge_avail", &self.prices.charge_avail),
            ("prices.charge_unavail", &self.prices.charge_unavail),
            ("prices.discharge_avail", &self.prices.discharge_avail),
            ("prices.discharge_unavail", &self.prices.discharge_unavail),
            ("risk.unavail_prob", &self.risk.unavail_prob),
        ];
        for (name, table) in tables {
            if table.len() != n {
                return Err(config_err(
                    name,
                    format!("expected {n} entries, found {}", table.len()),
                ));
            }
            if table.iter().any(|x| !x.is_finite()) {
                return Err(config_err(name, "entries must be finite"));
            }
        }
        for p in 0..n {
            let pr = &self.prices;
            if pr.charge_avail[p] < T::zero() {
                return Err(config_err("prices.charge_avail", "must be non-negative"));
            }
            if pr.charge_avail[p] > pr.charge_unavail[p] {
                return Err(config_err(
                    "prices.charge_unavail",
                    format!("period {}: must be at least the available-information price", p + 1),
                ));
            }
            if pr.discharge_avail[p] < pr.discharge_unavail[p] {
                return Err(config_err(
                    "prices.discharge_unavail",
                    format!("period {}: must not exceed the available-information revenue", p + 1),
                ));
            }
            let l = self.risk.unavail_prob[p];
            if l < T::zero() || l > T::one() {
                return Err(config_err("risk.unavail_prob", "probabilities must lie in [0,1]"));
            }
        }
        let c = &self.cost;
        if c.coverage_len < 1 {
            return Err(config_err("cost.coverage_len", "must be at least 1"));
        }
        if !(c.premium >= T::zero()) {
            return Err(config_err("cost.premium", "must be non-negative"));
        }
        if !(c.penalty_uninsured >= T::zero()) {
            return Err(config_err("cost.penalty_uninsured", "must be non-negative"));
        }
        if !(c.penalty_insured > c.penalty_uninsured) {
            return Err(config_err(
                "cost.penalty_insured",
                "must exceed the uninsured penalty",
            ));
        }
        if !(c.consumption_rate >= T::zero() && c.consumption_rate <= T::one()) {
            return Err(config_err("cost.consumption_rate", "must lie in [0,1]"));
        }
        Ok(())
    }

    pub fn contains(&self, s: &PevState) -> bool {
        (1..=self.battery_levels).contains(&s.battery) && (1..=self.periods).contains(&s.period)
    }

    fn check_state(&self, s: &PevState) -> Result<(), ModelError> {
        if self.contains(s) {
            Ok(())
        } else {
            Err(ModelError::InvalidState {
                state: *s,
                battery_levels: self.battery_levels,
                periods: self.periods,
            })
        }
    }

    pub fn valid_actions(&self, s: &PevState) -> ActionMask {
        ActionMask::for_battery(s.battery, self.battery_levels)
    }

    fn check_action(&self, s: &PevState, a: ActionPair) -> Result<(), ModelError> {
        self.check_state(s)?;
        if self.valid_actions(s).contains(a) {
            Ok(())
        } else {
            Err(ModelError::InvalidAction { state: *s, action: a })
        }
    }

    /// Number of observable states `B · P · 2`.
    pub fn num_observed_states(&self) -> usize {
        self.battery_levels as usize * self.periods as usize * 2
    }

    /// Dense index of an observable state.
    pub fn observed_index(&self, s: &PevState) -> usize {
        let b = (s.battery - 1) as usize;
        let p = (s.period - 1) as usize;
        (b * self.periods as usize + p) * 2 + s.insured as usize
    }

    pub fn observed_state(&self, idx: usize) -> PevState {
        let insured = idx % 2 == 1;
        let rest = idx / 2;
        let p = rest % self.periods as usize;
        let b = rest / self.periods as usize;
        PevState::new(b as u32 + 1, p as u32 + 1, insured)
    }

    pub fn observed_states(&self) -> impl Iterator<Item = PevState> + '_ {
        (0..self.num_observed_states()).map(|i| self.observed_state(i))
    }

    /// Full battery, first period, uninsured.
    pub fn start_state(&self) -> PevState {
        PevState::new(self.battery_levels, 1, false)
    }

    /// Default regeneration state `s*`: lowest battery, first period, uninsured.
    /// Being uninsured pins the hidden coverage counter to zero, so visits are
    /// true regeneration points; the battery also spends most of its time near
    /// the bottom under any reasonable policy.
    pub fn recurrent_state(&self) -> PevState {
        PevState::new(1, 1, false)
    }

    pub fn next_period(&self, period: u32) -> u32 {
        period % self.periods + 1
    }

    /// Battery level after the action and an optional one-level consumption.
    pub fn next_battery(&self, battery: u32, energy: EnergyAction, consumed: bool) -> u32 {
        let mut b = battery as i64;
        match energy {
            EnergyAction::Charge => b += 1,
            EnergyAction::Discharge => b -= 1,
            EnergyAction::Idle => {}
        }
        if consumed {
            b -= 1;
        }
        b.clamp(1, self.battery_levels as i64) as u32
    }

    pub fn next_coverage(&self, coverage: u32, insurance: InsuranceAction) -> u32 {
        match insurance {
            InsuranceAction::Buy => self.cost.coverage_len,
            InsuranceAction::NoBuy => coverage.saturating_sub(1),
        }
    }

    fn unavail(&self, period: u32) -> T {
        self.risk.unavail_prob[(period - 1) as usize]
    }

    /// Cost components of taking `a` in `s`.
    pub fn cost_breakdown(
        &self,
        s: &FullEnvState,
        a: ActionPair,
    ) -> Result<CostBreakdown<T>, ModelError> {
        self.check_action(&s.pev, a)?;
        let p = (s.pev.period - 1) as usize;
        let covered = s.pev.insured || a.buys();
        let informed = s.info_available || covered;
        let pr = &self.prices;
        let mut out = CostBreakdown {
            charging: T::zero(),
            discharge_revenue: T::zero(),
            penalty: T::zero(),
            premium: T::zero(),
        };
        match a.energy {
            EnergyAction::Charge => {
                out.charging = if informed {
                    pr.charge_avail[p]
                } else {
                    pr.charge_unavail[p]
                };
            }
            EnergyAction::Discharge => {
                out.discharge_revenue = if informed {
                    pr.discharge_avail[p]
                } else {
                    pr.discharge_unavail[p]
                };
            }
            EnergyAction::Idle if s.pev.battery == 1 => {
                out.penalty = if covered {
                    self.cost.penalty_insured
                } else {
                    self.cost.penalty_uninsured
                };
            }
            EnergyAction::Idle => {}
        }
        if a.buys() {
            out.premium = self.cost.premium;
        }
        Ok(out)
    }

    pub fn immediate_cost(&self, s: &FullEnvState, a: ActionPair) -> Result<T, ModelError> {
        Ok(self.cost_breakdown(s, a)?.total())
    }

    /// Cost of `a` averaged over information availability in the current period.
    pub fn expected_cost(
        &self,
        s: &PevState,
        coverage: u32,
        a: ActionPair,
    ) -> Result<T, ModelError> {
        if s.insured != (coverage > 0) || coverage > self.cost.coverage_len {
            return Err(ModelError::InconsistentCoverage {
                insured: s.insured,
                coverage,
            });
        }
        let l = self.unavail(s.period);
        let with = |info| FullEnvState {
            pev: *s,
            coverage_remaining: coverage,
            info_available: info,
        };
        let off = self.immediate_cost(&with(false), a)?;
        let on = self.immediate_cost(&with(true), a)?;
        Ok(l * off + (T::one() - l) * on)
    }

    fn draw_info<R: Rng + ?Sized>(&self, period: u32, rng: &mut R) -> bool {
        let l = self.unavail(period).to_f64_lossy();
        rng.gen::<f64>() >= l
    }

    /// Start state with the first period's information availability drawn.
    pub fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> FullEnvState {
        let pev = self.start_state();
        FullEnvState {
            pev,
            coverage_remaining: 0,
            info_available: self.draw_info(pev.period, rng),
        }
    }

    /// One period of the environment. Returns the successor and the realized cost.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &FullEnvState,
        a: ActionPair,
        rng: &mut R,
    ) -> Result<(FullEnvState, CostBreakdown<T>), ModelError> {
        let cost = self.cost_breakdown(s, a)?;
        let consumed = rng.gen::<f64>() < self.cost.consumption_rate.to_f64_lossy();
        let battery = self.next_battery(s.pev.battery, a.energy, consumed);
        let period = self.next_period(s.pev.period);
        let coverage = self.next_coverage(s.coverage_remaining, a.insurance);
        let info_available = self.draw_info(period, rng);
        let next = FullEnvState {
            pev: PevState::new(battery, period, coverage > 0),
            coverage_remaining: coverage,
            info_available,
        };
        Ok((next, cost))
    }
}
