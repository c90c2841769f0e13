//! Softmax policy over the valid composite actions of each observed state.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

use crate::model::{ActionMask, ActionPair, EnvConfig, PevState, NUM_ACTIONS};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("malformed parameter key `{0}` (expected \"b,p,i/a1,a2\")")]
    BadKey(String),
    #[error("parameter key `{0}` refers to a state or action outside the model")]
    OutOfModel(String),
    #[error("non-finite parameter at `{0}`")]
    NonFinite(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Dense table with one entry per (observed state, composite action).
///
/// Entries for actions masked out in a state are kept at zero and never read
/// by the policy; [`ParamTable::iter_valid`] skips them.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTable<T> {
    battery_levels: u32,
    periods: u32,
    values: Vec<T>,
}

/// Policy parameters `θ_{s,a}`.
pub type PolicyParams<T> = ParamTable<T>;

impl<T: Scalar> ParamTable<T> {
    pub fn zeros<U>(cfg: &EnvConfig<U>) -> Self {
        Self::with_shape(cfg.battery_levels, cfg.periods)
    }

    pub fn with_shape(battery_levels: u32, periods: u32) -> Self {
        let n = battery_levels as usize * periods as usize * 2 * NUM_ACTIONS;
        Self {
            battery_levels,
            periods,
            values: vec![T::zero(); n],
        }
    }

    pub fn battery_levels(&self) -> u32 {
        self.battery_levels
    }

    pub fn periods(&self) -> u32 {
        self.periods
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / NUM_ACTIONS
    }

    pub fn state_index(&self, s: &PevState) -> usize {
        let b = (s.battery - 1) as usize;
        let p = (s.period - 1) as usize;
        (b * self.periods as usize + p) * 2 + s.insured as usize
    }

    pub fn state_at(&self, idx: usize) -> PevState {
        let insured = idx % 2 == 1;
        let rest = idx / 2;
        let p = rest % self.periods as usize;
        let b = rest / self.periods as usize;
        PevState::new(b as u32 + 1, p as u32 + 1, insured)
    }

    pub fn mask(&self, s: &PevState) -> ActionMask {
        ActionMask::for_battery(s.battery, self.battery_levels)
    }

    pub fn get(&self, s: &PevState, a: ActionPair) -> T {
        self.values[self.state_index(s) * NUM_ACTIONS + a.index()]
    }

    pub fn set(&mut self, s: &PevState, a: ActionPair, v: T) {
        let i = self.state_index(s) * NUM_ACTIONS + a.index();
        self.values[i] = v;
    }

    pub fn row(&self, s: &PevState) -> &[T] {
        let i = self.state_index(s) * NUM_ACTIONS;
        &self.values[i..i + NUM_ACTIONS]
    }

    pub fn row_mut(&mut self, s: &PevState) -> &mut [T] {
        let i = self.state_index(s) * NUM_ACTIONS;
        &mut self.values[i..i + NUM_ACTIONS]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn fill_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x = *x + alpha * *y;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        self.values.iter_mut().for_each(|v| *v = *v * alpha);
    }

    pub fn dot(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| *x * *y)
            .sum()
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (x, y)| acc.max((*x - *y).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Every (state, valid action, value) triple.
    pub fn iter_valid(&self) -> impl Iterator<Item = (PevState, ActionPair, T)> + '_ {
        (0..self.num_states()).flat_map(move |si| {
            let s = self.state_at(si);
            let mask = self.mask(&s);
            ActionPair::ALL
                .into_iter()
                .filter(move |a| mask.contains(*a))
                .map(move |a| (s, a, self.values[si * NUM_ACTIONS + a.index()]))
        })
    }

    /// Flat map keyed by `"b,p,i/a1,a2"`, valid entries only.
    pub fn to_flat_map(&self) -> BTreeMap<String, T> {
        self.iter_valid()
            .map(|(s, a, v)| (format!("{s}/{a}"), v))
            .collect()
    }

    /// Inverse of [`to_flat_map`](Self::to_flat_map). Missing keys stay zero.
    pub fn from_flat_map(
        battery_levels: u32,
        periods: u32,
        map: &BTreeMap<String, T>,
    ) -> Result<Self, PolicyError> {
        let mut out = Self::with_shape(battery_levels, periods);
        for (key, &v) in map {
            let (s, a) = parse_key(key)?;
            let in_model = (1..=battery_levels).contains(&s.battery)
                && (1..=periods).contains(&s.period)
                && out.mask(&s).contains(a);
            if !in_model {
                return Err(PolicyError::OutOfModel(key.clone()));
            }
            if !v.is_finite() {
                return Err(PolicyError::NonFinite(key.clone()));
            }
            out.set(&s, a, v);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, PolicyError>
    where
        T: Serialize,
    {
        Ok(serde_json::to_string_pretty(&self.to_flat_map())?)
    }

    pub fn from_json(battery_levels: u32, periods: u32, json: &str) -> Result<Self, PolicyError>
    where
        T: DeserializeOwned,
    {
        let map: BTreeMap<String, T> = serde_json::from_str(json)?;
        Self::from_flat_map(battery_levels, periods, &map)
    }
}

fn parse_key(key: &str) -> Result<(PevState, ActionPair), PolicyError> {
    let bad = || PolicyError::BadKey(key.to_string());
    let (state, action) = key.split_once('/').ok_or_else(bad)?;
    let nums = |part: &str| -> Result<Vec<u32>, PolicyError> {
        part.split(',')
            .map(|x| x.trim().parse::<u32>().map_err(|_| bad()))
            .collect()
    };
    let s = nums(state)?;
    let a = nums(action)?;
    if s.len() != 3 || a.len() != 2 || s[2] > 1 {
        return Err(bad());
    }
    let energy = crate::model::EnergyAction::from_code(a[0] as u8).ok_or_else(bad)?;
    let insurance = crate::model::InsuranceAction::from_code(a[1] as u8).ok_or_else(bad)?;
    Ok((
        PevState::new(s[0], s[1], s[2] == 1),
        ActionPair::new(energy, insurance),
    ))
}

/// Any rule that assigns action probabilities to observed states.
pub trait StochasticPolicy<T> {
    /// Probabilities indexed by [`ActionPair::index`]; masked actions get zero.
    fn probabilities(&self, s: &PevState) -> [T; NUM_ACTIONS];
}

impl<T: Scalar> StochasticPolicy<T> for ParamTable<T> {
    fn probabilities(&self, s: &PevState) -> [T; NUM_ACTIONS] {
        action_probabilities(self, s)
    }
}

/// `μ_Θ(s,·)`: softmax of the valid entries of the state's row.
pub fn action_probabilities<T: Scalar>(theta: &ParamTable<T>, s: &PevState) -> [T; NUM_ACTIONS] {
    let mask = theta.mask(s);
    let row = theta.row(s);
    let max = (0..NUM_ACTIONS)
        .filter(|&i| mask.contains_index(i))
        .map(|i| row[i])
        .fold(T::neg_infinity(), T::max);
    let mut out = [T::zero(); NUM_ACTIONS];
    let mut total = T::zero();
    for i in 0..NUM_ACTIONS {
        if mask.contains_index(i) {
            out[i] = (row[i] - max).exp();
            total = total + out[i];
        }
    }
    for v in out.iter_mut() {
        *v = *v / total;
    }
    out
}

pub fn log_probability<T: Scalar>(theta: &ParamTable<T>, s: &PevState, a: ActionPair) -> T {
    let mask = theta.mask(s);
    let row = theta.row(s);
    let max = (0..NUM_ACTIONS)
        .filter(|&i| mask.contains_index(i))
        .map(|i| row[i])
        .fold(T::neg_infinity(), T::max);
    let lse = (0..NUM_ACTIONS)
        .filter(|&i| mask.contains_index(i))
        .map(|i| (row[i] - max).exp())
        .sum::<T>()
        .ln()
        + max;
    row[a.index()] - lse
}

/// Inverse-CDF draw from a probability row.
pub fn sample_from<T: Scalar, R: Rng + ?Sized>(probs: &[T; NUM_ACTIONS], rng: &mut R) -> ActionPair {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    let mut last = None;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if !(p > 0.0) || !p.is_finite() {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return ActionPair::ALL[i];
        }
    }
    // Rounding left u above the accumulated mass.
    ActionPair::ALL[last.expect("probability row has positive mass")]
}

pub fn sample_action<T: Scalar, R: Rng + ?Sized>(
    theta: &ParamTable<T>,
    s: &PevState,
    rng: &mut R,
) -> ActionPair {
    sample_from(&action_probabilities(theta, s), rng)
}

/// Score row `∇_{θ_{s,·}} ln μ_Θ(s,a) = 1[a'=a] − μ_Θ(s,a')`; zero on masked actions.
pub fn score_row<T: Scalar>(theta: &ParamTable<T>, s: &PevState, a: ActionPair) -> [T; NUM_ACTIONS] {
    let mut out = action_probabilities(theta, s);
    for v in out.iter_mut() {
        *v = -*v;
    }
    out[a.index()] = out[a.index()] + T::one();
    out
}

/// Score `∇μ_Θ(s,a) / μ_Θ(s,a)` as a full table; rows other than `s` are zero.
pub fn score<T: Scalar>(theta: &ParamTable<T>, s: &PevState, a: ActionPair) -> ParamTable<T> {
    let mut out = ParamTable::with_shape(theta.battery_levels, theta.periods);
    out.row_mut(s).copy_from_slice(&score_row(theta, s, a));
    out
}
