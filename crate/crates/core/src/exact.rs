//! Exact analysis of the chain induced by a stochastic policy on small instances.
//!
//! The analysis state is `(battery, period, coverage_remaining)`. Information
//! availability and battery consumption are integrated out: they enter the
//! expected per-action cost and the transition kernel, not the state. The
//! policy acts on the observed state, so every coverage level `> 0` shares the
//! parameters of the insured observation.
//!
//! The anchor `s*` defaults to the model's recurrent state (lowest battery,
//! period 1, no cover). Differential costs are normalised so that `d(s*) = 0`.

use std::io::Write;

use thiserror::Error;

use crate::linalg::{solve, DenseMatrix};
use crate::model::{ActionMask, ActionPair, EnvConfig, ModelError, PevState, NUM_ACTIONS};
use crate::policy::{action_probabilities, ParamTable, StochasticPolicy};
use crate::scalar::Scalar;

/// Largest state count the dense solvers accept.
pub const MAX_ANALYSIS_STATES: usize = 10_000;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("state space has {0} states; exact analysis is limited to {MAX_ANALYSIS_STATES}")]
    TooLarge(usize),
    #[error("row {row} of the transition matrix sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },
    #[error("chain is not unichain: states {states:?} cannot reach the anchor state")]
    Unreachable { states: Vec<String> },
    #[error("recurrent state {0} must be an uninsured state inside the model")]
    BadAnchor(PevState),
    #[error("singular linear system while solving for {0}")]
    Singular(&'static str),
    #[error("{what} residual {residual:e} exceeds tolerance")]
    Residual { what: &'static str, residual: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AnalysisState {
    pub battery: u32,
    pub period: u32,
    pub coverage: u32,
}

impl AnalysisState {
    pub fn observed(&self) -> PevState {
        PevState::new(self.battery, self.period, self.coverage > 0)
    }
}

impl std::fmt::Display for AnalysisState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(b={},p={},cov={})", self.battery, self.period, self.coverage)
    }
}

/// Enumeration of analysis states with per-action expected costs and kernels.
#[derive(Clone, Debug)]
pub struct ActionModel<T> {
    battery_levels: u32,
    periods: u32,
    coverage_len: u32,
    anchor: usize,
    states: Vec<AnalysisState>,
    masks: Vec<ActionMask>,
    /// `f_c(s,a)` averaged over information availability.
    costs: Vec<[T; NUM_ACTIONS]>,
    /// Sparse `p_b(·|s,a)`.
    kernels: Vec<[Vec<(usize, T)>; NUM_ACTIONS]>,
}

impl<T: Scalar> ActionModel<T> {
    pub fn build(cfg: &EnvConfig<T>) -> Result<Self, AnalysisError> {
        cfg.validate()?;
        let (bl, pl, nu) = (cfg.battery_levels, cfg.periods, cfg.cost.coverage_len);
        let n = bl as usize * pl as usize * (nu as usize + 1);
        if n > MAX_ANALYSIS_STATES {
            return Err(AnalysisError::TooLarge(n));
        }
        let mut states = Vec::with_capacity(n);
        for b in 1..=bl {
            for p in 1..=pl {
                for cov in 0..=nu {
                    states.push(AnalysisState {
                        battery: b,
                        period: p,
                        coverage: cov,
                    });
                }
            }
        }
        let mut me = Self {
            battery_levels: bl,
            periods: pl,
            coverage_len: nu,
            anchor: 0,
            masks: Vec::with_capacity(n),
            costs: Vec::with_capacity(n),
            kernels: Vec::with_capacity(n),
            states,
        };
        let lam = cfg.cost.consumption_rate;
        for s in me.states.clone() {
            let obs = s.observed();
            let mask = cfg.valid_actions(&obs);
            let mut costs = [T::zero(); NUM_ACTIONS];
            let mut kernels: [Vec<(usize, T)>; NUM_ACTIONS] = Default::default();
            for a in mask.iter() {
                costs[a.index()] = cfg.expected_cost(&obs, s.coverage, a)?;
                let period = cfg.next_period(s.period);
                let coverage = cfg.next_coverage(s.coverage, a.insurance);
                let mut row: Vec<(usize, T)> = Vec::with_capacity(2);
                for (consumed, prob) in [(false, T::one() - lam), (true, lam)] {
                    if prob == T::zero() {
                        continue;
                    }
                    let battery = cfg.next_battery(s.battery, a.energy, consumed);
                    let j = me.index_of(&AnalysisState {
                        battery,
                        period,
                        coverage,
                    });
                    match row.iter_mut().find(|(k, _)| *k == j) {
                        Some(entry) => entry.1 = entry.1 + prob,
                        None => row.push((j, prob)),
                    }
                }
                kernels[a.index()] = row;
            }
            me.masks.push(mask);
            me.costs.push(costs);
            me.kernels.push(kernels);
        }
        me.with_recurrent_state(&cfg.recurrent_state())
    }

    /// Moves the anchor to an uninsured observed state (coverage 0 is the
    /// only analysis state behind it, so visits are true regenerations).
    pub fn with_recurrent_state(mut self, s: &PevState) -> Result<Self, AnalysisError> {
        let in_range = (1..=self.battery_levels).contains(&s.battery)
            && (1..=self.periods).contains(&s.period);
        if s.insured || !in_range {
            return Err(AnalysisError::BadAnchor(*s));
        }
        self.anchor = self.index_of(&AnalysisState {
            battery: s.battery,
            period: s.period,
            coverage: 0,
        });
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[AnalysisState] {
        &self.states
    }

    pub fn index_of(&self, s: &AnalysisState) -> usize {
        let b = (s.battery - 1) as usize;
        let p = (s.period - 1) as usize;
        let w = self.coverage_len as usize + 1;
        (b * self.periods as usize + p) * w + s.coverage as usize
    }

    /// Index of the recurrent state `s*`.
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    pub fn anchor_state(&self) -> PevState {
        self.states[self.anchor].observed()
    }

    pub fn mask(&self, i: usize) -> ActionMask {
        self.masks[i]
    }

    pub fn action_cost(&self, i: usize, a: ActionPair) -> T {
        self.costs[i][a.index()]
    }

    pub fn kernel(&self, i: usize, a: ActionPair) -> &[(usize, T)] {
        &self.kernels[i][a.index()]
    }

    /// Per-state action probabilities of `policy`.
    pub fn policy_table<P: StochasticPolicy<T> + ?Sized>(&self, policy: &P) -> Vec<[T; NUM_ACTIONS]> {
        self.states
            .iter()
            .map(|s| policy.probabilities(&s.observed()))
            .collect()
    }

    /// `p_b(s'|s,Ψ(Θ)) = Σ_a μ(s,a) p_b(s'|s,a)`.
    pub fn transition_matrix(&self, probs: &[[T; NUM_ACTIONS]]) -> Result<DenseMatrix<T>, AnalysisError> {
        let n = self.len();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for a in self.masks[i].iter() {
                let mu = probs[i][a.index()];
                if mu == T::zero() {
                    continue;
                }
                for &(j, p) in &self.kernels[i][a.index()] {
                    m[(i, j)] = m[(i, j)] + mu * p;
                }
            }
            let sum: T = m.row(i).iter().copied().sum();
            if (sum - T::one()).abs() > T::check_tol() {
                return Err(AnalysisError::NotStochastic {
                    row: i,
                    sum: sum.to_f64_lossy(),
                });
            }
        }
        Ok(m)
    }

    /// `f_c(s,Θ) = Σ_a μ(s,a) f_c(s,a)`.
    pub fn policy_costs(&self, probs: &[[T; NUM_ACTIONS]]) -> Vec<T> {
        (0..self.len())
            .map(|i| {
                self.masks[i]
                    .iter()
                    .map(|a| probs[i][a.index()] * self.costs[i][a.index()])
                    .sum()
            })
            .collect()
    }

    /// `q(s,a) = f_c(s,a) − C + Σ_{s'} p_b(s'|s,a) d(s')`; zero on masked actions.
    pub fn q_values(&self, average_cost: T, differential: &[T]) -> Vec<[T; NUM_ACTIONS]> {
        (0..self.len())
            .map(|i| {
                let mut q = [T::zero(); NUM_ACTIONS];
                for a in self.masks[i].iter() {
                    let future: T = self.kernels[i][a.index()]
                        .iter()
                        .map(|&(j, p)| p * differential[j])
                        .sum();
                    q[a.index()] = self.costs[i][a.index()] - average_cost + future;
                }
                q
            })
            .collect()
    }
}

/// Returns the states that cannot reach `anchor` through positive entries.
fn states_missing_anchor<T: Scalar>(p: &DenseMatrix<T>, anchor: usize) -> Vec<usize> {
    let n = p.rows();
    let mut reaches = vec![false; n];
    reaches[anchor] = true;
    let mut stack = vec![anchor];
    while let Some(j) = stack.pop() {
        for i in 0..n {
            if !reaches[i] && p[(i, j)] > T::zero() {
                reaches[i] = true;
                stack.push(i);
            }
        }
    }
    (0..n).filter(|&i| !reaches[i]).collect()
}

/// Solves the balance equations `πP = π`, `Σπ = 1`.
///
/// Every state must be able to reach `anchor`; this makes the recurrent class
/// unique and the replaced-row system nonsingular.
pub fn stationary_distribution<T: Scalar>(
    p: &DenseMatrix<T>,
    anchor: usize,
) -> Result<Vec<T>, AnalysisError> {
    let n = p.rows();
    let missing = states_missing_anchor(p, anchor);
    if !missing.is_empty() {
        return Err(AnalysisError::Unreachable {
            states: missing.iter().map(|i| i.to_string()).collect(),
        });
    }
    let mut a = p.transpose();
    for i in 0..n {
        a[(i, i)] = a[(i, i)] - T::one();
    }
    a.row_mut(anchor).iter_mut().for_each(|v| *v = T::one());
    let mut rhs = vec![T::zero(); n];
    rhs[anchor] = T::one();
    let mut pi = solve(&a, &rhs).ok_or(AnalysisError::Singular("stationary distribution"))?;
    for v in pi.iter_mut() {
        if *v < -T::check_tol() {
            return Err(AnalysisError::Residual {
                what: "stationary distribution positivity",
                residual: v.to_f64_lossy(),
            });
        }
        *v = v.max(T::zero());
    }
    let total: T = pi.iter().copied().sum();
    pi.iter_mut().for_each(|v| *v = *v / total);
    Ok(pi)
}

/// `C(Θ) = Σ_s π(s) f_c(s,Θ)`.
pub fn average_cost_exact<T: Scalar>(pi: &[T], costs: &[T]) -> T {
    pi.iter().zip(costs).map(|(p, c)| *p * *c).sum()
}

/// Max-norm residual of `d = f − C + P d`.
pub fn bellman_residual<T: Scalar>(p: &DenseMatrix<T>, costs: &[T], average_cost: T, d: &[T]) -> T {
    let pd = p.mul_vec(d);
    (0..d.len()).fold(T::zero(), |acc, i| {
        acc.max((d[i] - (costs[i] - average_cost + pd[i])).abs())
    })
}

/// Solves `d = f − C + P d` with `d(anchor) = 0`.
pub fn differential_cost_solve<T: Scalar>(
    p: &DenseMatrix<T>,
    costs: &[T],
    average_cost: T,
    anchor: usize,
) -> Result<Vec<T>, AnalysisError> {
    let n = p.rows();
    let mut a = DenseMatrix::identity(n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = a[(i, j)] - p[(i, j)];
        }
    }
    a.row_mut(anchor).iter_mut().for_each(|v| *v = T::zero());
    a[(anchor, anchor)] = T::one();
    let mut rhs: Vec<T> = costs.iter().map(|&c| c - average_cost).collect();
    rhs[anchor] = T::zero();
    let d = solve(&a, &rhs).ok_or(AnalysisError::Singular("differential cost"))?;
    let scale = costs
        .iter()
        .chain(d.iter())
        .fold(T::one(), |acc, v| acc.max(v.abs()));
    let residual = bellman_residual(p, costs, average_cost, &d);
    if residual > T::check_tol() * scale {
        return Err(AnalysisError::Residual {
            what: "Bellman",
            residual: residual.to_f64_lossy(),
        });
    }
    Ok(d)
}

/// Everything the exact solver knows about one policy.
#[derive(Clone, Debug)]
pub struct MdpAnalysis<T> {
    pub model: ActionModel<T>,
    pub probabilities: Vec<[T; NUM_ACTIONS]>,
    pub transition: DenseMatrix<T>,
    pub stationary: Vec<T>,
    pub policy_costs: Vec<T>,
    pub average_cost: T,
    pub differential: Vec<T>,
    pub q: Vec<[T; NUM_ACTIONS]>,
}

impl<T: Scalar> MdpAnalysis<T> {
    pub fn new<P: StochasticPolicy<T> + ?Sized>(
        cfg: &EnvConfig<T>,
        policy: &P,
    ) -> Result<Self, AnalysisError> {
        Self::with_model(ActionModel::build(cfg)?, policy)
    }

    pub fn with_model<P: StochasticPolicy<T> + ?Sized>(
        model: ActionModel<T>,
        policy: &P,
    ) -> Result<Self, AnalysisError> {
        let probabilities = model.policy_table(policy);
        let transition = model.transition_matrix(&probabilities)?;
        let anchor = model.anchor();
        let stationary = stationary_distribution(&transition, anchor).map_err(|e| match e {
            AnalysisError::Unreachable { states } => AnalysisError::Unreachable {
                states: states
                    .iter()
                    .map(|i| model.states()[i.parse::<usize>().unwrap()].to_string())
                    .collect(),
            },
            other => other,
        })?;
        let policy_costs = model.policy_costs(&probabilities);
        let average_cost = average_cost_exact(&stationary, &policy_costs);
        let differential = differential_cost_solve(&transition, &policy_costs, average_cost, anchor)?;
        let q = model.q_values(average_cost, &differential);
        Ok(Self {
            model,
            probabilities,
            transition,
            stationary,
            policy_costs,
            average_cost,
            differential,
            q,
        })
    }

    pub fn anchor(&self) -> usize {
        self.model.anchor()
    }

    /// `∇C(Θ) = Σ_s Σ_a π(s) ∇μ(s,a) q(s,a)`, accumulated on the observed rows.
    pub fn gradient(&self, shape: &ParamTable<T>) -> ParamTable<T> {
        let mut grad = ParamTable::with_shape(shape.battery_levels(), shape.periods());
        for (i, s) in self.model.states().iter().enumerate() {
            let pi = self.stationary[i];
            if pi == T::zero() {
                continue;
            }
            let mu = &self.probabilities[i];
            let q = &self.q[i];
            let mask = self.model.mask(i);
            let baseline: T = mask.iter().map(|a| mu[a.index()] * q[a.index()]).sum();
            let row = grad.row_mut(&s.observed());
            for a in mask.iter() {
                let k = a.index();
                row[k] = row[k] + pi * mu[k] * (q[k] - baseline);
            }
        }
        grad
    }

    /// Same gradient through `Σ_s π(s) (∇f_c(s,Θ) + Σ_{s'} ∇p_b(s'|s,Θ) d(s'))`.
    pub fn gradient_direct(&self, shape: &ParamTable<T>) -> ParamTable<T> {
        let mut grad = ParamTable::with_shape(shape.battery_levels(), shape.periods());
        let pd = self.transition.mul_vec(&self.differential);
        for (i, s) in self.model.states().iter().enumerate() {
            let pi = self.stationary[i];
            if pi == T::zero() {
                continue;
            }
            let mu = &self.probabilities[i];
            let mask = self.model.mask(i);
            let row = grad.row_mut(&s.observed());
            for a in mask.iter() {
                let k = a.index();
                let cost_term = self.model.action_cost(i, a) - self.policy_costs[i];
                let next: T = self
                    .model
                    .kernel(i, a)
                    .iter()
                    .map(|&(j, p)| p * self.differential[j])
                    .sum();
                let trans_term = next - pd[i];
                row[k] = row[k] + pi * mu[k] * (cost_term + trans_term);
            }
        }
        grad
    }

    /// Writes `kind,b,p,coverage,a1,a2,value` rows for π, d, q and optionally ∇C.
    pub fn write_csv<W: Write>(
        &self,
        gradient: Option<&ParamTable<T>>,
        out: W,
    ) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "b", "p", "coverage", "a1", "a2", "value"])?;
        for (i, s) in self.model.states().iter().enumerate() {
            let base = [s.battery.to_string(), s.period.to_string(), s.coverage.to_string()];
            let v = self.stationary[i].to_f64_lossy().to_string();
            w.write_record(["pi", &base[0], &base[1], &base[2], "", "", &v])?;
            let v = self.differential[i].to_f64_lossy().to_string();
            w.write_record(["d", &base[0], &base[1], &base[2], "", "", &v])?;
            for a in self.model.mask(i).iter() {
                let v = self.q[i][a.index()].to_f64_lossy().to_string();
                let (a1, a2) = (a.energy.code().to_string(), a.insurance.code().to_string());
                w.write_record(["q", &base[0], &base[1], &base[2], &a1, &a2, &v])?;
            }
        }
        if let Some(g) = gradient {
            for (s, a, v) in g.iter_valid() {
                w.write_record([
                    "grad".to_string(),
                    s.battery.to_string(),
                    s.period.to_string(),
                    (s.insured as u8).to_string(),
                    a.energy.code().to_string(),
                    a.insurance.code().to_string(),
                    v.to_f64_lossy().to_string(),
                ])?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Exact average cost of the softmax policy `theta`.
pub fn average_cost_of<T: Scalar>(theta: &ParamTable<T>, model: &ActionModel<T>) -> Result<T, AnalysisError> {
    Ok(MdpAnalysis::with_model(model.clone(), theta)?.average_cost)
}

/// `∇C(Θ)` for the softmax policy `theta`.
pub fn gradient_exact<T: Scalar>(
    theta: &ParamTable<T>,
    cfg: &EnvConfig<T>,
) -> Result<ParamTable<T>, AnalysisError> {
    Ok(MdpAnalysis::new(cfg, theta)?.gradient(theta))
}

/// Central finite differences of the exact average cost over every valid entry.
pub fn gradient_finite_difference<T: Scalar>(
    theta: &ParamTable<T>,
    model: &ActionModel<T>,
    step: T,
) -> Result<ParamTable<T>, AnalysisError> {
    let mut grad = ParamTable::with_shape(theta.battery_levels(), theta.periods());
    let entries: Vec<_> = theta.iter_valid().map(|(s, a, _)| (s, a)).collect();
    let mut work = theta.clone();
    for (s, a) in entries {
        let base = theta.get(&s, a);
        work.set(&s, a, base + step);
        let up = average_cost_of(&work, model)?;
        work.set(&s, a, base - step);
        let down = average_cost_of(&work, model)?;
        work.set(&s, a, base);
        grad.set(&s, a, (up - down) / (step + step));
    }
    Ok(grad)
}

/// A fixed probability table, handy for deterministic or hand-built policies.
#[derive(Clone, Debug)]
pub struct TabularPolicy<F> {
    pub rule: F,
}

impl<T, F> StochasticPolicy<T> for TabularPolicy<F>
where
    F: Fn(&PevState) -> [T; NUM_ACTIONS],
{
    fn probabilities(&self, s: &PevState) -> [T; NUM_ACTIONS] {
        (self.rule)(s)
    }
}

/// Softmax probabilities for every analysis state (the `μ_Θ` table of the chain).
pub fn softmax_table<T: Scalar>(theta: &ParamTable<T>, model: &ActionModel<T>) -> Vec<[T; NUM_ACTIONS]> {
    model
        .states()
        .iter()
        .map(|s| action_probabilities(theta, &s.observed()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnergyAction::*, InsuranceAction::*};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> EnvConfig<f64> {
        let mut c = EnvConfig::default_instance();
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

    fn random_theta(cfg: &EnvConfig<f64>, rng: &mut ChaCha8Rng) -> ParamTable<f64> {
        let mut t = ParamTable::zeros(cfg);
        for s in cfg.observed_states() {
            for a in cfg.valid_actions(&s).iter().collect::<Vec<_>>() {
                t.set(&s, a, rng.gen_range(-2.0..2.0));
            }
        }
        t
    }

    #[test]
    fn idle_only_policy_cycles_periods() {
        let mut c = small();
        c.cost.consumption_rate = 0.0;
        c.risk.unavail_prob = vec![0.0; 2];
        let m = ActionModel::build(&c).unwrap();
        let idle = TabularPolicy {
            rule: |_: &PevState| {
                let mut p = [0.0; NUM_ACTIONS];
                p[ActionPair::new(Idle, NoBuy).index()] = 1.0;
                p
            },
        };
        let p = m.transition_matrix(&m.policy_table(&idle)).unwrap();
        for (i, s) in m.states().iter().enumerate() {
            let j = m.index_of(&AnalysisState {
                battery: s.battery,
                period: c.next_period(s.period),
                coverage: s.coverage.saturating_sub(1),
            });
            assert_eq!(p[(i, j)], 1.0);
            assert_eq!(p.row(i).iter().filter(|&&v| v > 0.0).count(), 1);
        }
    }

    #[test]
    fn swap_and_doubly_stochastic_chains() {
        let swap = DenseMatrix::from_rows(&[vec![0.0_f64, 1.0], vec![1.0, 0.0]]);
        let pi = stationary_distribution(&swap, 0).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);
        let ds = DenseMatrix::from_rows(&[
            vec![0.2_f64, 0.5, 0.3],
            vec![0.3, 0.2, 0.5],
            vec![0.5, 0.3, 0.2],
        ]);
        let pi = stationary_distribution(&ds, 1).unwrap();
        assert!(pi.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn reducible_chain_names_states() {
        let p = DenseMatrix::from_rows(&[
            vec![0.5, 0.5, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        match stationary_distribution(&p, 0) {
            Err(AnalysisError::Unreachable { states }) => assert_eq!(states, vec!["2"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stationary_matches_power_iteration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 12;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        let p = DenseMatrix::from_rows(&rows);
        let pi = stationary_distribution(&p, 0).unwrap();
        let mut x = vec![1.0 / n as f64; n];
        for _ in 0..10_000 {
            x = p.vec_mul(&x);
        }
        for (a, b) in pi.iter().zip(&x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn average_cost_trivial_cases() {
        assert_eq!(average_cost_exact(&[0.25, 0.75], &[3.0, 3.0]), 3.0);
        assert_eq!(average_cost_exact(&[0.0, 1.0], &[7.0, 0.0]), 0.0);
    }

    #[test]
    fn constant_costs_give_zero_d_q_and_gradient() {
        let mut c = small();
        // Equal prices, zero premium: every action costs the same.
        for t in [
            &mut c.prices.charge_avail,
            &mut c.prices.charge_unavail,
        ] {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        for t in [
            &mut c.prices.discharge_avail,
            &mut c.prices.discharge_unavail,
        ] {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        c.cost.premium = 0.0;
        c.cost.penalty_uninsured = 0.0;
        c.cost.penalty_insured = 1e-300;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = random_theta(&c, &mut rng);
        let an = MdpAnalysis::new(&c, &theta).unwrap();
        assert!(an.average_cost.abs() < 1e-250);
        assert!(an.differential.iter().all(|v| v.abs() < 1e-250));
        assert!(an.gradient(&theta).max_abs() < 1e-250);
    }

    #[test]
    fn identities_hold_on_random_policies() {
        let c = small();
        let model = ActionModel::build(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let theta = random_theta(&c, &mut rng);
            let an = MdpAnalysis::with_model(model.clone(), &theta).unwrap();
            for i in 0..model.len() {
                let s: f64 = an.transition.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
            assert!((an.stationary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(an.differential[an.anchor()], 0.0);
            let res = bellman_residual(&an.transition, &an.policy_costs, an.average_cost, &an.differential);
            assert!(res <= 1e-10);
            for i in 0..model.len() {
                let mix: f64 = model
                    .mask(i)
                    .iter()
                    .map(|a| an.probabilities[i][a.index()] * an.q[i][a.index()])
                    .sum();
                assert!((mix - an.differential[i]).abs() < 1e-10);
            }
            let g1 = an.gradient(&theta);
            let g2 = an.gradient_direct(&theta);
            assert!(g1.max_abs_diff(&g2) < 1e-10);
            // Shifting one state's row leaves C unchanged.
            for si in 0..g1.num_states() {
                let s = g1.state_at(si);
                let total: f64 = g1.row(&s).iter().sum();
                assert!(total.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let c = small();
        let model = ActionModel::build(&c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let theta = random_theta(&c, &mut rng);
            let exact = gradient_exact(&theta, &c).unwrap();
            let fd = gradient_finite_difference(&theta, &model, 1e-6).unwrap();
            let scale = exact.max_abs().max(1e-8);
            assert!(exact.max_abs_diff(&fd) / scale < 1e-4);
        }
    }

    #[test]
    fn default_instance_is_analysable() {
        let c: EnvConfig<f64> = EnvConfig::default_instance();
        let theta = ParamTable::zeros(&c);
        let an = MdpAnalysis::new(&c, &theta).unwrap();
        assert_eq!(an.model.len(), 6 * 4 * 5);
        assert!(an.average_cost.is_finite());
        let mut buf = Vec::new();
        an.write_csv(Some(&an.gradient(&theta)), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("kind,b,p,coverage,a1,a2,value"));
        assert!(text.contains("\ngrad,"));
    }

    #[test]
    fn unreachable_anchor_is_reported() {
        let mut c = small();
        // Certain consumption: charging only holds the level, so full battery is never regained.
        c.cost.consumption_rate = 1.0;
        let theta = ParamTable::zeros(&c);
        let model = ActionModel::build(&c)
            .unwrap()
            .with_recurrent_state(&PevState::new(3, 1, false))
            .unwrap();
        assert!(matches!(
            MdpAnalysis::with_model(model, &theta),
            Err(AnalysisError::Unreachable { .. })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let c64 = small();
        let c32: EnvConfig<f32> = serde_json::from_str(&serde_json::to_string(&c64).unwrap()).unwrap();
        let t32 = ParamTable::<f32>::zeros(&c32);
        let t64 = ParamTable::<f64>::zeros(&c64);
        let a32 = MdpAnalysis::new(&c32, &t32).unwrap().average_cost;
        let a64 = MdpAnalysis::new(&c64, &t64).unwrap().average_cost;
        assert!((a32 as f64 - a64).abs() < 1e-4);
    }
}
