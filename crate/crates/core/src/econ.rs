//! Expected-utility insurance calculators: the largest premium a risk-averse
//! agent accepts, the self-protection versus insurance choice, and the
//! two-agent interdependent-security (IDS) game.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bisection stops once the bracket is this narrow.
pub const PREMIUM_TOL: f64 = 1e-10;
/// Grid resolution for the self-protection search.
pub const PROTECTION_GRID: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum EconError {
    #[error("utility {utility} is undefined at wealth {wealth}")]
    Domain { utility: String, wealth: f64 },
    #[error("{field} = {value} is out of range ({reason})")]
    Param {
        field: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("loss probability rises from {from} to {to} as spend goes from {at_from} to {at_to}")]
    IncreasingProbability {
        at_from: f64,
        at_to: f64,
        from: f64,
        to: f64,
    },
    #[error("protection curve must start at zero spend with strictly increasing costs")]
    BadCurve,
}

fn check_prob(field: &'static str, value: f64) -> Result<(), EconError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(EconError::Param {
            field,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

fn check_nonneg(field: &'static str, value: f64) -> Result<(), EconError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(EconError::Param {
            field,
            value,
            reason: "must be finite and non-negative",
        })
    }
}

/// Concave, strictly increasing utility of wealth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Utility {
    /// `u(w) = w`, risk neutral.
    Linear,
    /// `u(w) = ln w`, `w > 0`.
    Log,
    /// Constant absolute risk aversion `u(w) = (1 − e^{−a w}) / a`, `a > 0`.
    Exponential { a: f64 },
    /// Constant relative risk aversion `u(w) = w^{1−γ} / (1 − γ)`, `γ > 0`, `γ ≠ 1`, `w > 0`.
    Power { gamma: f64 },
}

impl std::fmt::Display for Utility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Utility::Linear => write!(f, "linear"),
            Utility::Log => write!(f, "log"),
            Utility::Exponential { a } => write!(f, "exponential(a={a})"),
            Utility::Power { gamma } => write!(f, "power(gamma={gamma})"),
        }
    }
}

impl Utility {
    pub fn validate(&self) -> Result<(), EconError> {
        match *self {
            Utility::Exponential { a } if !(a > 0.0 && a.is_finite()) => Err(EconError::Param {
                field: "a",
                value: a,
                reason: "absolute risk aversion must be positive",
            }),
            Utility::Power { gamma } if !(gamma > 0.0 && gamma.is_finite()) || gamma == 1.0 => {
                Err(EconError::Param {
                    field: "gamma",
                    value: gamma,
                    reason: "relative risk aversion must be positive and not 1 (use log)",
                })
            }
            _ => Ok(()),
        }
    }

    pub fn in_domain(&self, w: f64) -> bool {
        match self {
            Utility::Linear | Utility::Exponential { .. } => w.is_finite(),
            Utility::Log | Utility::Power { .. } => w > 0.0 && w.is_finite(),
        }
    }

    pub fn eval(&self, w: f64) -> Result<f64, EconError> {
        if !self.in_domain(w) {
            return Err(EconError::Domain {
                utility: self.to_string(),
                wealth: w,
            });
        }
        Ok(self.eval_unchecked(w))
    }

    fn eval_unchecked(&self, w: f64) -> f64 {
        match *self {
            Utility::Linear => w,
            Utility::Log => w.ln(),
            Utility::Exponential { a } => -(-a * w).exp_m1() / a,
            Utility::Power { gamma } => w.powf(1.0 - gamma) / (1.0 - gamma),
        }
    }

    /// Whether the accepted premium is independent of initial wealth.
    pub fn wealth_free(&self) -> bool {
        matches!(self, Utility::Linear | Utility::Exponential { .. })
    }
}

/// `m = pl + π`: the fair premium (expected loss) plus the risk premium.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PremiumDecomposition {
    pub premium: f64,
    pub fair_premium: f64,
    pub risk_premium: f64,
}

/// Largest premium `m` with `u(w0 − m) = p·u(w0 − l) + (1 − p)·u(w0)`.
pub fn max_acceptable_premium(u: &Utility, w0: f64, l: f64, p: f64) -> Result<PremiumDecomposition, EconError> {
    u.validate()?;
    check_prob("p", p)?;
    check_nonneg("l", l)?;
    let worst = u.eval(w0 - l)?;
    let best = u.eval(w0)?;
    let fair = p * l;
    let premium = if p == 0.0 || l == 0.0 {
        0.0
    } else if p == 1.0 {
        l
    } else if *u == Utility::Linear {
        // Risk neutral: the equation is linear in m.
        fair
    } else {
        let target = p * worst + (1.0 - p) * best;
        // u(w0 − m) − target falls from ≥ 0 at m = 0 to ≤ 0 at m = l.
        let (mut lo, mut hi) = (0.0, l);
        while hi - lo > PREMIUM_TOL * 1e-2 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if u.eval_unchecked(w0 - mid) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(PremiumDecomposition {
        premium,
        fair_premium: fair,
        risk_premium: premium - fair,
    })
}

/// Risk premium `π[x] = m(x) − x·l` at loss probability `x`.
pub fn risk_premium(u: &Utility, w0: f64, l: f64, x: f64) -> Result<f64, EconError> {
    Ok(max_acceptable_premium(u, w0, l, x)?.risk_premium)
}

/// Step function `p[c]`: the loss probability after spending `c` is the value
/// at the last breakpoint not above `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectionCurve {
    /// `(spend, loss probability)`, spends strictly increasing from 0.
    pub breakpoints: Vec<(f64, f64)>,
}

impl ProtectionCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, EconError> {
        let c = Self { breakpoints };
        c.validate()?;
        Ok(c)
    }

    pub fn constant(p: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, p)],
        }
    }

    pub fn validate(&self) -> Result<(), EconError> {
        match self.breakpoints.first() {
            Some(&(0.0, _)) => {}
            _ => return Err(EconError::BadCurve),
        }
        for &(c, p) in &self.breakpoints {
            check_nonneg("spend", c)?;
            check_prob("p[c]", p)?;
        }
        for w in self.breakpoints.windows(2) {
            let ((c0, p0), (c1, p1)) = (w[0], w[1]);
            if c1 <= c0 {
                return Err(EconError::BadCurve);
            }
            if p1 > p0 {
                return Err(EconError::IncreasingProbability {
                    at_from: c0,
                    at_to: c1,
                    from: p0,
                    to: p1,
                });
            }
        }
        Ok(())
    }

    pub fn probability(&self, c: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&(b, _)| b <= c);
        self.breakpoints[k.saturating_sub(1)].1
    }

    pub fn max_spend(&self) -> f64 {
        self.breakpoints.last().map_or(0.0, |b| b.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "choice", rename_all = "snake_case")]
pub enum ProtectionChoice {
    DoNothing,
    SelfProtect { spend: f64 },
    Insure { price: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtectionDecision {
    /// Utility-maximizing self-protection spend `c*`.
    pub best_spend: f64,
    /// `f(c*)`.
    pub best_value: f64,
    /// `f(0)`.
    pub unprotected_value: f64,
    /// Expected utility of the chosen option.
    pub chosen_value: f64,
    pub choice: ProtectionChoice,
}

/// `f(c) = p[c]·u(w0 − l − c) + (1 − p[c])·u(w0 − c)`.
pub fn protection_utility(u: &Utility, w0: f64, l: f64, curve: &ProtectionCurve, c: f64) -> Result<f64, EconError> {
    let p = curve.probability(c);
    // Outcomes with zero weight need not lie in the utility's domain.
    let loss = if p > 0.0 { p * u.eval(w0 - l - c)? } else { 0.0 };
    let safe = if p < 1.0 { (1.0 - p) * u.eval(w0 - c)? } else { 0.0 };
    Ok(loss + safe)
}

/// Maximizes `f(c)` over `[0, max breakpoint]` on a dense grid plus every
/// breakpoint (between breakpoints `f` only falls, so the breakpoints are the
/// exact refinement). With an insurance price, full cover at that price joins
/// the comparison; ties go to the smaller outlay.
pub fn self_protection_decision(
    u: &Utility,
    w0: f64,
    l: f64,
    curve: &ProtectionCurve,
    insurance_price: Option<f64>,
) -> Result<ProtectionDecision, EconError> {
    u.validate()?;
    curve.validate()?;
    check_nonneg("l", l)?;
    let c_max = curve.max_spend();
    let mut candidates: Vec<f64> = (0..=PROTECTION_GRID)
        .map(|k| c_max * k as f64 / PROTECTION_GRID as f64)
        .chain(curve.breakpoints.iter().map(|b| b.0))
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let mut best = (0.0, protection_utility(u, w0, l, curve, 0.0)?);
    let unprotected_value = best.1;
    for &c in &candidates[1..] {
        let v = protection_utility(u, w0, l, curve, c)?;
        if v > best.1 {
            best = (c, v);
        }
    }
    let (best_spend, best_value) = best;
    let mut options = vec![(0.0, unprotected_value, ProtectionChoice::DoNothing)];
    if best_spend > 0.0 {
        options.push((best_spend, best_value, ProtectionChoice::SelfProtect { spend: best_spend }));
    }
    if let Some(price) = insurance_price {
        check_nonneg("insurance_price", price)?;
        options.push((price, u.eval(w0 - price)?, ProtectionChoice::Insure { price }));
    }
    let (_, chosen_value, choice) = options
        .into_iter()
        .reduce(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("at least one option");
    Ok(ProtectionDecision {
        best_spend,
        best_value,
        unprotected_value,
        chosen_value,
        choice,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Invest in self-protection.
    S,
    /// No protection.
    N,
}

impl Strategy {
    pub const BOTH: [Strategy; 2] = [Strategy::S, Strategy::N];

    fn index(self) -> usize {
        match self {
            Strategy::S => 0,
            Strategy::N => 1,
        }
    }
}

/// Two symmetric agents: direct loss with probability `p`, contagion from an
/// unprotected neighbour with probability `q`, protection costs `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsInstance {
    pub p: f64,
    pub q: f64,
    pub l: f64,
    pub c: f64,
    pub w0: f64,
    pub utility: Utility,
}

impl IdsInstance {
    pub fn validate(&self) -> Result<(), EconError> {
        check_prob("p", self.p)?;
        check_prob("q", self.q)?;
        check_nonneg("l", self.l)?;
        check_nonneg("c", self.c)?;
        self.utility.validate()?;
        self.utility.eval(self.w0 - self.l - self.c)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsThresholds {
    /// `c1 = pl + π[p]`.
    pub c1: f64,
    /// `c2 = p(1 − pq)l + π[p + (1 − p)pq] − π[pq]`.
    pub c2: f64,
}

pub fn ids_thresholds(inst: &IdsInstance) -> Result<IdsThresholds, EconError> {
    let IdsInstance { p, q, l, w0, utility: u, .. } = *inst;
    check_prob("p", p)?;
    check_prob("q", q)?;
    let pq = p * q;
    let c1 = p * l + risk_premium(&u, w0, l, p)?;
    let c2 = p * (1.0 - pq) * l + risk_premium(&u, w0, l, p + (1.0 - p) * pq)? - risk_premium(&u, w0, l, pq)?;
    Ok(IdsThresholds { c1, c2 })
}

/// Row player's expected utility, indexed `[own][other]`.
pub fn payoff_matrix(inst: &IdsInstance) -> Result<[[f64; 2]; 2], EconError> {
    inst.validate()?;
    let IdsInstance { p, q, l, c, w0, utility: u } = *inst;
    let pq = p * q;
    let ss = u.eval(w0 - c)?;
    let sn = (1.0 - pq) * u.eval(w0 - c)? + pq * u.eval(w0 - c - l)?;
    let ns = (1.0 - p) * u.eval(w0)? + p * u.eval(w0 - l)?;
    let nn = p * u.eval(w0 - l)? + (1.0 - p) * (pq * u.eval(w0 - l)? + (1.0 - pq) * u.eval(w0)?);
    Ok([[ss, sn], [ns, nn]])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsOutcome {
    pub thresholds: IdsThresholds,
    /// Pure equilibria `(agent 1, agent 2)`, sorted.
    pub equilibria: Vec<(Strategy, Strategy)>,
    /// `c` sits on `c1` or `c2` (relative tolerance `1e-9`), where the
    /// threshold rule and enumeration may legitimately disagree.
    pub boundary: bool,
}

/// Pure Nash equilibria by best-response enumeration over the payoff matrix.
pub fn ids_equilibria(inst: &IdsInstance) -> Result<IdsOutcome, EconError> {
    let m = payoff_matrix(inst)?;
    let thresholds = ids_thresholds(inst)?;
    let pay = |own: Strategy, other: Strategy| m[own.index()][other.index()];
    let best_reply = |own: Strategy, other: Strategy| Strategy::BOTH.iter().all(|&alt| pay(own, other) >= pay(alt, other));
    let mut equilibria = Vec::new();
    for a in Strategy::BOTH {
        for b in Strategy::BOTH {
            if best_reply(a, b) && best_reply(b, a) {
                equilibria.push((a, b));
            }
        }
    }
    equilibria.sort();
    let near = |t: f64| (inst.c - t).abs() <= 1e-9 * inst.c.abs().max(t.abs()).max(1.0);
    Ok(IdsOutcome {
        thresholds,
        equilibria,
        boundary: near(thresholds.c1) || near(thresholds.c2),
    })
}

/// The threshold rule: `c ≤ c2` → (S,S); `c2 < c ≤ c1` → (S,S) and (N,N);
/// `c > c1` → (N,N). Exact for wealth-free utilities (linear, exponential);
/// otherwise the protected agent's smaller wealth shifts the (N,N) boundary.
pub fn threshold_classification(c: f64, t: &IdsThresholds) -> Vec<(Strategy, Strategy)> {
    use Strategy::*;
    if c <= t.c2 {
        vec![(S, S)]
    } else if c <= t.c1 {
        vec![(S, S), (N, N)]
    } else {
        vec![(N, N)]
    }
}
