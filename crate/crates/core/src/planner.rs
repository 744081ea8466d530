//! Parameter planning: concentration bounds, error coefficients, the
//! convergence-condition checker and the per-estimator parameter rules.
//!
//! Batch sizes are the smallest integers satisfying each condition with the
//! error coefficients evaluated at confidence `Δ/2`:
//!
//! | size | governing condition | closed form |
//! |------|---------------------|-------------|
//! | `A`  | `γ₀ ≤ ε/(625 l_f M)` | `(2σ_g·625 l_f M/ε)²·L₁` |
//! | `B`  | `λ₀² ≤ L_g ε/(475 l_f M)` | `4σ'²·475 l_f M·L₂/(L_g ε)` |
//! | `a`  | `τ²γ₁² ≤ L_g ε/(675 l_f M)` | `τ²·16 l̂²·675 l_f M·L₁/(L_g ε)` |
//! | `a`  | `τ²γ₂ ≤ 6L_g/25` (corrected) | `(τ²·2L̂·25/(6L_g))²·L₁` |
//! | `b`  | `τ²λ₁² ≤ 6L_g²/19` | `τ²·16 L̂²·19·L₂/(6L_g²)` |
//!
//! with `L₁ = ln(4(m+1)Σ/Δ)` and `L₂ = ln(4(m+n)Σ/Δ)`. Every size is also
//! raised to the admissibility floor `(4/9)·L`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::composite::{phi_value, CompositeProblem, LipschitzConstants};
use crate::error::{Error, Result};
use crate::estimators::{BatchPlan, EstimatorKind};
use crate::sampling::{Channel, RngStream};

/// Largest batch size the planner will emit.
pub const MAX_BATCH: f64 = 4.0e18;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernsteinBound {
    pub bound: f64,
    pub n_min: u64,
    /// `n ≥ n_min`, so the bound holds with probability `1 − δ`.
    pub valid: bool,
}

/// `‖(1/n)ΣX_k‖ ≤ (2L/√n)·√ln((d₁+d₂)/δ)` for independent, centred, `L`-bounded
/// `d₁ × d₂` matrices, valid once `n ≥ (4/9)·ln((d₁+d₂)/δ)`.
pub fn bernstein_bound(l: f64, n: u64, d1: usize, d2: usize, delta: f64) -> Result<BernsteinBound> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidSpec(format!("δ = {delta} is outside (0,1)")));
    }
    if !(l >= 0.0) || n == 0 || d1 == 0 || d2 == 0 {
        return Err(Error::InvalidSpec(
            "need L ≥ 0 and positive n, d1, d2".into(),
        ));
    }
    let log = ((d1 + d2) as f64 / delta).ln();
    let n_min = (4.0 / 9.0 * log).ceil().max(1.0) as u64;
    Ok(BernsteinBound {
        bound: 2.0 * l / (n as f64).sqrt() * log.sqrt(),
        n_min,
        valid: n >= n_min,
    })
}

/// `P(S ≤ E[S] − t) ≤ exp(−2t²/Σ(bᵢ−aᵢ)²)` for independent `Xᵢ ∈ [aᵢ, bᵢ]`.
pub fn hoeffding_tail(ranges: &[(f64, f64)], t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidSpec("t must be nonnegative".into()));
    }
    if ranges.iter().any(|&(a, b)| !(a <= b)) {
        return Err(Error::InvalidSpec("every range needs a ≤ b".into()));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    if ranges.is_empty() {
        return Err(Error::InvalidSpec("no ranges given for t > 0".into()));
    }
    let width: f64 = ranges.iter().map(|&(a, b)| (b - a) * (b - a)).sum();
    if width == 0.0 {
        return Ok(0.0);
    }
    Ok((-2.0 * t * t / width).exp().min(1.0))
}

/// Coefficients of the high-probability error envelope
/// `‖g̃ − g(x)‖ ≤ γ₀ + γ₁‖x − x₀‖ + γ₂‖x − x₀‖²`, `‖J̃ − g'(x)‖ ≤ λ₀ + λ₁‖x − x₀‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCoeffs {
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub admissible: bool,
    /// Smallest `batch − floor` over the batches the estimator uses.
    pub admissibility_margin: f64,
}

impl ErrorCoeffs {
    pub fn value_envelope(&self, dist: f64) -> f64 {
        self.gamma0 + self.gamma1 * dist + self.gamma2 * dist * dist
    }

    pub fn jacobian_envelope(&self, dist: f64) -> f64 {
        self.lambda0 + self.lambda1 * dist
    }
}

/// `(ln(2(m+1)Σ/Δ), ln(2(m+n)Σ/Δ))`.
pub fn log_factors(m: usize, n: usize, sigma_tau: u64, delta: f64) -> (f64, f64) {
    let s = sigma_tau as f64;
    (
        (2.0 * (m as f64 + 1.0) * s / delta).ln(),
        (2.0 * (m + n) as f64 * s / delta).ln(),
    )
}

fn scaled(c: f64, log: f64, batch: u64) -> f64 {
    if c == 0.0 {
        0.0
    } else {
        c * (log / batch as f64).sqrt()
    }
}

/// Error coefficients of `kind` with batch sizes `plan` at confidence `Δ`.
pub fn error_coeffs(
    kind: EstimatorKind,
    plan: &BatchPlan,
    sigma_tau: u64,
    delta: f64,
    c: &LipschitzConstants,
    dims: (usize, usize),
) -> ErrorCoeffs {
    let (m, n) = dims;
    let (lg, lj) = log_factors(m, n, sigma_tau.max(1), delta);
    let floor_g = 4.0 / 9.0 * lg;
    let floor_j = 4.0 / 9.0 * lj;
    let gamma0 = scaled(2.0 * c.sigma_g, lg, plan.big_a);
    let lambda0 = scaled(2.0 * c.sigma_gprime, lj, plan.big_b);
    let gamma1_std = scaled(4.0 * c.lhat_g, lg, plan.small_a);
    let gamma2 = scaled(2.0 * c.big_lhat_g, lg, plan.small_a);
    let lambda1 = scaled(4.0 * c.big_lhat_g, lj, plan.small_b);
    let margins = |uses: &[(u64, f64)]| {
        uses.iter()
            .map(|&(s, f)| s as f64 - f)
            .fold(f64::INFINITY, f64::min)
    };
    let (a, b, sa, sb) = (
        (plan.big_a, floor_g),
        (plan.big_b, floor_j),
        (plan.small_a, floor_g),
        (plan.small_b, floor_j),
    );
    let (coeffs, margin) = match kind {
        EstimatorKind::Est0MiniBatch => ((gamma0, 0.0, 0.0, lambda0, 0.0), margins(&[a, b])),
        EstimatorKind::Est1StandardVr => (
            (gamma0, gamma1_std, 0.0, lambda0, lambda1),
            margins(&[a, b, sa, sb]),
        ),
        EstimatorKind::Est2CorrectedVr => (
            (gamma0, lambda0, gamma2, lambda0, lambda1),
            margins(&[a, b, sa, sb]),
        ),
        EstimatorKind::Est3ExactAnchorStandard => {
            ((0.0, gamma1_std, 0.0, 0.0, lambda1), margins(&[sa, sb]))
        }
        EstimatorKind::Est4ExactAnchorCorrected => {
            ((0.0, 0.0, gamma2, 0.0, lambda1), margins(&[sa, sb]))
        }
    };
    ErrorCoeffs {
        gamma0: coeffs.0,
        gamma1: coeffs.1,
        gamma2: coeffs.2,
        lambda0: coeffs.3,
        lambda1: coeffs.4,
        admissible: margin >= 0.0,
        admissibility_margin: margin,
    }
}

/// Distribution of randomized epoch lengths, supported on `{1, …, τ₊}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum EpochDistribution {
    /// `τ ≡ τ₊`.
    Degenerate { tau_plus: u64 },
    /// Uniform on `{1, …, τ₊}`.
    Uniform { tau_plus: u64 },
}

impl EpochDistribution {
    pub fn tau_plus(&self) -> u64 {
        match *self {
            Self::Degenerate { tau_plus } | Self::Uniform { tau_plus } => tau_plus,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Degenerate { tau_plus } => tau_plus as f64,
            Self::Uniform { tau_plus } => (tau_plus as f64 + 1.0) / 2.0,
        }
    }

    /// `C_τ` with `C_τ·μ_τ ≥ τ₊`.
    pub fn c_tau(&self) -> f64 {
        match self {
            Self::Degenerate { .. } => 1.0,
            Self::Uniform { .. } => 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_plus() == 0 {
            return Err(Error::InvalidSpec("τ₊ must be positive".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            Self::Degenerate { tau_plus } => tau_plus,
            Self::Uniform { tau_plus } => rng.random_range(1..=tau_plus),
        }
    }

    /// `⌈2C_τS/τ₊⌉`, exceeded by `K` with probability at most [`Self::k_tail_bound`].
    pub fn k_tail_threshold(&self, s_tau: u64) -> u64 {
        (2.0 * self.c_tau() * s_tau as f64 / self.tau_plus() as f64).ceil() as u64
    }

    /// `exp(−S/(C_τ τ₊))`.
    pub fn k_tail_bound(&self, s_tau: u64) -> f64 {
        (-(s_tau as f64) / (self.c_tau() * self.tau_plus() as f64)).exp()
    }
}

/// Draw `τ₀, τ₁, …` until the partial sum reaches `S_τ`; returns the lengths (`K = len`).
pub fn draw_epochs(s_tau: u64, dist: &EpochDistribution, stream: &RngStream) -> Result<Vec<u64>> {
    dist.validate()?;
    if s_tau == 0 {
        return Err(Error::InvalidSpec("S_τ must be positive".into()));
    }
    let mut rng = stream.rng(Channel::Epochs, 0, 0);
    let mut taus = Vec::new();
    let mut total = 0;
    while total < s_tau {
        let t = dist.sample(&mut rng);
        total += t;
        taus.push(t);
    }
    Ok(taus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSchedule {
    Fixed {
        tau: u64,
    },
    Randomized {
        s_tau: u64,
        distribution: EpochDistribution,
    },
}

impl TauSchedule {
    pub fn tau_max(&self) -> u64 {
        match self {
            Self::Fixed { tau } => *tau,
            Self::Randomized { distribution, .. } => distribution.tau_plus(),
        }
    }
}

/// Which parameter rule produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    MiniBatch,
    StandardVrOptimum,
    CorrectedVrEvaluationOptimum,
    CorrectedVrJacobianOptimum,
    ExactAnchorStandardOptimum,
    ExactAnchorCorrectedOptimum,
    RandomizedEpochs,
    TauOverride,
    Explicit,
}

/// Multipliers on the threshold-inverted sizes (`Σ`, `A`, `B`, `a`, `b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantOverrides {
    #[serde(rename = "C_Sigma")]
    pub c_sigma: f64,
    #[serde(rename = "C_A")]
    pub c_big_a: f64,
    #[serde(rename = "C_B")]
    pub c_big_b: f64,
    #[serde(rename = "C_a")]
    pub c_small_a: f64,
    #[serde(rename = "C_b")]
    pub c_small_b: f64,
}

impl Default for ConstantOverrides {
    fn default() -> Self {
        Self {
            c_sigma: 1.0,
            c_big_a: 1.0,
            c_big_b: 1.0,
            c_small_a: 1.0,
            c_small_b: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPlan {
    pub estimator: EstimatorKind,
    #[serde(rename = "M")]
    pub big_m: f64,
    /// Epoch count; for randomized schedules `⌈S_τ/μ_τ⌉`, the realized count comes from [`draw_epochs`].
    #[serde(rename = "K")]
    pub k: u64,
    pub tau_schedule: TauSchedule,
    pub batch_plan: BatchPlan,
    pub eps_bar: f64,
    pub delta_bar: f64,
    pub target_eps: f64,
    #[serde(rename = "target_Delta")]
    pub target_delta: f64,
    pub provenance: Provenance,
    #[serde(default)]
    pub constant_overrides: ConstantOverrides,
}

impl ParamPlan {
    /// Total iterations `Σ_τ` (randomized: its upper bound `S_τ + τ₊`).
    pub fn sigma_tau(&self) -> u64 {
        match self.tau_schedule {
            TauSchedule::Fixed { tau } => self.k * tau,
            TauSchedule::Randomized {
                s_tau,
                distribution,
            } => s_tau + distribution.tau_plus(),
        }
    }

    /// Lower bound on `Σ_τ` used by the iteration-count condition.
    pub fn sigma_tau_min(&self) -> u64 {
        match self.tau_schedule {
            TauSchedule::Fixed { tau } => self.k * tau,
            TauSchedule::Randomized { s_tau, .. } => s_tau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.batch_plan.validate()?;
        let ok = self.big_m > 0.0
            && self.big_m.is_finite()
            && self.k >= 1
            && self.tau_schedule.tau_max() >= 1
            && self.eps_bar >= 0.0
            && self.delta_bar > 0.0
            && self.delta_bar < 1.0
            && self.target_eps > 0.0
            && self.target_delta > 0.0
            && self.target_delta < 1.0;
        if !ok {
            return Err(Error::InvalidSpec("plan fields out of range".into()));
        }
        if let TauSchedule::Randomized {
            s_tau,
            distribution,
        } = self.tau_schedule
        {
            distribution.validate()?;
            if s_tau == 0 {
                return Err(Error::InvalidSpec("S_τ must be positive".into()));
            }
        }
        Ok(())
    }
}

pub const COND_M: &str = "M > 5·l_f·L_g";
pub const COND_ADMISSIBLE: &str = "θ ∈ 𝒞(K,τ,Δ/2)";
pub const COND_DELTA_BAR: &str = "δ̄ ≤ Δ/(2Σ_τ)";
pub const COND_EPS_BAR: &str = "ε̄ ≤ ε/(150M)";
pub const COND_SIGMA: &str = "Σ_τ ≥ 150M·gap/ε";
pub const COND_GAMMA0: &str = "γ₀ ≤ ε/(625·l_f·M)";
pub const COND_LAMBDA0: &str = "λ₀² ≤ L_g·ε/(475·l_f·M)";
pub const COND_GAMMA1: &str = "τ²γ₁² ≤ L_g·ε/(675·l_f·M)";
pub const COND_GAMMA2: &str = "τ²γ₂ ≤ 6L_g/25";
pub const COND_LAMBDA1: &str = "τ²λ₁² ≤ 6L_g²/19";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionMargin {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs` (`lhs − rhs` for lower bounds); nonnegative iff the condition holds.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pass: bool,
    pub admissible: bool,
    pub margins: Vec<ConditionMargin>,
}

impl ConditionReport {
    pub fn failing(&self) -> impl Iterator<Item = &ConditionMargin> {
        self.margins.iter().filter(|c| !c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ConditionMargin> {
        self.margins.iter().find(|c| c.name == name)
    }
}

fn upper(name: &str, lhs: f64, rhs: f64) -> ConditionMargin {
    ConditionMargin {
        name: name.to_string(),
        lhs,
        rhs,
        margin: rhs - lhs,
        pass: lhs <= rhs,
    }
}

/// Evaluate the strict `M` condition and the nine convergence conditions.
///
/// `coeffs` must be evaluated at confidence `Δ/2`.
pub fn check_conditions(
    plan: &ParamPlan,
    coeffs: &ErrorCoeffs,
    constants: &LipschitzConstants,
    phi_gap: f64,
) -> ConditionReport {
    let c = constants;
    let m = plan.big_m;
    let eps = plan.target_eps;
    let tau2 = (plan.tau_schedule.tau_max() as f64).powi(2);
    let sigma = plan.sigma_tau() as f64;
    let sigma_min = plan.sigma_tau_min() as f64;
    let m_floor = 5.0 * c.l_f * c.big_l_g;
    let sigma_need = 150.0 * m * phi_gap / eps;
    let margins = vec![
        ConditionMargin {
            name: COND_M.into(),
            lhs: m,
            rhs: m_floor,
            margin: m - m_floor,
            pass: m > m_floor,
        },
        ConditionMargin {
            name: COND_ADMISSIBLE.into(),
            lhs: coeffs.admissibility_margin,
            rhs: 0.0,
            margin: coeffs.admissibility_margin,
            pass: coeffs.admissible,
        },
        upper(
            COND_DELTA_BAR,
            plan.delta_bar,
            plan.target_delta / (2.0 * sigma),
        ),
        upper(COND_EPS_BAR, plan.eps_bar, eps / (150.0 * m)),
        ConditionMargin {
            name: COND_SIGMA.into(),
            lhs: sigma_min,
            rhs: sigma_need,
            margin: sigma_min - sigma_need,
            pass: sigma_min >= sigma_need,
        },
        upper(COND_GAMMA0, coeffs.gamma0, eps / (625.0 * c.l_f * m)),
        upper(
            COND_LAMBDA0,
            coeffs.lambda0.powi(2),
            c.big_l_g * eps / (475.0 * c.l_f * m),
        ),
        upper(
            COND_GAMMA1,
            tau2 * coeffs.gamma1.powi(2),
            c.big_l_g * eps / (675.0 * c.l_f * m),
        ),
        upper(COND_GAMMA2, tau2 * coeffs.gamma2, 6.0 * c.big_l_g / 25.0),
        upper(
            COND_LAMBDA1,
            tau2 * coeffs.lambda1.powi(2),
            6.0 * c.big_l_g.powi(2) / 19.0,
        ),
    ];
    ConditionReport {
        pass: margins.iter().all(|c| c.pass),
        admissible: coeffs.admissible,
        margins,
    }
}

/// `Φ(x₀) − Φ_lower` for the problem's start point.
pub fn phi_gap(problem: &CompositeProblem) -> Result<f64> {
    let phi0 = phi_value(problem, &problem.initial_point)?;
    if !phi0.is_finite() {
        return Err(Error::InvalidSpec(
            "Φ is infinite at the initial point".into(),
        ));
    }
    Ok((phi0 - problem.phi_lower_bound).max(0.0))
}

/// Coefficients at `Δ/2` and the full condition report for `plan` on `problem`.
pub fn validate_plan(plan: &ParamPlan, problem: &CompositeProblem) -> Result<ConditionReport> {
    plan.validate()?;
    let coeffs = error_coeffs(
        plan.estimator,
        &plan.batch_plan,
        plan.sigma_tau(),
        plan.target_delta / 2.0,
        &problem.constants,
        (problem.dim_m, problem.dim_n),
    );
    Ok(check_conditions(
        plan,
        &coeffs,
        &problem.constants,
        phi_gap(problem)?,
    ))
}

/// Which optimum the corrected estimator targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectedTarget {
    #[default]
    Evaluations,
    Jacobians,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochChoice {
    #[default]
    Fixed,
    Degenerate,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanOptions {
    #[serde(default)]
    pub tau_override: Option<u64>,
    #[serde(default)]
    pub corrected_target: CorrectedTarget,
    #[serde(default)]
    pub epochs: EpochChoice,
    #[serde(default)]
    pub overrides: ConstantOverrides,
}

/// The epoch-length rule of each estimator, before any override.
pub fn tau_rule(
    kind: EstimatorKind,
    eps: f64,
    population: Option<usize>,
    target: CorrectedTarget,
) -> Result<(u64, Provenance)> {
    let (raw, rule, prov) = match kind {
        EstimatorKind::Est0MiniBatch => (1.0, "τ = 1", Provenance::MiniBatch),
        EstimatorKind::Est1StandardVr => (
            eps.powf(-1.0 / 3.0),
            "τ = ⌈ε^(-1/3)⌉",
            Provenance::StandardVrOptimum,
        ),
        EstimatorKind::Est2CorrectedVr => match target {
            CorrectedTarget::Evaluations => (
                eps.powf(-2.0 / 5.0),
                "τ = ⌈ε^(-2/5)⌉",
                Provenance::CorrectedVrEvaluationOptimum,
            ),
            CorrectedTarget::Jacobians => (1.0, "τ = 1", Provenance::CorrectedVrJacobianOptimum),
        },
        EstimatorKind::Est3ExactAnchorStandard => {
            let n = population
                .ok_or_else(|| Error::Unsupported("Est3 needs a finite-sum population".into()))?;
            (
                (n as f64 * eps).cbrt().max(1.0),
                "τ = ⌈max{1,(Nε)^(1/3)}⌉",
                Provenance::ExactAnchorStandardOptimum,
            )
        }
        EstimatorKind::Est4ExactAnchorCorrected => {
            let n = population
                .ok_or_else(|| Error::Unsupported("Est4 needs a finite-sum population".into()))?;
            (
                (n as f64).powf(0.2),
                "τ = ⌈N^(1/5)⌉",
                Provenance::ExactAnchorCorrectedOptimum,
            )
        }
    };
    if !(raw >= 1.0) || !raw.is_finite() {
        return Err(Error::Infeasible {
            rule,
            message: format!("ε = {eps} gives {raw:.4} < 1; the rule needs a smaller ε"),
        });
    }
    // absorb round-off such as 1000^(1/3) = 9.999999999999998
    let near = raw.round();
    let tau = if (raw - near).abs() <= 1e-9 * near {
        near
    } else {
        raw.ceil()
    };
    Ok((tau as u64, prov))
}

/// Plan with the estimator's optimized τ rule (or `tau_override`).
pub fn plan(
    kind: EstimatorKind,
    problem: &CompositeProblem,
    eps: f64,
    delta: f64,
    big_m: f64,
    tau_override: Option<u64>,
) -> Result<ParamPlan> {
    plan_with(
        kind,
        problem,
        eps,
        delta,
        big_m,
        PlanOptions {
            tau_override,
            ..PlanOptions::default()
        },
    )
}

fn size(raw: f64, mult: f64, floor: f64, rule: &'static str) -> Result<u64> {
    let v = (raw * mult).max(floor).max(1.0).ceil();
    if !v.is_finite() || v > MAX_BATCH {
        return Err(Error::Infeasible {
            rule,
            message: format!("required batch size {v:e} is not representable"),
        });
    }
    Ok(v as u64)
}

/// Plan with explicit options.
pub fn plan_with(
    kind: EstimatorKind,
    problem: &CompositeProblem,
    eps: f64,
    delta: f64,
    big_m: f64,
    opts: PlanOptions,
) -> Result<ParamPlan> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidSpec("ε must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidSpec("Δ must lie in (0,1)".into()));
    }
    let c = problem.constants;
    if !(big_m > 5.0 * c.l_f * c.big_l_g) || !big_m.is_finite() {
        return Err(Error::Infeasible {
            rule: COND_M,
            message: format!("M = {big_m} but 5·l_f·L_g = {}", 5.0 * c.l_f * c.big_l_g),
        });
    }
    let population = problem.is_finite_sum().then(|| problem.population_size());
    let (mut tau, mut provenance) = tau_rule(kind, eps, population, opts.corrected_target)?;
    if let Some(t) = opts.tau_override {
        if t == 0 {
            return Err(Error::InvalidSpec("τ override must be positive".into()));
        }
        tau = t;
        provenance = Provenance::TauOverride;
    }
    if kind == EstimatorKind::Est0MiniBatch {
        tau = 1;
    }
    let ov = opts.overrides;
    let gap = phi_gap(problem)?;
    let s = (ov.c_sigma * 150.0 * big_m * gap / eps).ceil().max(1.0);
    if s > MAX_BATCH {
        return Err(Error::Infeasible {
            rule: COND_SIGMA,
            message: format!("{s:e} iterations required"),
        });
    }
    let s = s as u64;
    let (k, schedule, sigma_for_logs) = match opts.epochs {
        EpochChoice::Fixed => {
            let k = s.div_ceil(tau);
            (k, TauSchedule::Fixed { tau }, k * tau)
        }
        EpochChoice::Degenerate | EpochChoice::Uniform => {
            if kind == EstimatorKind::Est0MiniBatch {
                return Err(Error::InvalidSpec(
                    "randomized epochs need an anchored estimator".into(),
                ));
            }
            let distribution = if opts.epochs == EpochChoice::Uniform {
                EpochDistribution::Uniform { tau_plus: tau }
            } else {
                EpochDistribution::Degenerate { tau_plus: tau }
            };
            if opts.tau_override.is_none() {
                provenance = Provenance::RandomizedEpochs;
            }
            let k = (s as f64 / distribution.mean()).ceil() as u64;
            (
                k,
                TauSchedule::Randomized {
                    s_tau: s,
                    distribution,
                },
                s + tau,
            )
        }
    };

    let (m, n) = (problem.dim_m, problem.dim_n);
    let (lg, lj) = log_factors(m, n, sigma_for_logs, delta / 2.0);
    let floor_g = 4.0 / 9.0 * lg;
    let floor_j = 4.0 / 9.0 * lj;
    let (l_f, big_lg) = (c.l_f, c.big_l_g);
    let t2 = (tau as f64).powi(2);

    let a_gamma0 = (2.0 * c.sigma_g * 625.0 * l_f * big_m / eps).powi(2) * lg;
    let b_lambda0 = 4.0 * c.sigma_gprime.powi(2) * lj * 475.0 * l_f * big_m / (big_lg * eps);
    let b_gamma1 = t2 * 4.0 * c.sigma_gprime.powi(2) * lj * 675.0 * l_f * big_m / (big_lg * eps);
    let a_gamma1 = t2 * 16.0 * c.lhat_g.powi(2) * lg * 675.0 * l_f * big_m / (big_lg * eps);
    let a_gamma2 = (t2 * 2.0 * c.big_lhat_g * 25.0 / (6.0 * big_lg)).powi(2) * lg;
    let b_lambda1 = t2 * 16.0 * c.big_lhat_g.powi(2) * lj * 19.0 / (6.0 * big_lg.powi(2));
    let zero = |v: f64| if v.is_nan() { 0.0 } else { v };
    let (a_gamma0, b_lambda0, b_gamma1, a_gamma1, a_gamma2, b_lambda1) = (
        zero(a_gamma0),
        zero(b_lambda0),
        zero(b_gamma1),
        zero(a_gamma1),
        zero(a_gamma2),
        zero(b_lambda1),
    );

    let big_n = population.unwrap_or(1) as u64;
    let mut batch = match kind {
        EstimatorKind::Est0MiniBatch => BatchPlan::new(
            size(a_gamma0, ov.c_big_a, floor_g, COND_GAMMA0)?,
            size(b_lambda0, ov.c_big_b, floor_j, COND_LAMBDA0)?,
            1,
            1,
        ),
        EstimatorKind::Est1StandardVr => BatchPlan::new(
            size(a_gamma0, ov.c_big_a, floor_g, COND_GAMMA0)?,
            size(b_lambda0, ov.c_big_b, floor_j, COND_LAMBDA0)?,
            size(a_gamma1, ov.c_small_a, floor_g, COND_GAMMA1)?,
            size(b_lambda1, ov.c_small_b, floor_j, COND_LAMBDA1)?,
        ),
        EstimatorKind::Est2CorrectedVr => BatchPlan::new(
            size(a_gamma0, ov.c_big_a, floor_g, COND_GAMMA0)?,
            size(b_lambda0.max(b_gamma1), ov.c_big_b, floor_j, COND_GAMMA1)?,
            size(a_gamma2, ov.c_small_a, floor_g, COND_GAMMA2)?,
            size(b_lambda1, ov.c_small_b, floor_j, COND_LAMBDA1)?,
        ),
        EstimatorKind::Est3ExactAnchorStandard => BatchPlan::new(
            big_n,
            big_n,
            size(a_gamma1, ov.c_small_a, floor_g, COND_GAMMA1)?,
            size(b_lambda1, ov.c_small_b, floor_j, COND_LAMBDA1)?,
        ),
        EstimatorKind::Est4ExactAnchorCorrected => BatchPlan::new(
            big_n,
            big_n,
            size(a_gamma2, ov.c_small_a, floor_g, COND_GAMMA2)?,
            size(b_lambda1, ov.c_small_b, floor_j, COND_LAMBDA1)?,
        ),
    };

    let mut p = ParamPlan {
        estimator: kind,
        big_m,
        k,
        tau_schedule: schedule,
        batch_plan: batch,
        eps_bar: eps / (150.0 * big_m),
        delta_bar: delta / (2.0 * sigma_for_logs as f64),
        target_eps: eps,
        target_delta: delta,
        provenance,
        constant_overrides: ov,
    };
    // round-off at an exact threshold: nudge the offending batch upwards
    for _ in 0..16 {
        let coeffs = error_coeffs(kind, &batch, sigma_for_logs, delta / 2.0, &c, (m, n));
        let report = check_conditions(&p, &coeffs, &c, gap);
        if report.pass {
            return Ok(p);
        }
        let mut bumped = false;
        for f in report.failing() {
            let bump = |v: u64| v + 1 + v / 1_000_000_000;
            match f.name.as_str() {
                COND_GAMMA0 => batch.big_a = bump(batch.big_a),
                COND_LAMBDA0 => batch.big_b = bump(batch.big_b),
                COND_GAMMA1 if kind == EstimatorKind::Est2CorrectedVr => {
                    batch.big_b = bump(batch.big_b)
                }
                COND_GAMMA1 | COND_GAMMA2 => batch.small_a = bump(batch.small_a),
                COND_LAMBDA1 => batch.small_b = bump(batch.small_b),
                _ => {
                    return Err(Error::Infeasible {
                        rule: static_name(&f.name),
                        message: format!("lhs {:e} vs rhs {:e}", f.lhs, f.rhs),
                    })
                }
            }
            bumped = true;
        }
        if !bumped {
            break;
        }
        p.batch_plan = batch;
    }
    Err(Error::Infeasible {
        rule: "convergence conditions",
        message: "could not satisfy all conditions".into(),
    })
}

fn static_name(name: &str) -> &'static str {
    [
        COND_M,
        COND_ADMISSIBLE,
        COND_DELTA_BAR,
        COND_EPS_BAR,
        COND_SIGMA,
        COND_GAMMA0,
        COND_LAMBDA0,
        COND_GAMMA1,
        COND_GAMMA2,
        COND_LAMBDA1,
    ]
    .into_iter()
    .find(|c| *c == name)
    .unwrap_or("convergence conditions")
}

/// Planned oracle totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complexity {
    pub evals_g: u128,
    pub evals_j: u128,
}

/// Oracle totals of a plan with epoch lengths `taus` (one entry per epoch).
///
/// `jacobians_cached` says whether Est3/Est4 anchors keep component Jacobians.
pub fn complexity_for_epochs(
    kind: EstimatorKind,
    batch: &BatchPlan,
    taus: &[u64],
    population: u64,
    jacobians_cached: bool,
) -> Complexity {
    let k = taus.len() as u128;
    let inner: u128 = taus.iter().map(|&t| (t - 1) as u128).sum();
    let (big_a, big_b) = (batch.big_a as u128, batch.big_b as u128);
    let (a, b) = (batch.small_a as u128, batch.small_b as u128);
    let n = population as u128;
    let (ev, jac) = match kind {
        EstimatorKind::Est0MiniBatch => ((k + inner) * big_a, (k + inner) * big_b),
        EstimatorKind::Est1StandardVr => (k * big_a + inner * 2 * a, k * big_b + inner * 2 * b),
        EstimatorKind::Est2CorrectedVr => {
            (k * big_a + inner * 2 * a, k * big_b + inner * (a + 2 * b))
        }
        EstimatorKind::Est3ExactAnchorStandard => {
            let per_b = if jacobians_cached { b } else { 2 * b };
            (k * n + inner * a, k * n + inner * per_b)
        }
        EstimatorKind::Est4ExactAnchorCorrected => {
            let per_b = if jacobians_cached { b } else { a + 2 * b };
            (k * n + inner * a, k * n + inner * per_b)
        }
    };
    Complexity {
        evals_g: ev,
        evals_j: jac,
    }
}

/// Oracle totals of a fixed-schedule plan.
pub fn predicted_complexity(
    plan: &ParamPlan,
    population: u64,
    jacobians_cached: bool,
) -> Result<Complexity> {
    match plan.tau_schedule {
        TauSchedule::Fixed { tau } => {
            let taus = vec![tau; plan.k as usize];
            Ok(complexity_for_epochs(
                plan.estimator,
                &plan.batch_plan,
                &taus,
                population,
                jacobians_cached,
            ))
        }
        TauSchedule::Randomized { .. } => Err(Error::InvalidSpec(
            "randomized schedules need drawn epochs; use complexity_for_epochs".into(),
        )),
    }
}

/// Optimal-rate exponents `(evaluations, Jacobians)` in `1/ε`.
pub fn rate_exponents(kind: EstimatorKind, target: CorrectedTarget) -> (f64, f64) {
    match (kind, target) {
        (EstimatorKind::Est0MiniBatch, _) => (3.0, 2.0),
        (EstimatorKind::Est1StandardVr, _) => (8.0 / 3.0, 5.0 / 3.0),
        (EstimatorKind::Est2CorrectedVr, CorrectedTarget::Evaluations) => (13.0 / 5.0, 13.0 / 5.0),
        (EstimatorKind::Est2CorrectedVr, CorrectedTarget::Jacobians) => (3.0, 2.0),
        (EstimatorKind::Est3ExactAnchorStandard, _) => (1.0, 1.0),
        (EstimatorKind::Est4ExactAnchorCorrected, _) => (1.0, 1.0),
    }
}

/// The log factors `(L₁, L₂)` a plan's batch sizes carry.
pub fn plan_log_factors(plan: &ParamPlan, dims: (usize, usize)) -> (f64, f64) {
    log_factors(dims.0, dims.1, plan.sigma_tau(), plan.target_delta / 2.0)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidSpec("need at least two paired points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidSpec("x values are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}
