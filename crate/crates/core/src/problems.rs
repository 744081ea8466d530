//! Synthetic problems whose constants are known in closed form.
//!
//! Every generator uses components `g_j(x) = φ(A_j x + b_j) − y_j` with
//! `A_j = A₀ + ρ·u_j v_jᵀ` (`‖u_j‖ = ‖v_j‖ = 1`) and `φ` either `tanh` or the
//! identity. Because the perturbation is rank one with unit norm,
//! `‖A_j‖ ≤ ‖A₀‖ + ρ` and every row of `A_j` has norm at most
//! `max_row(A₀) + ρ`, which gives all constants without scanning the population.
//!
//! Targets are `y_j = φ(A_j x* + b_j) + shift + ν_j` with noise `ν_j` centered
//! over the population, so `g(x*) = −shift` exactly (up to round-off).

use std::borrow::Cow;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::composite::outer::{
    EuclideanNorm, HalfSquaredNorm, HingePenalty, Kink, SeparableAbsolute,
};
use crate::composite::regularizer::{Quadratic, Zero, L1};
use crate::composite::{
    ComponentOracle, CompositeProblem, LipschitzConstants, OuterFunction, Population, Regularizer,
    SampledOuter,
};
use crate::error::{Error, Result};
use crate::linalg::{max_row_norm, op_norm, Matrix, Vector};
use crate::sampling::{Channel, RngStream};

/// `sup |tanh''| = 4/(3√3)`.
pub const TANH_CURVATURE: f64 = 0.769_800_358_919_501;

/// Positive floor for `L_g` when every component is affine.
pub const AFFINE_L_G_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    NonlinearRegression,
    #[serde(rename = "PenalizedNLP")]
    PenalizedNlp,
    DoublyStochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterChoice {
    /// `f(z) = ‖z‖₂`.
    #[default]
    Norm,
    /// `f(z) = ½‖z‖²`.
    HalfSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSpec {
    FiniteSum {
        n_components: usize,
    },
    Expectation {
        #[serde(default = "default_hidden_population")]
        population: usize,
        #[serde(default = "default_validation_batch")]
        validation_batch: usize,
    },
}

fn default_hidden_population() -> usize {
    1_000_000
}

fn default_validation_batch() -> usize {
    100_000
}

fn default_perturbation() -> f64 {
    0.3
}

fn default_noise() -> f64 {
    0.05
}

fn default_start_radius() -> f64 {
    0.5
}

fn default_penalty() -> f64 {
    10.0
}

fn default_atoms_per_coordinate() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
    pub population: PopulationSpec,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// `ρ`, the size of the rank-one component perturbations.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default)]
    pub link: Link,
    #[serde(default)]
    pub outer: OuterChoice,
    /// Weight of an `ℓ₁` regularizer (regression only; 0 disables it).
    #[serde(default)]
    pub l1_weight: f64,
    /// Penalty weight `C` (penalized NLP only).
    #[serde(default = "default_penalty")]
    pub penalty: f64,
    /// Outer pieces per coordinate (doubly stochastic only).
    #[serde(default = "default_atoms_per_coordinate")]
    pub atoms_per_coordinate: usize,
    /// Spread of the outer pieces' kinks around 0 (doubly stochastic only).
    #[serde(default)]
    pub kink_spread: f64,
    /// Distance of the default start from the planted solution.
    #[serde(default = "default_start_radius")]
    pub start_radius: f64,
    pub seed: u64,
}

impl ProblemSpec {
    pub fn regression(n: usize, m: usize, n_components: usize, seed: u64) -> Self {
        Self {
            kind: ProblemKind::NonlinearRegression,
            n,
            m,
            population: PopulationSpec::FiniteSum { n_components },
            noise: default_noise(),
            perturbation: default_perturbation(),
            link: Link::Tanh,
            outer: OuterChoice::Norm,
            l1_weight: 0.0,
            penalty: default_penalty(),
            atoms_per_coordinate: default_atoms_per_coordinate(),
            kink_spread: 0.0,
            start_radius: default_start_radius(),
            seed,
        }
    }

    pub fn penalized_nlp(n: usize, m: usize, n_components: usize, seed: u64) -> Self {
        Self {
            kind: ProblemKind::PenalizedNlp,
            ..Self::regression(n, m, n_components, seed)
        }
    }

    pub fn doubly_stochastic(n: usize, m: usize, n_components: usize, seed: u64) -> Self {
        Self {
            kind: ProblemKind::DoublyStochastic,
            ..Self::regression(n, m, n_components, seed)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidSpec("n and m must be positive".into()));
        }
        match self.population {
            PopulationSpec::FiniteSum { n_components: 0 } => {
                return Err(Error::InvalidSpec("N must be positive".into()))
            }
            PopulationSpec::Expectation { population: 0, .. }
            | PopulationSpec::Expectation {
                validation_batch: 0,
                ..
            } => {
                return Err(Error::InvalidSpec(
                    "expectation sizes must be positive".into(),
                ))
            }
            _ => {}
        }
        for (name, v) in [
            ("noise", self.noise),
            ("perturbation", self.perturbation),
            ("l1_weight", self.l1_weight),
            ("kink_spread", self.kink_spread),
            ("start_radius", self.start_radius),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidSpec(format!(
                    "{name} must be finite and nonnegative"
                )));
            }
        }
        Ok(())
    }

    fn population_size(&self) -> usize {
        match self.population {
            PopulationSpec::FiniteSum { n_components } => n_components,
            PopulationSpec::Expectation { population, .. } => population,
        }
    }

    fn population(&self) -> Population {
        match self.population {
            PopulationSpec::FiniteSum { n_components } => Population::FiniteSum { n: n_components },
            PopulationSpec::Expectation {
                validation_batch, ..
            } => Population::Expectation { validation_batch },
        }
    }
}

/// Build the problem a spec describes.
pub fn build(spec: &ProblemSpec) -> Result<CompositeProblem> {
    match spec.kind {
        ProblemKind::NonlinearRegression => make_nonlinear_regression(spec),
        ProblemKind::PenalizedNlp => make_penalized_nlp(spec),
        ProblemKind::DoublyStochastic => make_doubly_stochastic(spec),
    }
}

/// Per-component data `(b_j, u_j, v_j, y_j)`.
#[derive(Debug, Clone)]
struct ComponentData {
    b: Vector,
    u: Vector,
    v: Vector,
    y: Vector,
}

#[derive(Debug)]
enum Storage {
    Stored(Vec<ComponentData>),
    /// Regenerated on demand from the seed; the noise mean is precomputed.
    Lazy {
        count: usize,
        noise_mean: Vector,
    },
}

/// The `φ(A_j x + b_j) − y_j` family.
#[derive(Debug)]
pub struct LinkComponents {
    a0: Matrix,
    x_star: Vector,
    link: Link,
    rho: f64,
    noise: f64,
    shift: f64,
    stream: RngStream,
    storage: Storage,
}

/// Components stored explicitly up to this population size.
const STORE_LIMIT: usize = 100_000;

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

impl LinkComponents {
    #[allow(clippy::too_many_arguments)]
    fn generate(
        n: usize,
        m: usize,
        count: usize,
        link: Link,
        rho: f64,
        noise: f64,
        shift: f64,
        seed: u64,
    ) -> Self {
        let stream = RngStream::new(seed);
        let mut rng = stream.rng(Channel::Generator, 0, 0);
        let scale = 1.0 / (n as f64).sqrt();
        let a0 = Matrix::from_fn(m, n, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        let x_star = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let mut this = Self {
            a0,
            x_star,
            link,
            rho,
            noise,
            shift,
            stream,
            storage: Storage::Lazy {
                count,
                noise_mean: Vector::zeros(m),
            },
        };
        let mut noise_mean = Vector::zeros(m);
        for j in 0..count {
            noise_mean += this.raw_noise(j);
        }
        noise_mean /= count as f64;
        this.storage = Storage::Lazy { count, noise_mean };
        if count <= STORE_LIMIT {
            let data = (0..count).map(|j| this.make_data(j)).collect();
            this.storage = Storage::Stored(data);
        }
        this
    }

    fn raw_noise(&self, j: usize) -> Vector {
        let mut rng = self.stream.rng(Channel::Generator, 2, j as u64);
        let m = self.a0.nrows();
        Vector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0) * self.noise)
    }

    fn make_data(&self, j: usize) -> ComponentData {
        let (m, n) = self.a0.shape();
        let mut rng = self.stream.rng(Channel::Generator, 1, j as u64);
        let b = Vector::from_fn(m, |_, _| rng.random_range(-0.5..=0.5));
        let u = unit_vector(m, &mut rng);
        let v = unit_vector(n, &mut rng);
        let noise_mean = match &self.storage {
            Storage::Lazy { noise_mean, .. } => noise_mean.clone(),
            Storage::Stored(_) => unreachable!("data is generated before storing"),
        };
        let nu = self.raw_noise(j) - noise_mean;
        let pre = &self.a0 * &self.x_star + &u * (self.rho * v.dot(&self.x_star)) + &b;
        let y = pre.map(|t| self.phi(t)) + nu.add_scalar(self.shift);
        ComponentData { b, u, v, y }
    }

    fn data(&self, j: usize) -> Cow<'_, ComponentData> {
        match &self.storage {
            Storage::Stored(d) => Cow::Borrowed(&d[j]),
            Storage::Lazy { .. } => Cow::Owned(self.make_data(j)),
        }
    }

    fn phi(&self, t: f64) -> f64 {
        match self.link {
            Link::Tanh => t.tanh(),
            Link::Identity => t,
        }
    }

    fn dphi(&self, t: f64) -> f64 {
        match self.link {
            Link::Tanh => 1.0 - t.tanh().powi(2),
            Link::Identity => 1.0,
        }
    }

    fn pre_activation(&self, d: &ComponentData, x: &Vector) -> Vector {
        &self.a0 * x + &d.u * (self.rho * d.v.dot(x)) + &d.b
    }

    pub fn planted_solution(&self) -> &Vector {
        &self.x_star
    }

    /// `(‖A₀‖ + ρ, max_row(A₀) + ρ)`.
    fn norm_bounds(&self) -> (f64, f64) {
        (
            op_norm(&self.a0) + self.rho,
            max_row_norm(&self.a0) + self.rho,
        )
    }

    /// `max_j ‖y_j − ȳ‖` when stored, else its closed-form bound.
    fn target_spread(&self) -> f64 {
        let m = self.a0.nrows() as f64;
        match &self.storage {
            Storage::Stored(d) => {
                let mean = d
                    .iter()
                    .fold(Vector::zeros(self.a0.nrows()), |acc, c| acc + &c.y)
                    / d.len() as f64;
                d.iter().map(|c| (&c.y - &mean).norm()).fold(0.0, f64::max)
            }
            Storage::Lazy { .. } => {
                let link_range = match self.link {
                    Link::Tanh => 2.0 * m.sqrt(),
                    Link::Identity => f64::INFINITY,
                };
                link_range + 2.0 * self.noise * m.sqrt()
            }
        }
    }

    /// `max_j ‖ν_j‖` (centered noise) when stored, else its bound.
    fn noise_spread(&self) -> f64 {
        let m = self.a0.nrows() as f64;
        match &self.storage {
            Storage::Stored(d) => {
                // for identity links with ρ = 0, y_j − ȳ − (b_j − b̄) is the noise
                let nb = d.len() as f64;
                let mb = d
                    .iter()
                    .fold(Vector::zeros(self.a0.nrows()), |acc, c| acc + &c.b)
                    / nb;
                let my = d
                    .iter()
                    .fold(Vector::zeros(self.a0.nrows()), |acc, c| acc + &c.y)
                    / nb;
                d.iter()
                    .map(|c| ((&c.y - &my) - (&c.b - &mb)).norm())
                    .fold(0.0, f64::max)
            }
            Storage::Lazy { .. } => 2.0 * self.noise * m.sqrt(),
        }
    }

    fn constants(&self, l_f: f64) -> LipschitzConstants {
        let m = self.a0.nrows() as f64;
        let single = self.count() == 1;
        let (a_norm, row) = self.norm_bounds();
        let (lhat, big_lhat, sigma_g, sigma_gp) = match self.link {
            Link::Tanh => (
                a_norm,
                TANH_CURVATURE * a_norm * row,
                2.0 * m.sqrt() + self.target_spread(),
                2.0 * a_norm,
            ),
            Link::Identity => {
                let sigma_g = if self.rho > 0.0 {
                    f64::INFINITY
                } else {
                    self.noise_spread()
                };
                (a_norm, 0.0, sigma_g, 2.0 * self.rho)
            }
        };
        LipschitzConstants {
            l_f,
            l_g: lhat,
            big_l_g: big_lhat.max(AFFINE_L_G_FLOOR),
            sigma_g: if single { 0.0 } else { sigma_g },
            sigma_gprime: if single { 0.0 } else { sigma_gp },
            lhat_g: lhat,
            big_lhat_g: big_lhat,
        }
    }

    fn start_point(&self, radius: f64) -> Vector {
        let mut rng = self.stream.rng(Channel::Generator, 3, 0);
        &self.x_star + unit_vector(self.x_star.len(), &mut rng) * radius
    }
}

impl ComponentOracle for LinkComponents {
    fn count(&self) -> usize {
        match &self.storage {
            Storage::Stored(d) => d.len(),
            Storage::Lazy { count, .. } => *count,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.a0.ncols(), self.a0.nrows())
    }

    fn value(&self, j: usize, x: &Vector) -> Vector {
        let d = self.data(j);
        self.pre_activation(&d, x).map(|t| self.phi(t)) - &d.y
    }

    fn jacobian(&self, j: usize, x: &Vector) -> Matrix {
        self.value_and_jacobian(j, x).1
    }

    fn value_and_jacobian(&self, j: usize, x: &Vector) -> (Vector, Matrix) {
        let d = self.data(j);
        let pre = self.pre_activation(&d, x);
        let mut jac = &self.a0 + &d.u * d.v.transpose() * self.rho;
        for (i, mut row) in jac.row_iter_mut().enumerate() {
            row *= self.dphi(pre[i]);
        }
        (pre.map(|t| self.phi(t)) - &d.y, jac)
    }
}

fn l1_or_zero(weight: f64) -> Arc<dyn Regularizer> {
    if weight > 0.0 {
        Arc::new(L1::new(weight))
    } else {
        Arc::new(Zero)
    }
}

fn link_components(spec: &ProblemSpec, shift: f64) -> LinkComponents {
    LinkComponents::generate(
        spec.n,
        spec.m,
        spec.population_size(),
        spec.link,
        spec.perturbation,
        spec.noise,
        shift,
        spec.seed,
    )
}

/// Nonlinear equations `g(x) = 0` solved as `min ‖g(x)‖ (+ ℓ₁)`.
pub fn make_nonlinear_regression(spec: &ProblemSpec) -> Result<CompositeProblem> {
    if spec.kind != ProblemKind::NonlinearRegression {
        return Err(Error::InvalidSpec(
            "spec is not a nonlinear regression".into(),
        ));
    }
    spec.validate()?;
    let comps = link_components(spec, 0.0);
    let x0 = comps.start_point(spec.start_radius);
    let m = spec.m as f64;
    let (outer, l_f): (Arc<dyn OuterFunction>, f64) = match spec.outer {
        OuterChoice::Norm => (Arc::new(EuclideanNorm::default()), 1.0),
        OuterChoice::HalfSquared => {
            // ‖g(x)‖ ≤ ‖φ‖_∞√m + max‖y_j‖ on the whole range of a tanh link
            let bound = match spec.link {
                Link::Tanh => m.sqrt() * (2.0 + spec.noise),
                Link::Identity => 2.0 * comps_mean_norm(&comps, &x0) + 1.0,
            };
            (Arc::new(HalfSquaredNorm), bound)
        }
    };
    let constants = comps.constants(l_f);
    CompositeProblem::new(
        outer,
        l1_or_zero(spec.l1_weight),
        Arc::new(comps),
        spec.population(),
        constants,
        0.0,
        x0,
        spec.seed,
    )
}

fn comps_mean_norm(comps: &LinkComponents, x: &Vector) -> f64 {
    let n = comps.count().min(1000);
    (0..n)
        .map(|j| comps.value(j, x))
        .fold(Vector::zeros(comps.a0.nrows()), |a, v| a + v)
        .norm()
        / n as f64
}

/// `min ½xᵀQx + qᵀx + C·Σ max{g^(ℓ)(x), 0}` with averaged smooth constraints.
pub fn make_penalized_nlp(spec: &ProblemSpec) -> Result<CompositeProblem> {
    if spec.kind != ProblemKind::PenalizedNlp {
        return Err(Error::InvalidSpec("spec is not a penalized NLP".into()));
    }
    spec.validate()?;
    if !(spec.penalty > 0.0) {
        return Err(Error::InvalidSpec(
            "penalty weight C must be positive".into(),
        ));
    }
    // constraints hold with margin 0.1 at the planted point
    let comps = link_components(spec, 0.1);
    let n = spec.n;
    let mut rng = RngStream::new(spec.seed).rng(Channel::Generator, 4, 0);
    let r = Matrix::from_fn(n, n, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z / (n as f64).sqrt()
    });
    let q = r.transpose() * &r + Matrix::identity(n, n) * 0.5;
    let lin = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let h = Quadratic::new(q, lin)
        .ok_or_else(|| Error::InvalidSpec("generated quadratic is not convex".into()))?;
    let h_min = h
        .minimum()
        .ok_or_else(|| Error::InvalidSpec("generated quadratic has no minimizer".into()))?;
    let x0 = comps.start_point(spec.start_radius);
    let constants = comps.constants(spec.penalty * (spec.m as f64).sqrt());
    CompositeProblem::new(
        Arc::new(HingePenalty::new(spec.penalty)),
        Arc::new(h),
        Arc::new(comps),
        spec.population(),
        constants,
        h_min,
        x0,
        spec.seed,
    )
}

/// Finite family of outer pieces `f_ζ(z) = |u_ζ z_{i_ζ} − c_ζ|`, `|u_ζ| ≤ 1`.
#[derive(Debug, Clone)]
pub struct AbsolutePieces {
    /// `(coordinate, u, c)`.
    pieces: Vec<(usize, f64, f64)>,
}

impl AbsolutePieces {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    fn piece_value(&self, k: usize, z: &Vector) -> f64 {
        let (i, u, c) = self.pieces[k];
        (u * z[i] - c).abs()
    }

    /// The mean `f` as an explicit separable function.
    pub fn mean_function(&self, m: usize) -> SeparableAbsolute {
        let mut kinks = vec![Vec::new(); m];
        let w = 1.0 / self.pieces.len() as f64;
        for &(i, u, c) in &self.pieces {
            if u != 0.0 {
                kinks[i].push(Kink {
                    weight: w * u.abs(),
                    at: c / u,
                });
            }
        }
        SeparableAbsolute::new(kinks)
    }
}

impl SampledOuter for AbsolutePieces {
    fn sample_subgradient(&self, z: &Vector, rng: &mut dyn rand::RngCore) -> Vector {
        let k = rng.random_range(0..self.pieces.len());
        let (i, u, c) = self.pieces[k];
        let mut g = Vector::zeros(z.len());
        let r = u * z[i] - c;
        g[i] = if r > 0.0 {
            u
        } else if r < 0.0 {
            -u
        } else {
            0.0
        };
        g
    }

    fn sample_value(&self, z: &Vector, rng: &mut dyn rand::RngCore) -> f64 {
        let k = rng.random_range(0..self.pieces.len());
        self.piece_value(k, z)
    }

    fn atom_lipschitz(&self) -> f64 {
        self.pieces.iter().map(|p| p.1.abs()).fold(0.0, f64::max)
    }
}

/// Regression components under a sampled piecewise-linear outer function.
pub fn make_doubly_stochastic(spec: &ProblemSpec) -> Result<CompositeProblem> {
    if spec.kind != ProblemKind::DoublyStochastic {
        return Err(Error::InvalidSpec(
            "spec is not a doubly stochastic problem".into(),
        ));
    }
    spec.validate()?;
    if spec.atoms_per_coordinate == 0 {
        return Err(Error::InvalidSpec(
            "need at least one outer piece per coordinate".into(),
        ));
    }
    let comps = link_components(spec, 0.0);
    let mut rng = RngStream::new(spec.seed).rng(Channel::Generator, 5, 0);
    let total = spec.atoms_per_coordinate * spec.m;
    let pieces: Vec<(usize, f64, f64)> = (0..total)
        .map(|k| {
            let i = k % spec.m;
            let mag: f64 = rng.random_range(0.5..=1.0);
            let u = if rng.random_bool(0.5) { mag } else { -mag };
            let shift: f64 = StandardNormal.sample(&mut rng);
            (i, u, u * shift * spec.kink_spread)
        })
        .collect();
    let pieces = AbsolutePieces { pieces };
    let outer = pieces.mean_function(spec.m);
    let x0 = comps.start_point(spec.start_radius);
    let constants = comps.constants(1.0);
    Ok(CompositeProblem::new(
        Arc::new(outer),
        l1_or_zero(spec.l1_weight),
        Arc::new(comps),
        spec.population(),
        constants,
        0.0,
        x0,
        spec.seed,
    )?
    .with_sampled_outer(Arc::new(pieces)))
}

/// The planted point `x*` of a generated problem (where `g(x*) = 0` for
/// regression and doubly stochastic instances).
pub fn planted_solution(spec: &ProblemSpec) -> Vector {
    link_components(spec, 0.0).planted_solution().clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::phi_value;

    fn small(kind: ProblemKind) -> ProblemSpec {
        ProblemSpec {
            kind,
            ..ProblemSpec::regression(4, 6, 20, 11)
        }
    }

    #[test]
    fn regression_planted_point_has_zero_objective() {
        let spec = small(ProblemKind::NonlinearRegression);
        let p = build(&spec).unwrap();
        let xs = planted_solution(&spec);
        assert!(phi_value(&p, &xs).unwrap() < 1e-12);
        assert!((&p.initial_point - &xs).norm() - spec.start_radius < 1e-12);
    }

    #[test]
    fn single_component_has_zero_variance_constants() {
        let spec = ProblemSpec::regression(3, 4, 1, 2);
        let p = build(&spec).unwrap();
        assert_eq!(p.constants.sigma_g, 0.0);
        assert_eq!(p.constants.sigma_gprime, 0.0);
    }

    #[test]
    fn affine_equal_components_have_zero_curvature() {
        let spec = ProblemSpec {
            link: Link::Identity,
            perturbation: 0.0,
            ..ProblemSpec::regression(3, 4, 5, 2)
        };
        let p = build(&spec).unwrap();
        assert_eq!(p.constants.big_lhat_g, 0.0);
        assert_eq!(p.constants.sigma_gprime, 0.0);
        assert!(p.constants.sigma_g.is_finite());
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let spec = ProblemSpec::regression(20, 30, 200, 7);
        let p = build(&spec).unwrap();
        let mut rng = RngStream::new(99).rng(Channel::Auxiliary(0), 0, 0);
        let h = 1e-6;
        for t in 0..10 {
            let x = Vector::from_fn(20, |_, _| StandardNormal.sample(&mut rng));
            let j = t * 17 % 200;
            let jac = p.g_jacobian(j, &x);
            let mut fd = Matrix::zeros(30, 20);
            for c in 0..20 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                fd.set_column(
                    c,
                    &((p.g_component(j, &xp) - p.g_component(j, &xm)) / (2.0 * h)),
                );
            }
            assert!((&fd - &jac).norm() <= 1e-5 * jac.norm());
        }
    }

    #[test]
    fn seed_determinism() {
        let spec = small(ProblemKind::NonlinearRegression);
        let a = build(&spec).unwrap();
        let b = build(&spec).unwrap();
        let x = Vector::from_element(4, 0.3);
        for j in 0..20 {
            assert_eq!(a.g_component(j, &x), b.g_component(j, &x));
            assert_eq!(a.g_jacobian(j, &x), b.g_jacobian(j, &x));
        }
    }

    #[test]
    fn lazy_population_matches_stored() {
        let stored = LinkComponents::generate(3, 4, 50, Link::Tanh, 0.3, 0.05, 0.0, 5);
        let mut lazy = LinkComponents::generate(3, 4, 50, Link::Tanh, 0.3, 0.05, 0.0, 5);
        let noise_mean = match &lazy.storage {
            Storage::Stored(d) => {
                let _ = d;
                let mut mean = Vector::zeros(4);
                for j in 0..50 {
                    mean += lazy.raw_noise(j);
                }
                mean / 50.0
            }
            Storage::Lazy { noise_mean, .. } => noise_mean.clone(),
        };
        lazy.storage = Storage::Lazy {
            count: 50,
            noise_mean,
        };
        let x = Vector::from_element(3, -0.2);
        for j in 0..50 {
            assert!((stored.value(j, &x) - lazy.value(j, &x)).norm() < 1e-14);
        }
    }

    #[test]
    fn penalty_subgradient_in_smooth_region() {
        let spec = small(ProblemKind::PenalizedNlp);
        let p = build(&spec).unwrap();
        let z = Vector::from_element(6, 0.7);
        assert_eq!(p.f_subgradient(&z), Vector::from_element(6, spec.penalty));
        assert!((p.constants.l_f - spec.penalty * 6f64.sqrt()).abs() < 1e-12);
        let xs = planted_solution(&spec);
        // constraints hold strictly at the planted point, so Φ = h there
        assert!((phi_value(&p, &xs).unwrap() - p.h_value(&xs)).abs() < 1e-12);
        assert!(p.phi_lower_bound <= phi_value(&p, &xs).unwrap());
    }

    #[test]
    fn penalty_must_be_positive() {
        let spec = ProblemSpec {
            penalty: 0.0,
            ..small(ProblemKind::PenalizedNlp)
        };
        assert!(build(&spec).is_err());
    }

    #[test]
    fn doubly_stochastic_monte_carlo_mean() {
        let spec = ProblemSpec {
            kink_spread: 0.3,
            ..small(ProblemKind::DoublyStochastic)
        };
        let p = build(&spec).unwrap();
        let sampled = p.sampled_outer.clone().unwrap();
        assert!(sampled.atom_lipschitz() <= 1.0);
        assert_eq!(p.constants.l_f, 1.0);
        let mut rng = RngStream::new(1).rng(Channel::Auxiliary(1), 0, 0);
        for t in 0..5 {
            let z = Vector::from_fn(6, |i, _| ((i + t) as f64 * 0.77).sin());
            let draws: Vec<f64> = (0..10_000)
                .map(|_| sampled.sample_value(&z, &mut rng))
                .collect();
            let mean = draws.iter().sum::<f64>() / 1e4;
            let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / 9999.0).sqrt();
            assert!((mean - p.f_value(&z)).abs() <= 3.0 * sd / 100.0);
        }
    }

    #[test]
    fn expectation_mode_uses_validation_batch() {
        let spec = ProblemSpec {
            population: PopulationSpec::Expectation {
                population: 2000,
                validation_batch: 500,
            },
            ..small(ProblemKind::NonlinearRegression)
        };
        let p = build(&spec).unwrap();
        assert_eq!(p.population_size(), 2000);
        let total: f64 = p.reference_weights().iter().map(|w| w.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec = small(ProblemKind::DoublyStochastic);
        let js = serde_json::to_string(&spec).unwrap();
        let back: ProblemSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(spec, back);
        let minimal = r#"{"kind":"NonlinearRegression","n":2,"m":3,
            "population":{"finite_sum":{"n_components":4}},"seed":1}"#;
        let parsed: ProblemSpec = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.start_radius, 0.5);
    }
}
