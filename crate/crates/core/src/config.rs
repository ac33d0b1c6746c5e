//! JSON experiment configuration: problem description (built-in families or
//! matrices sampled in time), solver settings, and the builder that turns a
//! parsed document into ready-to-run objects.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{FormFamily, Modulus};
use crate::grid::{GridFunction, TimeGrid};
use crate::probe::{random_cvec, seeded_rng};
use crate::semigroup::OperatorH;
use crate::space::GalerkinSpace;
use crate::volterra::SolveConfig;
use crate::zoo::{
    build_counterexample, build_elliptic_1d, build_robin, build_rotating_family_scaled,
    Counterexample, CounterexampleSpec, ROTATING_SCALE, ROTATING_SPEED,
};
use crate::{c, C64, CMat, CVec};

const FORCING_STREAM: u64 = 0xF0_0000;
const INITIAL_STREAM: u64 = 0x10_0000;

/// One matrix entry: a plain real number or a [re, im] pair.
#[derive(Deserialize, Serialize, Clone, Copy, Debug)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(re) => c(re),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }
}

pub type JsonMatrix = Vec<Vec<Entry>>;

fn parse_matrix(rows: &JsonMatrix, dim: usize, what: &str) -> Result<CMat> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::invalid(format!("{what} must be a {dim}x{dim} matrix")));
    }
    Ok(CMat::from_fn(dim, dim, |i, j| rows[i][j].value()))
}

/// Declared modulus of continuity.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModulusSpec {
    Hoelder { exponent: f64, constant: f64 },
    Piecewise { breakpoints: Vec<f64>, pieces: Vec<(f64, f64)> },
    Tabulated { gaps: Vec<f64>, values: Vec<f64> },
}

impl ModulusSpec {
    pub fn build(&self) -> Modulus {
        match self {
            ModulusSpec::Hoelder { exponent, constant } => {
                Modulus::Hoelder { exponent: *exponent, constant: *constant }
            }
            ModulusSpec::Piecewise { breakpoints, pieces } => Modulus::PiecewiseHoelder {
                breakpoints: breakpoints.clone(),
                pieces: pieces.clone(),
            },
            ModulusSpec::Tabulated { gaps, values } => {
                Modulus::Tabulated { gaps: gaps.clone(), values: values.clone() }
            }
        }
    }
}

/// Spatially modulated diffusion coefficient
/// a(t, x) = base + x_amp sin(2 pi x_freq x) t^{t_exponent}.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct EllipticCoeff {
    pub base: f64,
    #[serde(default)]
    pub x_amp: f64,
    #[serde(default = "one")]
    pub x_freq: f64,
    #[serde(default = "one")]
    pub t_exponent: f64,
}

/// Boundary coefficient beta(t) = base + t_coeff t^{t_exponent}, applied at
/// both endpoints.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct RobinBeta {
    pub base: f64,
    #[serde(default)]
    pub t_coeff: f64,
    #[serde(default = "one")]
    pub t_exponent: f64,
}

fn one() -> f64 {
    1.0
}

/// Problem family selector.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilySpec {
    /// time-independent form matrix
    Constant { matrix: JsonMatrix },
    /// matrices at listed time nodes, linear interpolation in between,
    /// clamped outside
    Sampled { nodes: Vec<f64>, matrices: Vec<JsonMatrix> },
    /// synthetic rotating family with closed-form constants
    Rotating {
        n: usize,
        exponent: f64,
        amplitude: f64,
        #[serde(default)]
        speed: Option<f64>,
        #[serde(default)]
        scale: Option<f64>,
    },
    /// 1D diffusion with P1 elements
    #[serde(rename = "elliptic1d")]
    Elliptic1d { mesh: usize, nu: f64, coeff: EllipticCoeff },
    /// 1D diffusion with Robin boundary terms
    Robin { mesh: usize, beta: RobinBeta },
    /// scalar problem with a dense family of integrable singularities
    Counterexample { p: f64, terms: usize },
}

/// Time-grid settings: `n` cells, graded toward zero with exponent
/// `grading` (1 = uniform).
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "N", default = "default_cells")]
    pub n: usize,
    #[serde(default = "one")]
    pub grading: f64,
}

fn default_cells() -> usize {
    128
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: default_cells(), grading: 1.0 }
    }
}

/// Shift policy: automatic search down to `target`, or a forced value.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    #[serde(default = "yes")]
    pub auto: bool,
    #[serde(default = "default_target")]
    pub target: f64,
    #[serde(default)]
    pub mu: Option<f64>,
}

fn yes() -> bool {
    true
}
fn default_target() -> f64 {
    0.5
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec { auto: true, target: default_target(), mu: None }
    }
}

#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub shift: ShiftSpec,
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_p() -> f64 {
    2.0
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    200
}
fn default_probes() -> usize {
    4
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            grid: GridSpec::default(),
            p: default_p(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            shift: ShiftSpec::default(),
            probes: default_probes(),
        }
    }
}

/// Right-hand side selector; sampled at the solve grid's nodes.
#[derive(Deserialize, Serialize, Clone, Debug, Default, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    Zero,
    /// the all-ones coordinate vector, constant in time
    #[default]
    Ones,
    /// (1 + t) times the all-ones vector
    Ramp,
    /// independent random node values drawn from the seeded stream
    Random,
}

/// Initial-value selector.
#[derive(Deserialize, Serialize, Clone, Debug, Default, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSpec {
    #[default]
    Zero,
    /// random coordinates drawn from the seeded stream
    Random,
    /// the inverse square root of the base operator applied to a random
    /// vector: initial data inside the discrete square-root domain
    SqrtDomain,
}

/// Problem data (right-hand side and initial value).
#[derive(Deserialize, Serialize, Clone, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub u0: InitialSpec,
}

/// Top-level experiment document.
#[derive(Deserialize, Serialize, Clone, Debug)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub family: FamilySpec,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(rename = "gram_H", default)]
    pub gram_h: Option<JsonMatrix>,
    #[serde(rename = "gram_V", default)]
    pub gram_v: Option<JsonMatrix>,
    #[serde(rename = "M", default)]
    pub bound_m: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub modulus: Option<ModulusSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub data: DataSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Ready-to-run objects built from a configuration.
pub struct BuiltModel {
    /// the evolution family, absent for the scalar singular problem
    pub family: Option<FormFamily>,
    /// the scalar singular problem, when selected
    pub counterexample: Option<Counterexample>,
    pub grid: Arc<TimeGrid>,
    pub p: f64,
    pub seed: u64,
    pub solve: SolveConfig,
    pub data: DataSpec,
}

impl BuiltModel {
    /// The family, or an invalid-input error for the scalar problem.
    pub fn require_family(&self) -> Result<&FormFamily> {
        self.family
            .as_ref()
            .ok_or_else(|| Error::invalid("this command needs an evolution family, not the scalar singular problem"))
    }

    /// Base operator for initial-data norms: A(0) made accretive by the
    /// declared quasi-coercivity shift, plus one more unit when it is still
    /// singular (pure Neumann stiffness), so square roots and interpolation
    /// integrals are defined.  The same operator feeds the square-root-domain
    /// initial data and the a-priori ratio.
    pub fn base_operator(&self) -> Result<OperatorH> {
        let family = self.require_family()?;
        let a0 = family.assemble_operator(0.0).shifted(family.shift_delta());
        if a0.resolvent(c(0.0)).is_ok() {
            Ok(a0)
        } else {
            Ok(a0.shifted(1.0))
        }
    }

    /// The configured right-hand side, sampled at the grid nodes.
    pub fn forcing(&self) -> Result<GridFunction> {
        let family = self.require_family()?;
        let n = family.space().dim();
        let ones = CVec::from_element(n, c(1.0));
        Ok(match self.data.forcing {
            ForcingSpec::Zero => GridFunction::zeros(Arc::clone(&self.grid), n),
            ForcingSpec::Ones => {
                GridFunction::sample(Arc::clone(&self.grid), |_| ones.clone())
            }
            ForcingSpec::Ramp => {
                GridFunction::sample(Arc::clone(&self.grid), |t| &ones * c(1.0 + t))
            }
            ForcingSpec::Random => {
                let mut rng = seeded_rng(self.seed, FORCING_STREAM);
                let values = (0..=self.grid.cells()).map(|_| random_cvec(&mut rng, n)).collect();
                GridFunction::new(Arc::clone(&self.grid), values)?
            }
        })
    }

    /// The configured initial value.
    pub fn initial(&self) -> Result<CVec> {
        let family = self.require_family()?;
        let n = family.space().dim();
        Ok(match self.data.u0 {
            InitialSpec::Zero => CVec::zeros(n),
            InitialSpec::Random => {
                let mut rng = seeded_rng(self.seed, INITIAL_STREAM);
                random_cvec(&mut rng, n)
            }
            InitialSpec::SqrtDomain => {
                let mut rng = seeded_rng(self.seed, INITIAL_STREAM);
                let g = random_cvec(&mut rng, n);
                let root = self.base_operator()?.sqrt()?;
                root.matrix()
                    .clone()
                    .lu()
                    .solve(&g)
                    .ok_or_else(|| Error::singular("the operator square root is singular"))?
            }
        })
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed configuration: {e}")))
}

impl Config {
    fn explicit_space(&self) -> Result<Arc<GalerkinSpace>> {
        let dim = self.dim.ok_or_else(|| Error::invalid("matrix families must set dim"))?;
        if dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        let gh = self
            .gram_h
            .as_ref()
            .ok_or_else(|| Error::invalid("matrix families must set gram_H"))?;
        let gv = self
            .gram_v
            .as_ref()
            .ok_or_else(|| Error::invalid("matrix families must set gram_V"))?;
        GalerkinSpace::new(parse_matrix(gh, dim, "gram_H")?, parse_matrix(gv, dim, "gram_V")?)
    }

    fn explicit_constants(&self) -> Result<(f64, f64, f64, Modulus)> {
        let m = self.bound_m.ok_or_else(|| Error::invalid("matrix families must set M"))?;
        let alpha = self.alpha.ok_or_else(|| Error::invalid("matrix families must set alpha"))?;
        let delta = self.delta.unwrap_or(0.0);
        let modulus = self
            .modulus
            .as_ref()
            .map(ModulusSpec::build)
            .unwrap_or(Modulus::Hoelder { exponent: 1.0, constant: 0.0 });
        Ok((m, alpha, delta, modulus))
    }

    /// Build the runnable model.  Every configuration must set `tau`.
    pub fn build(&self) -> Result<BuiltModel> {
        let tau = self
            .tau
            .ok_or_else(|| Error::invalid("the configuration must set tau"))?;
        if !(tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        let (family, counterexample) = match &self.family {
            FamilySpec::Constant { matrix } => {
                let space = self.explicit_space()?;
                let (m, alpha, delta, modulus) = self.explicit_constants()?;
                let f = parse_matrix(matrix, space.dim(), "family matrix")?;
                let fam = FormFamily::new(
                    space,
                    tau,
                    Arc::new(move |_| f.clone()),
                    m,
                    alpha,
                    delta,
                    modulus,
                )?;
                (Some(fam), None)
            }
            FamilySpec::Sampled { nodes, matrices } => {
                let space = self.explicit_space()?;
                let (m, alpha, delta, modulus) = self.explicit_constants()?;
                if nodes.is_empty() || nodes.len() != matrices.len() {
                    return Err(Error::invalid(
                        "sampled families need matching, non-empty node and matrix lists",
                    ));
                }
                if nodes.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("sample nodes must be strictly increasing"));
                }
                let dim = space.dim();
                let mats: Vec<CMat> = matrices
                    .iter()
                    .map(|rows| parse_matrix(rows, dim, "sampled matrix"))
                    .collect::<Result<_>>()?;
                let nodes = nodes.clone();
                let form = Arc::new(move |t: f64| -> CMat {
                    if t <= nodes[0] {
                        return mats[0].clone();
                    }
                    if t >= *nodes.last().unwrap() {
                        return mats.last().unwrap().clone();
                    }
                    let k = nodes.partition_point(|&s| s <= t) - 1;
                    let w = (t - nodes[k]) / (nodes[k + 1] - nodes[k]);
                    &mats[k] * c(1.0 - w) + &mats[k + 1] * c(w)
                });
                (Some(FormFamily::new(space, tau, form, m, alpha, delta, modulus)?), None)
            }
            FamilySpec::Rotating { n, exponent, amplitude, speed, scale } => {
                let fam = build_rotating_family_scaled(
                    *n,
                    *exponent,
                    *amplitude,
                    tau,
                    speed.unwrap_or(ROTATING_SPEED),
                    scale.unwrap_or(ROTATING_SCALE),
                )?;
                (Some(fam), None)
            }
            FamilySpec::Elliptic1d { mesh, nu, coeff } => {
                if !(coeff.t_exponent > 0.0 && coeff.t_exponent <= 1.0) {
                    return Err(Error::invalid("t_exponent must lie in (0, 1]"));
                }
                let cc = coeff.clone();
                let fam = build_elliptic_1d(
                    Arc::new(move |t: f64, x: f64| {
                        c(cc.base
                            + cc.x_amp
                                * (2.0 * std::f64::consts::PI * cc.x_freq * x).sin()
                                * t.powf(cc.t_exponent))
                    }),
                    *mesh,
                    *nu,
                    tau,
                    (coeff.t_exponent, coeff.x_amp.abs()),
                )?;
                (Some(fam), None)
            }
            FamilySpec::Robin { mesh, beta } => {
                if !(beta.t_exponent > 0.0 && beta.t_exponent <= 1.0) {
                    return Err(Error::invalid("t_exponent must lie in (0, 1]"));
                }
                let bb = beta.clone();
                let fam = build_robin(
                    Arc::new(move |t: f64, _endpoint: f64| {
                        bb.base + bb.t_coeff * t.powf(bb.t_exponent)
                    }),
                    *mesh,
                    tau,
                    (beta.t_exponent, beta.t_coeff.abs()),
                )?;
                (Some(fam), None)
            }
            FamilySpec::Counterexample { p, terms } => {
                if (tau - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(
                        "the singular scalar problem is defined on tau = 1",
                    ));
                }
                let ce = build_counterexample(CounterexampleSpec::standard(*p, *terms))?;
                (None, Some(ce))
            }
        };
        let gs = &self.solver.grid;
        if gs.n == 0 {
            return Err(Error::invalid("the grid needs at least one cell"));
        }
        if !(gs.grading >= 1.0) {
            return Err(Error::invalid("grading exponent must be >= 1"));
        }
        let grid = if gs.grading == 1.0 {
            TimeGrid::uniform(tau, gs.n)?
        } else {
            let nodes: Vec<f64> = (0..=gs.n)
                .map(|k| tau * (k as f64 / gs.n as f64).powf(gs.grading))
                .collect();
            TimeGrid::from_nodes(nodes)?
        };
        let force_mu = if self.solver.shift.auto { None } else { Some(self.solver.shift.mu.unwrap_or(0.0)) };
        let solve = SolveConfig {
            p: self.solver.p,
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            shift_target: self.solver.shift.target,
            probes: self.solver.probes,
            seed: self.seed,
            force_mu,
        };
        Ok(BuiltModel {
            family,
            counterexample,
            grid,
            p: self.solver.p,
            seed: self.seed,
            solve,
            data: self.data.clone(),
        })
    }
}
