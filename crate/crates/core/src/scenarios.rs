//! Problem data: exact solutions, derived forcing and boundary/interface
//! data, and the random permeability field.

use std::f64::consts::PI;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::forms::{Permeability, PhysicalParams};
use crate::mesh::{DomainSpec, Mesh, Rect, Subdomain};
use crate::spaces::BcMode;

/// Exact fields with the derivatives needed to build consistent data.
///
/// Gradients are stored as `g[a][b] = d u_a / d x_b`.
pub trait ExactSolution: Send + Sync {
    fn velocity_s(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn velocity_s_grad(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2];
    fn velocity_s_dt(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn velocity_s_laplacian(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn pressure_s(&self, x: [f64; 2], t: f64) -> f64;
    fn pressure_s_grad(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn velocity_d(&self, x: [f64; 2], t: f64) -> [f64; 2];
    fn velocity_d_div(&self, x: [f64; 2], t: f64) -> f64;
    fn pressure_d(&self, x: [f64; 2], t: f64) -> f64;

    fn velocity(&self, sub: Subdomain, x: [f64; 2], t: f64) -> [f64; 2] {
        match sub {
            Subdomain::Stokes => self.velocity_s(x, t),
            Subdomain::Darcy => self.velocity_d(x, t),
        }
    }

    fn pressure(&self, sub: Subdomain, x: [f64; 2], t: f64) -> f64 {
        match sub {
            Subdomain::Stokes => self.pressure_s(x, t),
            Subdomain::Darcy => self.pressure_d(x, t),
        }
    }
}

/// Right-hand sides and boundary/interface data. `n` is the outward normal
/// of the subdomain on exterior boundaries and the free-flow-to-porous normal
/// on the interface. Every method defaults to zero.
pub trait FlowData: Send + Sync {
    /// Momentum source of the time-dependent problem.
    fn forcing_s(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// Momentum source used by the stationary solve that supplies initial data.
    fn forcing_s_stationary(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.forcing_s(x, t)
    }
    fn forcing_d(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Prescribed free-flow velocity.
    fn velocity_s_data(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// Prescribed normal stress `(2 mu eps(u) - p I) n`.
    fn stress_s_data(&self, _x: [f64; 2], _n: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// Prescribed porous normal flux `u . n`.
    fn flux_d_data(&self, _x: [f64; 2], _n: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Prescribed porous pressure.
    fn pressure_d_data(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Normal-velocity mismatch `(u^s - u^d) . n` on the interface.
    fn interface_mass(&self, _x: [f64; 2], _n: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Slip-law mismatch; only its tangential part is used.
    fn interface_slip(&self, _x: [f64; 2], _n: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }
    /// Normal force-balance mismatch.
    fn interface_force(&self, _x: [f64; 2], _n: [f64; 2], _t: f64) -> f64 {
        0.0
    }
    /// Initial free-flow velocity for interpolated starts.
    fn initial_velocity(&self, _x: [f64; 2]) -> [f64; 2] {
        [0.0; 2]
    }
}

/// Data obtained by substituting an exact solution into the equations and
/// the (modified) boundary and interface conditions.
pub struct DerivedData<E> {
    pub exact: E,
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
}

/// Build data consistent with `exact` for constant viscosity and permeability.
pub fn derive_forcing<E: ExactSolution>(exact: E, mu: f64, kappa: f64, alpha: f64) -> DerivedData<E> {
    DerivedData { exact, mu, kappa, alpha }
}

impl<E: ExactSolution> DerivedData<E> {
    fn strain_normal(&self, x: [f64; 2], n: [f64; 2], t: f64) -> [f64; 2] {
        let g = self.exact.velocity_s_grad(x, t);
        let e = [
            [g[0][0], 0.5 * (g[0][1] + g[1][0])],
            [0.5 * (g[0][1] + g[1][0]), g[1][1]],
        ];
        [e[0][0] * n[0] + e[0][1] * n[1], e[1][0] * n[0] + e[1][1] * n[1]]
    }
}

fn tangential(v: [f64; 2], n: [f64; 2]) -> [f64; 2] {
    let vn = v[0] * n[0] + v[1] * n[1];
    [v[0] - vn * n[0], v[1] - vn * n[1]]
}

impl<E: ExactSolution> FlowData for DerivedData<E> {
    fn forcing_s(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let u = self.exact.velocity_s(x, t);
        let g = self.exact.velocity_s_grad(x, t);
        let dt = self.exact.velocity_s_dt(x, t);
        let st = self.forcing_s_stationary(x, t);
        [
            dt[0] + g[0][0] * u[0] + g[0][1] * u[1] + st[0],
            dt[1] + g[1][0] * u[0] + g[1][1] * u[1] + st[1],
        ]
    }

    fn forcing_s_stationary(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let lap = self.exact.velocity_s_laplacian(x, t);
        let gp = self.exact.pressure_s_grad(x, t);
        [gp[0] - self.mu * lap[0], gp[1] - self.mu * lap[1]]
    }

    fn forcing_d(&self, x: [f64; 2], t: f64) -> f64 {
        -self.exact.velocity_d_div(x, t)
    }

    fn velocity_s_data(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.exact.velocity_s(x, t)
    }

    fn stress_s_data(&self, x: [f64; 2], n: [f64; 2], t: f64) -> [f64; 2] {
        let en = self.strain_normal(x, n, t);
        let p = self.exact.pressure_s(x, t);
        [2.0 * self.mu * en[0] - p * n[0], 2.0 * self.mu * en[1] - p * n[1]]
    }

    fn flux_d_data(&self, x: [f64; 2], n: [f64; 2], t: f64) -> f64 {
        let u = self.exact.velocity_d(x, t);
        u[0] * n[0] + u[1] * n[1]
    }

    fn pressure_d_data(&self, x: [f64; 2], t: f64) -> f64 {
        self.exact.pressure_d(x, t)
    }

    fn interface_mass(&self, x: [f64; 2], n: [f64; 2], t: f64) -> f64 {
        let us = self.exact.velocity_s(x, t);
        let ud = self.exact.velocity_d(x, t);
        (us[0] - ud[0]) * n[0] + (us[1] - ud[1]) * n[1]
    }

    fn interface_slip(&self, x: [f64; 2], n: [f64; 2], t: f64) -> [f64; 2] {
        let en = tangential(self.strain_normal(x, n, t), n);
        let ut = tangential(self.exact.velocity_s(x, t), n);
        let c = self.alpha * self.mu / self.kappa.sqrt();
        [-2.0 * self.mu * en[0] - c * ut[0], -2.0 * self.mu * en[1] - c * ut[1]]
    }

    fn interface_force(&self, x: [f64; 2], n: [f64; 2], t: f64) -> f64 {
        let en = self.strain_normal(x, n, t);
        self.exact.pressure_s(x, t) - 2.0 * self.mu * (en[0] * n[0] + en[1] * n[1]) - self.exact.pressure_d(x, t)
    }

    fn initial_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        self.exact.velocity_s(x, 0.0)
    }
}

/// Smooth time-dependent solution on the unit-square layout.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSolution {
    pub mu: f64,
    pub kappa: f64,
}

impl ExactSolution for ManufacturedSolution {
    fn velocity_s(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c = (PI * x[0] * x[1] - t).cos();
        [PI * x[0] * c + 1.0, -PI * x[1] * c + 2.0 * x[0]]
    }

    fn velocity_s_grad(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        let (s, c) = (PI * x[0] * x[1] - t).sin_cos();
        let (px, py) = (x[0], x[1]);
        [
            [PI * c - PI * PI * px * py * s, -PI * PI * px * px * s],
            [PI * PI * py * py * s + 2.0, -PI * c + PI * PI * px * py * s],
        ]
    }

    fn velocity_s_dt(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let s = (PI * x[0] * x[1] - t).sin();
        [PI * x[0] * s, -PI * x[1] * s]
    }

    fn velocity_s_laplacian(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let (s, c) = (PI * x[0] * x[1] - t).sin_cos();
        let (px, py) = (x[0], x[1]);
        let p2 = PI * PI;
        let p3 = p2 * PI;
        [
            -2.0 * p2 * py * s - p3 * px * py * py * c - p3 * px * px * px * c,
            p3 * py * py * py * c + 2.0 * p2 * px * s + p3 * px * px * py * c,
        ]
    }

    fn pressure_s(&self, x: [f64; 2], t: f64) -> f64 {
        (3.0 * x[0] - t).sin() * (4.0 * x[1]).cos() + (2.0 * PI * x[0] * x[1]).sin()
    }

    fn pressure_s_grad(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let c2 = (2.0 * PI * x[0] * x[1]).cos();
        [
            3.0 * (3.0 * x[0] - t).cos() * (4.0 * x[1]).cos() + 2.0 * PI * x[1] * c2,
            -4.0 * (3.0 * x[0] - t).sin() * (4.0 * x[1]).sin() + 2.0 * PI * x[0] * c2,
        ]
    }

    fn velocity_d(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        let s = (3.0 * x[0] * x[1] - t / 10.0).sin();
        let r = self.kappa / self.mu * 3.0 * s;
        [r * x[1], r * x[0]]
    }

    fn velocity_d_div(&self, x: [f64; 2], t: f64) -> f64 {
        let c = (3.0 * x[0] * x[1] - t / 10.0).cos();
        self.kappa / self.mu * 9.0 * (x[0] * x[0] + x[1] * x[1]) * c
    }

    fn pressure_d(&self, x: [f64; 2], t: f64) -> f64 {
        (3.0 * x[0] * x[1] - t / 10.0).cos()
    }
}

/// Monomial `c x^a y^b`.
#[derive(Debug, Clone, Copy)]
struct Term(f64, i32, i32);

fn mono_d(terms: &[Term], x: [f64; 2], dx: i32, dy: i32) -> f64 {
    let fall = |n: i32, d: i32| -> f64 { (0..d).map(|j| (n - j) as f64).product() };
    terms
        .iter()
        .filter(|t| t.1 >= dx && t.2 >= dy)
        .map(|t| t.0 * fall(t.1, dx) * fall(t.2, dy) * x[0].powi(t.1 - dx) * x[1].powi(t.2 - dy))
        .sum()
}

/// Steady polynomial solution that the discrete spaces of degree `k` contain:
/// a divergence-free free-flow velocity of degree `k` (curl of a stream
/// function of degree `k + 1`), pressures of degree `k - 1` and the Darcy
/// velocity they induce.
#[derive(Debug, Clone)]
pub struct PolynomialSolution {
    stream: Vec<Term>,
    pressure_s: Vec<Term>,
    pressure_d: Vec<Term>,
    kappa_over_mu: f64,
}

impl PolynomialSolution {
    pub fn new(k: usize, mu: f64, kappa: f64) -> Self {
        let k = k as i32;
        let stream = vec![
            Term(1.0, k + 1, 0),
            Term(-0.5, 0, k + 1),
            Term(0.3, 1, k),
            Term(1.0, 1, 1),
            Term(0.2, 0, 1),
        ];
        let mut pressure_s = vec![Term(0.7, 0, 0)];
        let mut pressure_d = vec![Term(0.4, 0, 0)];
        if k >= 2 {
            pressure_s.extend([Term(0.5, k - 1, 0), Term(-0.25, 0, k - 1)]);
            pressure_d.extend([Term(0.3, k - 1, 0), Term(0.6, 0, k - 1)]);
        }
        Self {
            stream,
            pressure_s,
            pressure_d,
            kappa_over_mu: kappa / mu,
        }
    }

    fn psi(&self, x: [f64; 2], dx: i32, dy: i32) -> f64 {
        mono_d(&self.stream, x, dx, dy)
    }
}

impl ExactSolution for PolynomialSolution {
    fn velocity_s(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        [self.psi(x, 0, 1), -self.psi(x, 1, 0)]
    }

    fn velocity_s_grad(&self, x: [f64; 2], _t: f64) -> [[f64; 2]; 2] {
        [
            [self.psi(x, 1, 1), self.psi(x, 0, 2)],
            [-self.psi(x, 2, 0), -self.psi(x, 1, 1)],
        ]
    }

    fn velocity_s_dt(&self, _x: [f64; 2], _t: f64) -> [f64; 2] {
        [0.0; 2]
    }

    fn velocity_s_laplacian(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        [
            self.psi(x, 2, 1) + self.psi(x, 0, 3),
            -self.psi(x, 3, 0) - self.psi(x, 1, 2),
        ]
    }

    fn pressure_s(&self, x: [f64; 2], _t: f64) -> f64 {
        mono_d(&self.pressure_s, x, 0, 0)
    }

    fn pressure_s_grad(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        [mono_d(&self.pressure_s, x, 1, 0), mono_d(&self.pressure_s, x, 0, 1)]
    }

    fn velocity_d(&self, x: [f64; 2], _t: f64) -> [f64; 2] {
        [
            -self.kappa_over_mu * mono_d(&self.pressure_d, x, 1, 0),
            -self.kappa_over_mu * mono_d(&self.pressure_d, x, 0, 1),
        ]
    }

    fn velocity_d_div(&self, x: [f64; 2], _t: f64) -> f64 {
        -self.kappa_over_mu * (mono_d(&self.pressure_d, x, 2, 0) + mono_d(&self.pressure_d, x, 0, 2))
    }

    fn pressure_d(&self, x: [f64; 2], _t: f64) -> f64 {
        mono_d(&self.pressure_d, x, 0, 0)
    }
}

/// Pulsed free-flow inflow profile, prescribed on the whole free-flow boundary.
pub struct SubsurfaceData;

impl SubsurfaceData {
    pub fn inflow(x: [f64; 2], t: f64) -> [f64; 2] {
        [
            5.0 / 42.0 * (10.0 * x[1] + 1.0) * (1.0 - x[0] / 5.0) * ((PI * t / 5.0).cos() + 1.1),
            0.0,
        ]
    }
}

impl FlowData for SubsurfaceData {
    fn velocity_s_data(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        Self::inflow(x, t)
    }
}

/// No sources and homogeneous data; the initial velocity is user supplied.
pub struct ZeroData {
    pub initial: fn([f64; 2]) -> [f64; 2],
}

impl FlowData for ZeroData {
    fn initial_velocity(&self, x: [f64; 2]) -> [f64; 2] {
        (self.initial)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialMode {
    /// Solve the stationary coupled problem at the start time.
    StationarySolve,
    /// H(div) interpolation of the data's initial velocity.
    Interpolate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaSpec {
    Constant(f64),
    /// Per-cell `kappa = mu * 10^(-r)`, `r` uniform in `[2, 6]`.
    Random { seed: u64 },
}

pub struct Scenario {
    pub name: String,
    pub domain: DomainSpec,
    pub mu: f64,
    pub alpha: f64,
    /// Penalty parameter; `None` selects `8 k^2`.
    pub beta: Option<f64>,
    pub kappa: KappaSpec,
    pub bc_mode: BcMode,
    pub initial_mode: InitialMode,
    pub data: Arc<dyn FlowData>,
    pub exact: Option<Arc<dyn ExactSolution>>,
}

impl Scenario {
    pub fn manufactured(mu: f64, kappa: f64, alpha: f64) -> Self {
        let exact = ManufacturedSolution { mu, kappa };
        Self {
            name: "manufactured".into(),
            domain: DomainSpec::manufactured(),
            mu,
            alpha,
            beta: None,
            kappa: KappaSpec::Constant(kappa),
            bc_mode: BcMode::Inhomogeneous,
            initial_mode: InitialMode::StationarySolve,
            data: Arc::new(derive_forcing(exact, mu, kappa, alpha)),
            exact: Some(Arc::new(exact)),
        }
    }

    /// Steady polynomial solution contained in the degree-`k` spaces.
    pub fn polynomial_patch(k: usize, mu: f64, kappa: f64, alpha: f64) -> Self {
        let exact = PolynomialSolution::new(k, mu, kappa);
        Self {
            name: format!("polynomial_patch_k{k}"),
            domain: DomainSpec::manufactured(),
            mu,
            alpha,
            beta: None,
            kappa: KappaSpec::Constant(kappa),
            bc_mode: BcMode::Inhomogeneous,
            initial_mode: InitialMode::StationarySolve,
            data: Arc::new(derive_forcing(exact.clone(), mu, kappa, alpha)),
            exact: Some(Arc::new(exact)),
        }
    }

    /// Default interface for the surface/subsurface layout: an illustrative
    /// three-segment polyline with vertices on `x = 0, 1/4, 3/4, 1`.
    pub fn default_subsurface_polyline() -> Vec<[f64; 2]> {
        vec![[0.0, 0.0], [0.25, -0.05], [0.75, 0.05], [1.0, 0.0]]
    }

    pub fn subsurface(mu: f64, alpha: f64, seed: u64, polyline: Vec<[f64; 2]>) -> Self {
        Self {
            name: "subsurface".into(),
            domain: DomainSpec::all_dirichlet(
                Rect { x: [0.0, 1.0], y: [0.0, 0.5] },
                Rect { x: [0.0, 1.0], y: [-0.5, 0.0] },
                polyline,
            ),
            mu,
            alpha,
            beta: None,
            kappa: KappaSpec::Random { seed },
            bc_mode: BcMode::Inhomogeneous,
            initial_mode: InitialMode::StationarySolve,
            data: Arc::new(SubsurfaceData),
            exact: None,
        }
    }

    /// Homogeneous problem started from an interpolated velocity.
    pub fn homogeneous(mu: f64, kappa: f64, alpha: f64, initial: fn([f64; 2]) -> [f64; 2]) -> Self {
        Self {
            name: "homogeneous".into(),
            domain: DomainSpec::unit_homogeneous(),
            mu,
            alpha,
            beta: None,
            kappa: KappaSpec::Constant(kappa),
            bc_mode: BcMode::Homogeneous,
            initial_mode: InitialMode::Interpolate,
            data: Arc::new(ZeroData { initial }),
            exact: None,
        }
    }

    /// Parameters on `mesh` for degree `k` (draws the permeability field if random).
    pub fn physical_params(&self, mesh: &Mesh, k: usize) -> PhysicalParams {
        let kappa = match self.kappa {
            KappaSpec::Constant(v) => Permeability::Constant(v),
            KappaSpec::Random { seed } => Permeability::PerCell(PermeabilityField::new(mesh, self.mu, seed).values),
        };
        PhysicalParams {
            mu: self.mu,
            alpha: self.alpha,
            beta: self.beta.unwrap_or(8.0 * (k * k) as f64),
            kappa,
        }
    }
}

/// Piecewise-constant permeability on the porous cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    pub seed: u64,
    /// One value per mesh cell; free-flow cells hold `NaN`.
    pub values: Vec<f64>,
}

impl PermeabilityField {
    pub fn new(mesh: &Mesh, mu: f64, seed: u64) -> Self {
        // Draws follow cell order, so one seed gives one field on every platform.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = mesh
            .cells
            .iter()
            .map(|cell| match cell.subdomain {
                Subdomain::Stokes => f64::NAN,
                Subdomain::Darcy => {
                    let unit = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                    let r = 2.0 + 4.0 * unit;
                    mu * 10f64.powf(-r)
                }
            })
            .collect();
        Self { seed, values }
    }
}
