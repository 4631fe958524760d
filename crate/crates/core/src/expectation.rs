//! Expected occupations `rho(x, t)` on the extended lattice `0..=N+1`.
//!
//! They solve the closed linear system
//!
//! ```text
//! d rho(x)/dt   = 1/2 (rho(x-1) + rho(x+1) - 2 rho(x)),   1 <= x <= N
//! d rho(0)/dt   = (rho(1) - rho(0)) / 2M
//! d rho(N+1)/dt = (rho(N) - rho(N+1)) / 2M
//! ```
//!
//! which conserves `sum_{x=1}^N rho(x) + M (rho(0) + rho(N+1))`. Two
//! integrators are provided: classical RK4 with a tolerance-driven fixed
//! step, and an exact spectral propagator. The generator becomes symmetric
//! after conjugation by `W^{1/2}`, `W = diag(M, 1, ..., 1, M)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::model::{BoundaryDensities, InitialCondition, SystemParams};
use crate::sticky::StickyWalk;

/// Entries may leave [0, 1] by this much before evolution fails.
pub const RANGE_SLACK: f64 = 1e-7;

/// Expected occupations on `0..=N+1` at microscopic time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    rho: Vec<f64>,
    t: f64,
}

impl DensityProfile {
    /// `values` covers the extended lattice, so `N = values.len() - 2`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::at_time(values, 0.0)
    }

    pub fn at_time(values: Vec<f64>, t: f64) -> Result<Self> {
        if values.len() < 4 {
            return Err(invalid(format!("profile needs N >= 2 channel sites, got {}", values.len().saturating_sub(2))));
        }
        if let Some((x, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("non-finite density {v} at site {x}")));
        }
        if let Some((x, &v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("density {v} at site {x} outside [0, 1]")));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid(format!("time must be finite and non-negative, got {t}")));
        }
        Ok(Self { rho: values, t })
    }

    /// `rho(x, 0) = u0(x/N)` in the channel, `v_∓` at the end sites.
    pub fn from_initial(initial: &InitialCondition, params: &SystemParams) -> Result<Self> {
        let n = params.n();
        let mut values = Vec::with_capacity(n + 2);
        values.push(initial.boundary.v_minus);
        for x in 1..=n {
            values.push(initial.site_density(x, params)?);
        }
        values.push(initial.boundary.v_plus);
        Self::new(values)
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(vec![c; n + 2])
    }

    /// Indicator of site `x`.
    pub fn delta(n: usize, x: usize) -> Result<Self> {
        if x > n + 1 {
            return Err(invalid(format!("site {x} outside 0..={}", n + 1)));
        }
        let mut values = vec![0.0; n + 2];
        values[x] = 1.0;
        Self::new(values)
    }

    pub fn n(&self) -> usize {
        self.rho.len() - 2
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    pub fn get(&self, x: usize) -> f64 {
        self.rho[x]
    }

    pub fn minus(&self) -> f64 {
        self.rho[0]
    }

    pub fn plus(&self) -> f64 {
        self.rho[self.rho.len() - 1]
    }

    /// `sum_{x=1}^N rho(x) + M (rho(0) + rho(N+1))`.
    pub fn mass(&self, m: u64) -> f64 {
        let n = self.n();
        self.rho[1..=n].iter().sum::<f64>() + m as f64 * (self.rho[0] + self.rho[n + 1])
    }

    /// `sum_{y=1}^x rho(y)`.
    pub fn partial_mass(&self, x: usize) -> f64 {
        self.rho[1..=x].iter().sum()
    }

    /// Combination `a P + b Q` of two profiles on the same lattice.
    pub fn combine(a: f64, p: &Self, b: f64, q: &Self) -> Result<Self> {
        if p.rho.len() != q.rho.len() {
            return Err(invalid("profiles live on different lattices"));
        }
        Self::at_time(p.rho.iter().zip(&q.rho).map(|(x, y)| a * x + b * y).collect(), p.t)
    }

    fn advanced(&self, values: Vec<f64>, dt: f64) -> Result<Self> {
        if let Some((site, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= -RANGE_SLACK && **v <= 1.0 + RANGE_SLACK))
        {
            return Err(Error::OutOfRange { site, value });
        }
        Ok(Self {
            rho: values,
            t: self.t + dt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Spectral when RK4 would need more than `(N+2)^2` steps.
    #[default]
    Auto,
    Rk4,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Target global error per unit time.
    pub tol: f64,
    pub method: Method,
    /// Repeat RK4 runs at half step and fail if the Richardson estimate
    /// exceeds `tol * max(dt, 1)`.
    pub verify: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            method: Method::Auto,
            verify: false,
        }
    }
}

impl EvolveOptions {
    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    /// RK4 step for the requested tolerance. The generator's spectrum lies
    /// in `[-2, 0]`, and the accumulated error of a mode `lambda` per unit
    /// time is about `h^4 |lambda|^5 / 120`.
    pub fn rk4_step(&self) -> f64 {
        (3.75 * self.tol).powf(0.25).min(0.25)
    }
}

/// How the end sites behave.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Ends {
    Reservoir { m: f64 },
    Fixed,
}

fn rhs(rho: &[f64], ends: Ends, out: &mut [f64]) {
    let last = rho.len() - 1;
    for x in 1..last {
        out[x] = 0.5 * (rho[x - 1] + rho[x + 1] - 2.0 * rho[x]);
    }
    match ends {
        Ends::Reservoir { m } => {
            out[0] = (rho[1] - rho[0]) / (2.0 * m);
            out[last] = (rho[last - 1] - rho[last]) / (2.0 * m);
        }
        Ends::Fixed => {
            out[0] = 0.0;
            out[last] = 0.0;
        }
    }
}

fn rk4(rho: &[f64], ends: Ends, dt: f64, h_max: f64) -> Vec<f64> {
    let len = rho.len();
    let steps = (dt / h_max).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let mut y = rho.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; len], vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut tmp = vec![0.0; len];
    for _ in 0..steps {
        rhs(&y, ends, &mut k1);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        rhs(&tmp, ends, &mut k2);
        for i in 0..len {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        rhs(&tmp, ends, &mut k3);
        for i in 0..len {
            tmp[i] = y[i] + h * k3[i];
        }
        rhs(&tmp, ends, &mut k4);
        for i in 0..len {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Richardson estimate of the RK4 error with step `h`: `16/15 |y_h - y_{h/2}|`.
pub fn rk4_error_estimate(profile: &DensityProfile, params: &SystemParams, dt: f64, h: f64) -> f64 {
    let ends = Ends::Reservoir { m: params.m() as f64 };
    let coarse = rk4(&profile.rho, ends, dt, h);
    let fine = rk4(&profile.rho, ends, dt, 0.5 * h);
    16.0 / 15.0 * max_abs_diff(&coarse, &fine)
}

/// Exact propagator `exp(t A)` of the reservoir system, from one
/// eigendecomposition of the symmetrised generator.
#[derive(Debug, Clone)]
pub struct Propagator {
    sqrt_w: DVector<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl Propagator {
    pub fn new(params: &SystemParams) -> Self {
        let n = params.n();
        let m = params.m() as f64;
        let len = n + 2;
        // S = W^{1/2} A W^{-1/2}: the interior block keeps A's entries and
        // the reservoir couplings become 1 / (2 sqrt(M)).
        let mut s = DMatrix::<f64>::zeros(len, len);
        for x in 1..=n {
            s[(x, x)] = -1.0;
        }
        for x in 1..n {
            s[(x, x + 1)] = 0.5;
            s[(x + 1, x)] = 0.5;
        }
        let c = 0.5 / m.sqrt();
        s[(0, 0)] = -0.5 / m;
        s[(0, 1)] = c;
        s[(1, 0)] = c;
        s[(n + 1, n + 1)] = -0.5 / m;
        s[(n + 1, n)] = c;
        s[(n, n + 1)] = c;
        let eig = SymmetricEigen::new(s);
        let mut sqrt_w = DVector::from_element(len, 1.0);
        sqrt_w[0] = m.sqrt();
        sqrt_w[n + 1] = m.sqrt();
        Self {
            sqrt_w,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn len(&self) -> usize {
        self.sqrt_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqrt_w.is_empty()
    }

    /// Eigenvalues of the generator, all in `[-2, 0]`.
    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    pub fn apply(&self, rho: &[f64], t: f64) -> Vec<f64> {
        let scaled = DVector::from_iterator(self.len(), rho.iter().zip(self.sqrt_w.iter()).map(|(r, w)| r * w));
        let mut coeffs = self.eigenvectors.tr_mul(&scaled);
        for (c, l) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= (l * t).exp();
        }
        let back = &self.eigenvectors * coeffs;
        back.iter().zip(self.sqrt_w.iter()).map(|(v, w)| v / w).collect()
    }

    /// Dense `exp(t A)`.
    pub fn matrix(&self, t: f64) -> DMatrix<f64> {
        let decay = DMatrix::from_diagonal(&self.eigenvalues.map(|l| (l * t).exp()));
        let sym = &self.eigenvectors * decay * self.eigenvectors.transpose();
        let len = self.len();
        DMatrix::from_fn(len, len, |i, j| sym[(i, j)] * self.sqrt_w[j] / self.sqrt_w[i])
    }
}

fn use_spectral(opts: &EvolveOptions, len: usize, dt: f64) -> bool {
    match opts.method {
        Method::Rk4 => false,
        Method::Spectral => true,
        Method::Auto => dt / opts.rk4_step() > (len * len) as f64,
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(invalid(format!("evolution time must be finite and non-negative, got {dt}")));
    }
    Ok(())
}

/// Advances the reservoir system by `dt`.
pub fn evolve(profile: &DensityProfile, params: &SystemParams, dt: f64, opts: &EvolveOptions) -> Result<DensityProfile> {
    check_dt(dt)?;
    if profile.n() != params.n() {
        return Err(invalid(format!("profile has N = {}, params N = {}", profile.n(), params.n())));
    }
    if dt == 0.0 {
        return Ok(profile.clone());
    }
    let values = if use_spectral(opts, profile.rho.len(), dt) {
        Propagator::new(params).apply(&profile.rho, dt)
    } else {
        let h = opts.rk4_step();
        let ends = Ends::Reservoir { m: params.m() as f64 };
        let y = rk4(&profile.rho, ends, dt, h);
        if opts.verify {
            let fine = rk4(&profile.rho, ends, dt, 0.5 * h);
            let estimate = 16.0 / 15.0 * max_abs_diff(&y, &fine);
            let tol = opts.tol * dt.max(1.0);
            if estimate > tol {
                return Err(Error::Integrator { estimate, tol });
            }
        }
        y
    };
    profile.advanced(values, dt)
}

/// Evolves with the spectral propagator, reusing its decomposition.
pub fn evolve_with(propagator: &Propagator, profile: &DensityProfile, dt: f64) -> Result<DensityProfile> {
    check_dt(dt)?;
    if propagator.len() != profile.rho.len() {
        return Err(invalid("propagator and profile sizes differ"));
    }
    profile.advanced(propagator.apply(&profile.rho, dt), dt)
}

/// Ideal-reservoir evolution: the same bulk Laplacian with
/// `rho(0) = v_-` and `rho(N+1) = v_+` held fixed.
pub fn evolve_dirichlet(
    profile: &DensityProfile,
    boundary: BoundaryDensities,
    dt: f64,
    opts: &EvolveOptions,
) -> Result<DensityProfile> {
    check_dt(dt)?;
    let n = profile.n();
    let mut rho = profile.rho.clone();
    rho[0] = boundary.v_minus;
    rho[n + 1] = boundary.v_plus;
    if dt == 0.0 {
        return profile.advanced(rho, 0.0);
    }
    let values = if use_spectral(opts, rho.len(), dt) {
        dirichlet_spectral(&rho, dt)
    } else {
        rk4(&rho, Ends::Fixed, dt, opts.rk4_step())
    };
    profile.advanced(values, dt)
}

/// Sine-mode solution: the deviation from the discrete linear profile
/// decays in modes `sin(k pi x / (N+1))` at rates `1 - cos(k pi / (N+1))`.
fn dirichlet_spectral(rho: &[f64], dt: f64) -> Vec<f64> {
    let n = rho.len() - 2;
    let len = (n + 1) as f64;
    let (a, b) = (rho[0], rho[n + 1]);
    let line = |x: usize| a + (b - a) * x as f64 / len;
    let dev: Vec<f64> = (1..=n).map(|x| rho[x] - line(x)).collect();
    let mode = |k: usize, x: usize| (std::f64::consts::PI * (k * x) as f64 / len).sin();
    let coeffs: Vec<f64> = (1..=n)
        .map(|k| {
            let c = 2.0 / len * (1..=n).map(|x| dev[x - 1] * mode(k, x)).sum::<f64>();
            let rate = 1.0 - (std::f64::consts::PI * k as f64 / len).cos();
            c * (-rate * dt).exp()
        })
        .collect();
    let mut out = rho.to_vec();
    for x in 1..=n {
        out[x] = line(x) + (1..=n).map(|k| coeffs[k - 1] * mode(k, x)).sum::<f64>();
    }
    out
}

/// Both sides of the duality `rho(x, t) = E_x[rho(X(t), 0)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck {
    pub ode: f64,
    pub monte_carlo: f64,
    pub se: f64,
    pub residual: f64,
}

/// Compares the evolved profile at `(x, t)` with a sticky-walk Monte Carlo
/// estimate over `k` walks started at `x`.
pub fn duality_residual(
    profile: &DensityProfile,
    params: &SystemParams,
    x: usize,
    t: f64,
    k: usize,
    seed: u64,
) -> Result<DualityCheck> {
    if x > params.n() + 1 {
        return Err(invalid(format!("site {x} outside 0..={}", params.n() + 1)));
    }
    if k < 2 {
        return Err(invalid("duality check needs at least two walks"));
    }
    let ode = evolve(profile, params, t, &EvolveOptions::default())?.get(x);
    let law = StickyWalk::from_params(params).empirical_law(x, t, k, seed)?;
    let mean: f64 = law.iter().zip(&profile.rho).map(|(p, r)| p * r).sum();
    let second: f64 = law.iter().zip(&profile.rho).map(|(p, r)| p * r * r).sum();
    let kf = k as f64;
    let var = ((second - mean * mean) * kf / (kf - 1.0)).max(0.0);
    Ok(DualityCheck {
        ode,
        monte_carlo: mean,
        se: (var / kf).sqrt(),
        residual: (ode - mean).abs(),
    })
}

/// Residual of the partial-mass balance
///
/// ```text
/// d/dt sum_{y=1}^x rho(y) = 1/2 (rho(x+1) - rho(x)) + 1/2 (rho(0) - rho(1))
/// ```
///
/// with `x = floor(l N)`, integrated over `[t0, t]` by Simpson's rule on a
/// grid of spacing at most `step` along the exact trajectory.
pub fn flux_identity_residual(
    profile: &DensityProfile,
    params: &SystemParams,
    l: f64,
    t0: f64,
    t: f64,
    step: f64,
) -> Result<f64> {
    if !(l > 0.0 && l <= 1.0) {
        return Err(invalid(format!("l must lie in (0, 1], got {l}")));
    }
    if !(t0 >= 0.0 && t > t0) {
        return Err(invalid(format!("need 0 <= t0 < t, got t0 = {t0}, t = {t}")));
    }
    if !(step > 0.0) {
        return Err(invalid(format!("quadrature step must be positive, got {step}")));
    }
    let n = params.n();
    let x = ((l * n as f64).floor() as usize).min(n);
    let propagator = Propagator::new(params);
    let start = evolve_with(&propagator, profile, t0)?;

    let mut intervals = ((t - t0) / step).ceil() as usize;
    intervals += intervals % 2;
    let h = (t - t0) / intervals as f64;
    let step_matrix = propagator.matrix(h);

    let flux = |r: &DVector<f64>| 0.5 * (r[x + 1] - r[x]) + 0.5 * (r[0] - r[1]);
    let partial = |r: &DVector<f64>| r.rows(1, x).sum();

    let mut rho = DVector::from_column_slice(start.values());
    let initial_mass = partial(&rho);
    let mut integral = flux(&rho);
    for j in 1..=intervals {
        rho = &step_matrix * rho;
        let weight = if j == intervals {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        integral += weight * flux(&rho);
    }
    integral *= h / 3.0;
    Ok((partial(&rho) - initial_mass - integral).abs())
}
