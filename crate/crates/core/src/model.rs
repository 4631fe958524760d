//! State space and transition rules of the channel-plus-reservoirs chain.
//!
//! The channel `1..=N` carries exclusion dynamics: every bond `(x, x+1)`
//! exchanges its two occupations at rate 1/2. Each end of the channel is
//! coupled to a reservoir of `M` sites that is tracked only through its
//! particle count `n_-` (left) or `n_+` (right). The right boundary fires at
//!
//! ```text
//! c_N = 1/2 (1 - n_+/M) eta(N) + 1/2 (n_+/M) (1 - eta(N))
//! ```
//!
//! moving the particle at `N` into the reservoir, or one reservoir particle
//! onto the empty site `N`. The left boundary is the mirror image.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Bernoulli, Binomial, Distribution};

use crate::error::{invalid, Error, Result};

/// Lattice and reservoir geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    n: usize,
    alpha: f64,
    m: u64,
}

impl SystemParams {
    /// Channel of `n` sites with reservoirs of size `round(n^(1 + alpha))`.
    pub fn new(n: usize, alpha: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("channel size must be at least 2, got {n}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be positive and finite, got {alpha}")));
        }
        let m = (n as f64).powf(1.0 + alpha).round();
        if m > u64::MAX as f64 / 4.0 {
            return Err(invalid("reservoir size overflows"));
        }
        Ok(Self {
            n,
            alpha,
            m: (m as u64).max(1),
        })
    }

    /// Explicit reservoir size. `alpha` is recorded as `log_N(M) - 1` and
    /// may be non-positive for tiny test reservoirs.
    pub fn with_reservoir(n: usize, m: u64) -> Result<Self> {
        if n < 2 {
            return Err(invalid(format!("channel size must be at least 2, got {n}")));
        }
        if m == 0 {
            return Err(invalid("reservoir size must be at least 1"));
        }
        let alpha = (m as f64).ln() / (n as f64).ln() - 1.0;
        Ok(Self { n, alpha, m })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    /// Lattice spacing `1/N`.
    pub fn epsilon(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Microscopic time `N^(2 + alpha') t` for macroscopic time `t`.
    pub fn micro_time(&self, alpha_prime: f64, t: f64) -> f64 {
        (self.n as f64).powf(2.0 + alpha_prime) * t
    }
}

/// Fixed boundary densities `v_-`, `v_+`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryDensities {
    pub v_minus: f64,
    pub v_plus: f64,
}

impl BoundaryDensities {
    pub fn new(v_minus: f64, v_plus: f64) -> Result<Self> {
        for (name, v) in [("v_minus", v_minus), ("v_plus", v_plus)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { v_minus, v_plus })
    }

    pub fn mirrored(self) -> Self {
        Self {
            v_minus: self.v_plus,
            v_plus: self.v_minus,
        }
    }
}

/// A macroscopic density profile `u0 : [0, 1] -> [0, 1]`.
#[derive(Clone)]
pub enum Profile {
    Const(f64),
    /// `u0(r) = r`.
    Linear,
    /// `u0(r) = sin(pi r)`.
    Sine,
    /// `a` on `[0, 1/2)`, `b` on `[1/2, 1]`.
    Step(f64, f64),
    /// `u0(r) = a + (b - a) r`.
    Affine(f64, f64),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Profile {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Profile::Custom(Arc::new(f))
    }

    /// The linear interpolation between the two boundary densities.
    pub fn interpolating(boundary: BoundaryDensities) -> Self {
        Profile::Affine(boundary.v_minus, boundary.v_plus)
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Profile::Const(c) => *c,
            Profile::Linear => r,
            Profile::Sine => (std::f64::consts::PI * r).sin(),
            Profile::Step(a, b) => {
                if r < 0.5 {
                    *a
                } else {
                    *b
                }
            }
            Profile::Affine(a, b) => a + (b - a) * r,
            Profile::Custom(f) => f(r),
        }
    }

    /// The profile seen through the relabeling `r -> 1 - r`.
    pub fn mirrored(&self) -> Self {
        match self {
            Profile::Const(c) => Profile::Const(*c),
            Profile::Affine(a, b) => Profile::Affine(*b, *a),
            Profile::Linear => Profile::Affine(1.0, 0.0),
            other => {
                let inner = other.clone();
                Profile::custom(move |r| inner.eval(1.0 - r))
            }
        }
    }

    fn check_values(&self) -> Result<()> {
        let bad = |v: f64| !(0.0..=1.0).contains(&v);
        match self {
            Profile::Const(c) if bad(*c) => Err(invalid(format!("const:{c} outside [0, 1]"))),
            Profile::Step(a, b) | Profile::Affine(a, b) if bad(*a) || bad(*b) => {
                Err(invalid(format!("profile values {a}, {b} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Const(c) => write!(f, "const:{c}"),
            Profile::Linear => write!(f, "linear"),
            Profile::Sine => write!(f, "sine"),
            Profile::Step(a, b) => write!(f, "step:{a},{b}"),
            Profile::Affine(a, b) => write!(f, "affine:{a},{b}"),
            Profile::Custom(_) => write!(f, "custom"),
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    /// Presets: `const:c`, `linear`, `sine`, `step:a,b`, `affine:a,b`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let nums = |a: Option<&str>, want: usize| -> Result<Vec<f64>> {
            let a = a.ok_or_else(|| invalid(format!("profile `{s}` needs {want} argument(s)")))?;
            let v = a
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| invalid(format!("profile `{s}`: {e}")))?;
            if v.len() != want {
                return Err(invalid(format!("profile `{s}` needs {want} argument(s)")));
            }
            Ok(v)
        };
        let profile = match name {
            "const" => Profile::Const(nums(args, 1)?[0]),
            "linear" if args.is_none() => Profile::Linear,
            "sine" if args.is_none() => Profile::Sine,
            "step" => {
                let v = nums(args, 2)?;
                Profile::Step(v[0], v[1])
            }
            "affine" => {
                let v = nums(args, 2)?;
                Profile::Affine(v[0], v[1])
            }
            _ => return Err(invalid(format!("unknown profile preset `{s}`"))),
        };
        profile.check_values()?;
        Ok(profile)
    }
}

/// How the reservoir counts are drawn at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReservoirInit {
    /// `n_± ~ Binomial(M, v_±)`.
    #[default]
    Binomial,
    /// `n_± = round(M v_±)`.
    Deterministic,
}

/// Initial law: independent `Bernoulli(u0(x/N))` channel sites plus
/// reservoirs at densities `v_±`.
#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub u0: Profile,
    pub boundary: BoundaryDensities,
    pub reservoir_init: ReservoirInit,
}

impl InitialCondition {
    pub fn new(u0: Profile, boundary: BoundaryDensities) -> Self {
        Self {
            u0,
            boundary,
            reservoir_init: ReservoirInit::default(),
        }
    }

    pub fn with_reservoir_init(mut self, init: ReservoirInit) -> Self {
        self.reservoir_init = init;
        self
    }

    pub fn mirrored(&self) -> Self {
        Self {
            u0: self.u0.mirrored(),
            boundary: self.boundary.mirrored(),
            reservoir_init: self.reservoir_init,
        }
    }

    /// `u0(x/N)` for channel site `x`, validated to lie in [0, 1].
    pub fn site_density(&self, x: usize, params: &SystemParams) -> Result<f64> {
        let v = self.u0.eval(x as f64 / params.n() as f64);
        if !(0.0..=1.0).contains(&v) {
            return Err(invalid(format!("u0({}) = {v} outside [0, 1]", x as f64 / params.n() as f64)));
        }
        Ok(v)
    }

    /// One draw from the initial law.
    pub fn sample<R: Rng + ?Sized>(&self, params: &SystemParams, rng: &mut R) -> Result<ParticleConfig> {
        let mut eta = Vec::with_capacity(params.n());
        for x in 1..=params.n() {
            let p = self.site_density(x, params)?;
            let b = Bernoulli::new(p).map_err(|e| invalid(e.to_string()))?;
            eta.push(b.sample(rng));
        }
        let m = params.m();
        let mut draw = |v: f64| -> Result<u64> {
            Ok(match self.reservoir_init {
                ReservoirInit::Binomial => Binomial::new(m, v)
                    .map_err(|e| invalid(e.to_string()))?
                    .sample(rng),
                ReservoirInit::Deterministic => (m as f64 * v).round() as u64,
            })
        };
        let n_minus = draw(self.boundary.v_minus)?;
        let n_plus = draw(self.boundary.v_plus)?;
        ParticleConfig::new(eta, n_minus, n_plus, params)
    }
}

/// Channel occupations plus the two reservoir counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ParticleConfig {
    eta: Vec<bool>,
    n_minus: u64,
    n_plus: u64,
}

impl ParticleConfig {
    pub fn new(eta: Vec<bool>, n_minus: u64, n_plus: u64, params: &SystemParams) -> Result<Self> {
        if eta.len() != params.n() {
            return Err(invalid(format!(
                "channel has {} sites, expected {}",
                eta.len(),
                params.n()
            )));
        }
        if n_minus > params.m() || n_plus > params.m() {
            return Err(invalid(format!(
                "reservoir counts ({n_minus}, {n_plus}) exceed M = {}",
                params.m()
            )));
        }
        Ok(Self { eta, n_minus, n_plus })
    }

    /// Convenience constructor from 0/1 occupations.
    pub fn from_bits(bits: &[u8], n_minus: u64, n_plus: u64, params: &SystemParams) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("occupations must be 0 or 1"));
        }
        Self::new(bits.iter().map(|&b| b == 1).collect(), n_minus, n_plus, params)
    }

    pub fn empty(params: &SystemParams) -> Self {
        Self {
            eta: vec![false; params.n()],
            n_minus: 0,
            n_plus: 0,
        }
    }

    pub fn full(params: &SystemParams) -> Self {
        Self {
            eta: vec![true; params.n()],
            n_minus: params.m(),
            n_plus: params.m(),
        }
    }

    pub fn n(&self) -> usize {
        self.eta.len()
    }

    /// Occupation of channel site `x` (1-based).
    pub fn site(&self, x: usize) -> bool {
        self.eta[x - 1]
    }

    pub fn occupations(&self) -> &[bool] {
        &self.eta
    }

    pub fn n_minus(&self) -> u64 {
        self.n_minus
    }

    pub fn n_plus(&self) -> u64 {
        self.n_plus
    }

    /// Occupation on the extended lattice `0..=N+1`, where the end sites
    /// read as reservoir fractions `n_∓ / M`.
    pub fn extended_occupation(&self, x: usize, params: &SystemParams) -> f64 {
        let n = self.n();
        if x == 0 {
            self.n_minus as f64 / params.m() as f64
        } else if x == n + 1 {
            self.n_plus as f64 / params.m() as f64
        } else {
            f64::from(u8::from(self.eta[x - 1]))
        }
    }

    /// The configuration under `x -> N + 1 - x` with the reservoirs swapped.
    pub fn mirrored(&self) -> Self {
        Self {
            eta: self.eta.iter().rev().copied().collect(),
            n_minus: self.n_plus,
            n_plus: self.n_minus,
        }
    }

    pub(crate) fn swap_bond(&mut self, x: usize) {
        self.eta.swap(x - 1, x);
    }

    /// In-place right boundary exchange; the caller guarantees a positive rate.
    pub(crate) fn flip_right(&mut self) {
        let last = self.eta.len() - 1;
        if self.eta[last] {
            self.eta[last] = false;
            self.n_plus += 1;
        } else {
            self.eta[last] = true;
            self.n_plus -= 1;
        }
    }

    pub(crate) fn flip_left(&mut self) {
        if self.eta[0] {
            self.eta[0] = false;
            self.n_minus += 1;
        } else {
            self.eta[0] = true;
            self.n_minus -= 1;
        }
    }
}

/// A transition of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    /// Exchange across bond `(x, x + 1)`, `1 <= x <= N - 1`.
    Bond(usize),
    Left,
    Right,
}

fn boundary_rate(occupied: bool, count: u64, m: u64) -> f64 {
    let fill = count as f64 / m as f64;
    if occupied {
        0.5 * (1.0 - fill)
    } else {
        0.5 * fill
    }
}

/// Rate `c_N` of the right boundary exchange.
pub fn boundary_rate_right(config: &ParticleConfig, params: &SystemParams) -> f64 {
    boundary_rate(config.site(config.n()), config.n_plus, params.m())
}

/// Rate `c_1` of the left boundary exchange.
pub fn boundary_rate_left(config: &ParticleConfig, params: &SystemParams) -> f64 {
    boundary_rate(config.site(1), config.n_minus, params.m())
}

/// Swap the occupations of sites `x` and `x + 1`.
pub fn apply_bulk_exchange(config: &ParticleConfig, x: usize) -> Result<ParticleConfig> {
    if x == 0 || x >= config.n() {
        return Err(invalid(format!("bond {x} outside 1..={}", config.n() - 1)));
    }
    let mut next = config.clone();
    next.swap_bond(x);
    Ok(next)
}

pub fn apply_boundary_exchange_right(config: &ParticleConfig, params: &SystemParams) -> Result<ParticleConfig> {
    if config.site(config.n()) {
        if config.n_plus >= params.m() {
            return Err(Error::InvalidTransition("right reservoir is full".into()));
        }
    } else if config.n_plus == 0 {
        return Err(Error::InvalidTransition("right reservoir is empty".into()));
    }
    let mut next = config.clone();
    next.flip_right();
    Ok(next)
}

pub fn apply_boundary_exchange_left(config: &ParticleConfig, params: &SystemParams) -> Result<ParticleConfig> {
    if config.site(1) {
        if config.n_minus >= params.m() {
            return Err(Error::InvalidTransition("left reservoir is full".into()));
        }
    } else if config.n_minus == 0 {
        return Err(Error::InvalidTransition("left reservoir is empty".into()));
    }
    let mut next = config.clone();
    next.flip_left();
    Ok(next)
}

pub fn apply_event(config: &ParticleConfig, event: Event, params: &SystemParams) -> Result<ParticleConfig> {
    match event {
        Event::Bond(x) => apply_bulk_exchange(config, x),
        Event::Left => apply_boundary_exchange_left(config, params),
        Event::Right => apply_boundary_exchange_right(config, params),
    }
}

/// Channel particles plus both reservoir counts.
pub fn total_particles(config: &ParticleConfig) -> u64 {
    config.eta.iter().filter(|&&b| b).count() as u64 + config.n_minus + config.n_plus
}

/// Every event with strictly positive rate. Bonds with equal occupations
/// are null moves and are left out.
pub fn active_event_list(config: &ParticleConfig, params: &SystemParams) -> Vec<(Event, f64)> {
    let mut events: Vec<(Event, f64)> = config
        .eta
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] != w[1])
        .map(|(i, _)| (Event::Bond(i + 1), 0.5))
        .collect();
    let left = boundary_rate_left(config, params);
    if left > 0.0 {
        events.push((Event::Left, left));
    }
    let right = boundary_rate_right(config, params);
    if right > 0.0 {
        events.push((Event::Right, right));
    }
    events
}
