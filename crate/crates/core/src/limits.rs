//! Analytic reference solutions in the four scaling regimes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::model::{BoundaryDensities, Profile};
use crate::quadrature::gk15;

/// Default bound on the dropped tail of the heat series.
pub const HEAT_TAIL_TOL: f64 = 1e-8;

const REGIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeKind {
    /// `alpha' = 0`: heat equation with the initial boundary values.
    IdealHydrodynamic,
    /// `0 < alpha' < alpha`: the static linear profile.
    IdealStationary,
    /// `alpha' = alpha`: linear profile between relaxing boundary values.
    Adiabatic,
    /// `alpha' > alpha`: flat at the average boundary value.
    Global,
}

impl RegimeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::IdealHydrodynamic => "ideal_hydrodynamic",
            Self::IdealStationary => "ideal_stationary",
            Self::Adiabatic => "adiabatic",
            Self::Global => "global",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal_hydrodynamic" => Ok(Self::IdealHydrodynamic),
            "ideal_stationary" => Ok(Self::IdealStationary),
            "adiabatic" => Ok(Self::Adiabatic),
            "global" => Ok(Self::Global),
            _ => Err(invalid(format!("unknown regime {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRegime {
    kind: RegimeKind,
    alpha_prime: f64,
}

impl LimitRegime {
    /// The regime selected by the time exponent `alpha'` for reservoirs of
    /// size `N^(1 + alpha)`.
    pub fn classify(alpha: f64, alpha_prime: f64) -> Result<Self> {
        if !(alpha_prime >= 0.0 && alpha_prime.is_finite()) {
            return Err(invalid(format!("alpha' must be finite and >= 0, got {alpha_prime}")));
        }
        if !alpha.is_finite() {
            return Err(invalid(format!("alpha must be finite, got {alpha}")));
        }
        let kind = if alpha_prime <= REGIME_EPS {
            RegimeKind::IdealHydrodynamic
        } else if (alpha_prime - alpha).abs() <= REGIME_EPS {
            RegimeKind::Adiabatic
        } else if alpha_prime < alpha {
            RegimeKind::IdealStationary
        } else {
            RegimeKind::Global
        };
        Ok(Self { kind, alpha_prime })
    }

    /// Checks that `kind` agrees with the ordering of `alpha'` and `alpha`.
    pub fn new(kind: RegimeKind, alpha: f64, alpha_prime: f64) -> Result<Self> {
        let regime = Self::classify(alpha, alpha_prime)?;
        if regime.kind != kind {
            return Err(invalid(format!(
                "regime {kind} is inconsistent with alpha = {alpha}, alpha' = {alpha_prime} (that is {})",
                regime.kind
            )));
        }
        Ok(regime)
    }

    pub fn kind(&self) -> RegimeKind {
        self.kind
    }

    pub fn alpha_prime(&self) -> f64 {
        self.alpha_prime
    }

    /// Limit density at macroscopic position `r` and time `t`.
    pub fn reference(&self, u0: &Profile, boundary: BoundaryDensities, r: f64, t: f64) -> Result<f64> {
        match self.kind {
            RegimeKind::IdealHydrodynamic => heat_solution(u0, boundary, r, t, 1),
            RegimeKind::IdealStationary => Ok(stationary_profile(boundary, r)),
            RegimeKind::Adiabatic => Ok(adiabatic_profile(boundary, r, t)),
            RegimeKind::Global => Ok(global_equilibrium(boundary)),
        }
    }

    /// Limit values of the two reservoir densities at time `t`.
    pub fn boundary_reference(&self, boundary: BoundaryDensities, t: f64) -> BoundaryDensities {
        match self.kind {
            RegimeKind::IdealHydrodynamic | RegimeKind::IdealStationary => boundary,
            RegimeKind::Adiabatic => adiabatic_boundaries(boundary, t),
            RegimeKind::Global => {
                let c = global_equilibrium(boundary);
                BoundaryDensities { v_minus: c, v_plus: c }
            }
        }
    }
}

/// Number of sine modes that pushes the dropped tail below `tol` at time `t`.
pub fn heat_terms(t: f64, tol: f64) -> usize {
    let k = (2.0 * (1.0 / tol).ln() / (PI * PI * t)).sqrt().ceil();
    (k as usize).max(8)
}

/// Sine expansion of `u0 - L` on `[0, 1]`, `L` the line between the
/// boundary values.
#[derive(Debug, Clone)]
pub struct HeatSeries {
    boundary: BoundaryDensities,
    coeffs: Vec<f64>,
}

impl HeatSeries {
    pub fn new(u0: &Profile, boundary: BoundaryDensities, terms: usize) -> Result<Self> {
        if terms == 0 {
            return Err(invalid("heat series needs at least one term"));
        }
        let panels = 4 * terms;
        let width = 1.0 / panels as f64;
        let coeffs = (1..=terms)
            .map(|k| {
                let f = |r: f64| (u0.eval(r) - stationary_profile(boundary, r)) * (k as f64 * PI * r).sin();
                2.0 * (0..panels)
                    .map(|j| gk15(&f, j as f64 * width, (j + 1) as f64 * width).value)
                    .sum::<f64>()
            })
            .collect();
        Ok(Self { boundary, coeffs })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn eval(&self, r: f64, t: f64) -> f64 {
        let tail: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let k = (i + 1) as f64;
                b * (-k * k * PI * PI * t / 2.0).exp() * (k * PI * r).sin()
            })
            .sum();
        stationary_profile(self.boundary, r) + tail
    }
}

/// Solution of `u_t = u_rr / 2` on `[0, 1]` with `u(0) = v_-`, `u(1) = v_+`
/// and initial data `u0`. At least `terms` modes are summed, more if
/// needed to keep the dropped tail below [`HEAT_TAIL_TOL`].
pub fn heat_solution(u0: &Profile, boundary: BoundaryDensities, r: f64, t: f64, terms: usize) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("heat solution needs t > 0, got {t}")));
    }
    if !(0.0..=1.0).contains(&r) {
        return Err(invalid(format!("r must lie in [0, 1], got {r}")));
    }
    if terms == 0 {
        return Err(invalid("heat series needs at least one term"));
    }
    let terms = terms.max(heat_terms(t, HEAT_TAIL_TOL));
    Ok(HeatSeries::new(u0, boundary, terms)?.eval(r, t))
}

pub fn stationary_profile(boundary: BoundaryDensities, r: f64) -> f64 {
    (boundary.v_plus - boundary.v_minus) * r + boundary.v_minus
}

/// `v_-(t) = (v_- + v_+)/2 + (v_- - v_+)/2 e^{-t}`, and the mirror image.
pub fn adiabatic_boundaries(initial: BoundaryDensities, t: f64) -> BoundaryDensities {
    let mean = 0.5 * (initial.v_minus + initial.v_plus);
    let half_gap = 0.5 * (initial.v_minus - initial.v_plus) * (-t).exp();
    BoundaryDensities {
        v_minus: mean + half_gap,
        v_plus: mean - half_gap,
    }
}

pub fn adiabatic_profile(initial: BoundaryDensities, r: f64, t: f64) -> f64 {
    stationary_profile(adiabatic_boundaries(initial, t), r)
}

pub fn global_equilibrium(initial: BoundaryDensities) -> f64 {
    0.5 * (initial.v_minus + initial.v_plus)
}

/// Probability that a simple walk from `x` reaches 0 before `N + 1`.
pub fn gambler_ruin_left(x: usize, n: usize) -> Result<f64> {
    if x == 0 || x > n {
        return Err(invalid(format!("site {x} outside 1..={n}")));
    }
    Ok(1.0 - x as f64 / (n + 1) as f64)
}
