//! The dual one-particle process: a continuous-time walk on `0..=N+1`
//! jumping at rate 1/2 to each neighbour from the interior and escaping the
//! end sites at rate `1/(2M)`, plus the sticky Brownian motion kernel.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::SystemParams;
use crate::quadrature::integrate;
use crate::rng::RngStream;
use crate::special::exp_erfc;

/// The sticky random walk on `{0, ..., n + 1}` with endpoint escape rate `1/(2m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StickyWalk {
    n: usize,
    m: u64,
}

/// Position and elapsed microscopic time of a walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkState {
    pub position: usize,
    pub clock: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// First hitting of `{0, N + 1}` from the interior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HittingRecord {
    pub tau: f64,
    pub side: Side,
}

/// Output of the reflected-walk construction at sticky time `t`.
///
/// `reflected_time + (2M - 1) * local_time == t` and
/// `local_time <= reflected_time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeChangeSample {
    pub position: usize,
    /// Clock of the reflected walk.
    pub reflected_time: f64,
    /// Time the reflected walk spent at `{0, N + 1}`.
    pub local_time: f64,
}

const CHUNK: usize = 4096;

impl StickyWalk {
    pub fn new(n: usize, m: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(invalid(format!("sticky walk needs n >= 1 and m >= 1, got ({n}, {m})")));
        }
        Ok(Self { n, m })
    }

    pub fn from_params(params: &SystemParams) -> Self {
        Self {
            n: params.n(),
            m: params.m(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    fn is_end(&self, x: usize) -> bool {
        x == 0 || x == self.n + 1
    }

    fn check_site(&self, x: usize) -> Result<()> {
        if x > self.n + 1 {
            return Err(invalid(format!("site {x} outside 0..={}", self.n + 1)));
        }
        Ok(())
    }

    fn neighbour<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        if x == 0 {
            1
        } else if x == self.n + 1 {
            self.n
        } else if rng.random::<bool>() {
            x + 1
        } else {
            x - 1
        }
    }

    /// Total jump rate out of `x`.
    pub fn exit_rate(&self, x: usize) -> f64 {
        if self.is_end(x) {
            0.5 / self.m as f64
        } else {
            1.0
        }
    }

    /// Advances `state` up to clock `t_end`.
    pub fn advance<R: Rng + ?Sized>(&self, state: &mut WalkState, t_end: f64, rng: &mut R) {
        loop {
            let e: f64 = Exp1.sample(rng);
            let hold = e / self.exit_rate(state.position);
            if state.clock + hold > t_end {
                state.clock = state.clock.max(t_end);
                return;
            }
            state.clock += hold;
            state.position = self.neighbour(state.position, rng);
        }
    }

    /// `X(t)` for one trajectory started at `x0`.
    pub fn simulate<R: Rng + ?Sized>(&self, x0: usize, t: f64, rng: &mut R) -> usize {
        let mut state = WalkState {
            position: x0,
            clock: 0.0,
        };
        self.advance(&mut state, t, rng);
        state.position
    }

    /// Time and side of the first visit to `{0, N + 1}` from an interior site.
    /// Before that visit the walk is the simple symmetric walk.
    pub fn first_hitting<R: Rng + ?Sized>(&self, x0: usize, rng: &mut R) -> Result<HittingRecord> {
        if x0 == 0 || x0 > self.n {
            return Err(invalid(format!("start {x0} must be interior (1..={})", self.n)));
        }
        let mut x = x0;
        let mut tau = 0.0;
        while !self.is_end(x) {
            let e: f64 = Exp1.sample(rng);
            tau += e;
            x = self.neighbour(x, rng);
        }
        let side = if x == 0 { Side::Left } else { Side::Right };
        Ok(HittingRecord { tau, side })
    }

    /// `X(t)` realised through the reflected walk: the reflected walk jumps
    /// at rate 1 everywhere (from an end site it always moves inward), and
    /// sticky time advances by `dt` in the interior and `2M dt` at the ends.
    pub fn simulate_via_time_change<R: Rng + ?Sized>(&self, x0: usize, t: f64, rng: &mut R) -> TimeChangeSample {
        let slow = 2.0 * self.m as f64;
        let mut y = x0;
        let mut sticky = 0.0;
        let mut reflected = 0.0;
        let mut local = 0.0;
        loop {
            let hold: f64 = Exp1.sample(rng);
            let at_end = self.is_end(y);
            let stretched = if at_end { hold * slow } else { hold };
            if sticky + stretched > t {
                let remaining = (t - sticky).max(0.0);
                let advance = if at_end { remaining / slow } else { remaining };
                reflected += advance;
                if at_end {
                    local += advance;
                }
                return TimeChangeSample {
                    position: y,
                    reflected_time: reflected,
                    local_time: local,
                };
            }
            sticky += stretched;
            reflected += hold;
            if at_end {
                local += hold;
            }
            y = self.neighbour(y, rng);
        }
    }

    /// Monte Carlo estimate of `p_t(x0, y)` with its binomial standard error.
    pub fn transition_probability_mc(&self, x0: usize, y: usize, t: f64, k: usize, seed: u64) -> Result<(f64, f64)> {
        self.check_site(x0)?;
        self.check_site(y)?;
        let law = self.empirical_law(x0, t, k, seed)?;
        let p = law[y];
        Ok((p, (p * (1.0 - p) / k as f64).sqrt()))
    }

    /// Empirical law of `X(t)` over `k` runs from `x0`, in parallel chunks
    /// with one stream per chunk.
    pub fn empirical_law(&self, x0: usize, t: f64, k: usize, seed: u64) -> Result<Vec<f64>> {
        self.empirical_law_with(x0, t, k, seed, |walk, rng| walk.simulate(x0, t, rng))
    }

    /// As [`empirical_law`](Self::empirical_law) but through the time change.
    pub fn empirical_law_time_change(&self, x0: usize, t: f64, k: usize, seed: u64) -> Result<Vec<f64>> {
        self.empirical_law_with(x0, t, k, seed, |walk, rng| {
            walk.simulate_via_time_change(x0, t, rng).position
        })
    }

    fn empirical_law_with<F>(&self, x0: usize, t: f64, k: usize, seed: u64, draw: F) -> Result<Vec<f64>>
    where
        F: Fn(&Self, &mut RngStream) -> usize + Sync,
    {
        self.check_site(x0)?;
        if k < 2 {
            return Err(invalid(format!("need at least 2 runs, got {k}")));
        }
        if !(t >= 0.0) {
            return Err(invalid(format!("time must be non-negative, got {t}")));
        }
        let sites = self.n + 2;
        let chunks = k.div_ceil(CHUNK);
        let counts = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = RngStream::new(seed, c as u64);
                let runs = CHUNK.min(k - c * CHUNK);
                let mut counts = vec![0u64; sites];
                for _ in 0..runs {
                    counts[draw(self, &mut rng)] += 1;
                }
                counts
            })
            .reduce(
                || vec![0u64; sites],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        Ok(counts.into_iter().map(|c| c as f64 / k as f64).collect())
    }

    /// Reversible law, proportional to `(M, 1, ..., 1, M)`.
    pub fn stationary_law(&self) -> Vec<f64> {
        let m = self.m as f64;
        let z = 2.0 * m + self.n as f64;
        (0..=self.n + 1)
            .map(|x| if self.is_end(x) { m / z } else { 1.0 / z })
            .collect()
    }
}

/// Sticky Brownian motion kernel, split into its absolutely continuous part
/// and the weight of the atom at `y = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub density: f64,
    pub atom: f64,
}

fn gaussian(d: f64, t: f64) -> f64 {
    (-d * d / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
}

/// `e^{a + t/2} Erfc(sqrt(2t)/2 + a/sqrt(2t))`, evaluated in scaled form.
fn sticky_tail(a: f64, t: f64) -> f64 {
    let s = (2.0 * t).sqrt();
    exp_erfc(a + 0.5 * t, 0.5 * s + a / s)
}

/// Transition kernel of Brownian motion sticky at 1:
///
/// ```text
/// p_t(x, y) = (2 pi t)^{-1/2} (exp(-(x - y + 1)^2 / 2t) - exp(-(|x| + |y - 1|)^2 / 2t))
///           + 1/2 e^{|x| + |y-1|} e^{t/2} Erfc(sqrt(2t)/2 + (|x| + |y-1|)/sqrt(2t))
///           + delta_1(y) e^{|x|} e^{t/2} Erfc(sqrt(2t)/2 + |x|/sqrt(2t))
/// ```
///
/// `x` is measured from the sticky point, so the atom carries all the mass
/// as `t -> 0` when `x = 0`.
pub fn sticky_bm_kernel(x: f64, y: f64, t: f64) -> Result<KernelValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid(format!("kernel time must be positive, got {t}")));
    }
    let a = x.abs() + (y - 1.0).abs();
    let density = gaussian(x - y + 1.0, t) - gaussian(a, t) + 0.5 * sticky_tail(a, t);
    Ok(KernelValue {
        density,
        atom: sticky_tail(x.abs(), t),
    })
}

/// `integral p_t(x, y) dy` over the continuous part plus the atom weight.
/// The integral is split at the kink `y = 1` and at the Gaussian centre
/// `y = 1 + x`, truncated `12 sqrt(t)` beyond both.
pub fn sticky_bm_total_mass(x: f64, t: f64) -> Result<f64> {
    let atom = sticky_bm_kernel(x, 1.0, t)?.atom;
    let reach = 12.0 * t.sqrt();
    let centre = 1.0 + x;
    let mut cuts = vec![1.0_f64.min(centre) - reach, 1.0, centre, 1.0_f64.max(centre) + reach];
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let density = |y: f64| sticky_bm_kernel(x, y, t).map(|k| k.density).unwrap_or(f64::NAN);
    let continuous: f64 = cuts
        .windows(2)
        .map(|w| integrate(density, w[0], w[1], 1e-13).value)
        .sum();
    Ok(continuous + atom)
}

/// `P_x(B(t) < 0) = integral_{-inf}^0 p_t(x, y) dy`.
pub fn sticky_bm_negative_mass(x: f64, t: f64) -> Result<f64> {
    sticky_bm_kernel(x, 0.0, t)?;
    let lower = 1.0_f64.min(1.0 + x) - 12.0 * t.sqrt() - 1.0;
    if lower >= 0.0 {
        return Ok(0.0);
    }
    let density = |y: f64| sticky_bm_kernel(x, y, t).map(|k| k.density).unwrap_or(f64::NAN);
    Ok(integrate(density, lower, 0.0, 1e-15).value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time_is_identity() {
        let w = StickyWalk::new(5, 11).unwrap();
        let mut rng = RngStream::new(1, 0);
        for x in 0..=6 {
            assert_eq!(w.simulate(x, 0.0, &mut rng), x);
            assert_eq!(w.simulate_via_time_change(x, 0.0, &mut rng).position, x);
        }
        assert_eq!(w.transition_probability_mc(2, 2, 0.0, 100, 3).unwrap(), (1.0, 0.0));
        assert_eq!(w.transition_probability_mc(2, 3, 0.0, 100, 3).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn invalid_arguments() {
        assert!(StickyWalk::new(0, 3).is_err());
        assert!(StickyWalk::new(3, 0).is_err());
        let w = StickyWalk::new(3, 2).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert!(w.first_hitting(0, &mut rng).is_err());
        assert!(w.first_hitting(4, &mut rng).is_err());
        assert!(w.transition_probability_mc(0, 5, 1.0, 10, 0).is_err());
        assert!(w.transition_probability_mc(0, 1, 1.0, 1, 0).is_err());
        assert!(sticky_bm_kernel(0.0, 0.0, 0.0).is_err());
        assert!(sticky_bm_kernel(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn time_change_with_unit_reservoir_is_pathwise_identical() {
        // 2M - 1 = 0: both constructions consume the same random numbers.
        let w = StickyWalk::new(4, 1).unwrap();
        for seed in 0..200 {
            let a = w.simulate(2, 17.0, &mut RngStream::new(seed, 0));
            let b = w.simulate_via_time_change(2, 17.0, &mut RngStream::new(seed, 0));
            assert_eq!(a, b.position);
        }
    }

    #[test]
    fn local_time_bookkeeping() {
        let w = StickyWalk::new(3, 9).unwrap();
        let mut rng = RngStream::new(5, 0);
        for i in 0..500 {
            let t = 0.5 + i as f64 * 0.7;
            let s = w.simulate_via_time_change(0, t, &mut rng);
            assert!(s.local_time <= s.reflected_time + 1e-12);
            let rebuilt = s.reflected_time + 17.0 * s.local_time;
            assert!((rebuilt - t).abs() < 1e-9 * t.max(1.0), "{rebuilt} vs {t}");
        }
    }

    #[test]
    fn stationary_law_sums_to_one() {
        let w = StickyWalk::new(4, 7).unwrap();
        let law = w.stationary_law();
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(law[0], 7.0 / 18.0);
        assert_eq!(law[2], 1.0 / 18.0);
    }

    #[test]
    fn kernel_atom_limits() {
        for t in [1e-2, 1e-4] {
            assert!(sticky_bm_kernel(1.0, 1.0, t).unwrap().atom < 1e-6);
            assert!(sticky_bm_kernel(-0.5, 1.0, t).unwrap().atom < 1e-3);
            assert!(sticky_bm_kernel(0.0, 1.0, t).unwrap().atom > 1.0 - 0.12 * t.sqrt() * 10.0);
        }
        assert!((sticky_bm_kernel(0.0, 1.0, 1e-8).unwrap().atom - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kernel_density_is_non_negative() {
        for &x in &[0.0, 0.5, 1.0, 2.0, -1.0] {
            for i in 0..200 {
                let y = -6.0 + i as f64 * 0.06;
                assert!(sticky_bm_kernel(x, y, 0.7).unwrap().density >= -1e-15);
            }
        }
    }
}
