//! Exact event-driven simulation of the channel-plus-reservoirs chain and
//! Monte Carlo ensemble statistics.
//!
//! The [`Simulator`] keeps the set of discrepant bonds (`eta(x) != eta(x+1)`)
//! up to date incrementally: a jump touches at most three bonds, so every
//! event costs O(1).

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{
    active_event_list, apply_event, boundary_rate_left, boundary_rate_right, InitialCondition,
    ParticleConfig, SystemParams,
};
use crate::rng::RngStream;

const NONE: usize = usize::MAX;

/// Set of bond indices `1..=N-1` with O(1) insert, remove and indexing.
#[derive(Debug, Clone)]
struct BondSet {
    members: Vec<usize>,
    pos: Vec<usize>,
}

impl BondSet {
    fn new(n: usize) -> Self {
        Self {
            members: Vec::with_capacity(n),
            pos: vec![NONE; n],
        }
    }

    fn set(&mut self, bond: usize, present: bool) {
        let at = self.pos[bond];
        match (present, at == NONE) {
            (true, true) => {
                self.pos[bond] = self.members.len();
                self.members.push(bond);
            }
            (false, false) => {
                let last = *self.members.last().expect("non-empty");
                self.members.swap_remove(at);
                if last != bond {
                    self.pos[last] = at;
                }
                self.pos[bond] = NONE;
            }
            _ => {}
        }
    }

    fn len(&self) -> usize {
        self.members.len()
    }
}

/// Trajectory of the chain with an internal clock.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SystemParams,
    config: ParticleConfig,
    time: f64,
    bonds: BondSet,
    null_events: bool,
    events: u64,
}

impl Simulator {
    pub fn new(config: ParticleConfig, params: SystemParams) -> Self {
        let n = params.n();
        let mut sim = Self {
            params,
            config,
            time: 0.0,
            bonds: BondSet::new(n),
            null_events: false,
            events: 0,
        };
        for x in 1..n {
            sim.refresh_bond(x);
        }
        sim
    }

    /// Fire every bond at rate 1/2, including those whose exchange is a no-op.
    /// Same law as the default; used to check that claim.
    pub fn with_null_events(mut self, on: bool) -> Self {
        self.null_events = on;
        self
    }

    pub fn config(&self) -> &ParticleConfig {
        &self.config
    }

    pub fn into_config(self) -> ParticleConfig {
        self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of events fired so far (null events included when enabled).
    pub fn events(&self) -> u64 {
        self.events
    }

    fn refresh_bond(&mut self, x: usize) {
        if x >= 1 && x < self.params.n() {
            let discrepant = self.config.site(x) != self.config.site(x + 1);
            self.bonds.set(x, discrepant);
        }
    }

    fn bond_rate(&self) -> f64 {
        if self.null_events {
            0.5 * (self.params.n() - 1) as f64
        } else {
            0.5 * self.bonds.len() as f64
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.bond_rate()
            + boundary_rate_left(&self.config, &self.params)
            + boundary_rate_right(&self.config, &self.params)
    }

    /// Draws the next holding time and fires one event. Returns `None`
    /// without touching the state when no event has positive rate.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<f64> {
        let (dt, pick) = self.draw(rng)?;
        self.time += dt;
        self.fire(pick);
        Some(dt)
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<(f64, f64)> {
        let total = self.total_rate();
        if total <= 0.0 {
            return None;
        }
        let e: f64 = Exp1.sample(rng);
        Some((e / total, rng.random::<f64>() * total))
    }

    fn fire(&mut self, mut u: f64) {
        self.events += 1;
        let bond_rate = self.bond_rate();
        if u < bond_rate {
            let x = if self.null_events {
                1 + ((u / 0.5) as usize).min(self.params.n() - 2)
            } else {
                self.bonds.members[((u / 0.5) as usize).min(self.bonds.len() - 1)]
            };
            self.config.swap_bond(x);
            self.refresh_bond(x - 1);
            self.refresh_bond(x);
            self.refresh_bond(x + 1);
            return;
        }
        u -= bond_rate;
        let left = boundary_rate_left(&self.config, &self.params);
        let right = boundary_rate_right(&self.config, &self.params);
        // Rounding can push `u` past the last positive rate; fall back to
        // whichever boundary can actually fire.
        if (u < left && left > 0.0) || right <= 0.0 {
            self.config.flip_left();
            self.refresh_bond(1);
        } else {
            self.config.flip_right();
            self.refresh_bond(self.params.n() - 1);
        }
    }

    /// Runs until the clock reaches `t_end`; the state is the last one
    /// entered before `t_end`.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, t_end: f64, rng: &mut R) {
        while self.time < t_end {
            let Some((dt, pick)) = self.draw(rng) else {
                break;
            };
            if self.time + dt > t_end {
                break;
            }
            self.time += dt;
            self.fire(pick);
        }
        self.time = self.time.max(t_end);
    }

    /// Like [`advance_to`](Self::advance_to), calling `observe` after every event.
    pub fn advance_observing<R, F>(&mut self, t_end: f64, rng: &mut R, mut observe: F)
    where
        R: Rng + ?Sized,
        F: FnMut(&ParticleConfig),
    {
        while self.time < t_end {
            let Some((dt, pick)) = self.draw(rng) else {
                break;
            };
            if self.time + dt > t_end {
                break;
            }
            self.time += dt;
            self.fire(pick);
            observe(&self.config);
        }
        self.time = self.time.max(t_end);
    }
}

/// One exact transition built from the full event list. Returns the input
/// and `+inf` in an absorbing state.
pub fn kmc_step<R: Rng + ?Sized>(
    config: &ParticleConfig,
    params: &SystemParams,
    rng: &mut R,
) -> (ParticleConfig, f64) {
    let events = active_event_list(config, params);
    let total: f64 = events.iter().map(|(_, r)| r).sum();
    if events.is_empty() || total <= 0.0 {
        return (config.clone(), f64::INFINITY);
    }
    let e: f64 = Exp1.sample(rng);
    let dt = e / total;
    let mut u = rng.random::<f64>() * total;
    let mut chosen = events[events.len() - 1].0;
    for &(event, rate) in &events {
        if u < rate {
            chosen = event;
            break;
        }
        u -= rate;
    }
    let next = apply_event(config, chosen, params).expect("listed events have positive rate");
    (next, dt)
}

/// State of the chain at microscopic time `t_end`.
pub fn run_until<R: Rng + ?Sized>(
    config: &ParticleConfig,
    params: &SystemParams,
    t_end: f64,
    rng: &mut R,
) -> Result<ParticleConfig> {
    if !(t_end >= 0.0) {
        return Err(invalid(format!("horizon must be non-negative, got {t_end}")));
    }
    let mut sim = Simulator::new(config.clone(), *params);
    sim.advance_to(t_end, rng);
    Ok(sim.into_config())
}

/// Covariance of the occupations at two channel sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCovariance {
    pub x1: usize,
    pub x2: usize,
    pub cov: f64,
    pub se: f64,
}

/// Per-site ensemble means on the extended lattice `0..=N+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub replicates: usize,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub pairs: Vec<PairCovariance>,
}

fn check_ensemble(k: usize, t_end: f64) -> Result<()> {
    if k < 2 {
        return Err(invalid(format!("need at least 2 replicates, got {k}")));
    }
    if !(t_end >= 0.0) {
        return Err(invalid(format!("horizon must be non-negative, got {t_end}")));
    }
    Ok(())
}

/// Upper bound on the total event rate: every bond plus both boundaries.
pub fn max_event_rate(params: &SystemParams) -> f64 {
    0.5 * (params.n() - 1) as f64 + 1.0
}

/// Extended-lattice occupations of `k` independent replicates at `t_end`.
/// Replicate `i` uses `RngStream::new(seed, i)`.
pub fn sample_replicates(
    initial: &InitialCondition,
    params: &SystemParams,
    t_end: f64,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let runs = sample_replicates_at(initial, params, &[t_end], k, seed)?;
    Ok(runs.into_iter().map(|mut r| r.swap_remove(0)).collect())
}

/// Like [`sample_replicates`], recording each replicate at every one of the
/// sorted `times`. Indexed `[replicate][time][site]`.
pub fn sample_replicates_at(
    initial: &InitialCondition,
    params: &SystemParams,
    times: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if times.is_empty() {
        return Err(invalid("no sampling times"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("sampling times must be sorted"));
    }
    for &t in times {
        check_ensemble(k, t)?;
    }
    (0..k)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(seed, i as u64);
            let start = initial.sample(params, &mut rng)?;
            let mut sim = Simulator::new(start, *params);
            Ok(times
                .iter()
                .map(|&t| {
                    sim.advance_to(t, &mut rng);
                    (0..=params.n() + 1)
                        .map(|x| sim.config().extended_occupation(x, params))
                        .collect()
                })
                .collect())
        })
        .collect()
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, k: usize) -> (f64, f64) {
    let kf = k as f64;
    let mean = values.clone().sum::<f64>() / kf;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    (mean, (var / kf).sqrt())
}

/// Sample covariance of paired observations with a jackknife standard error
/// (plug-in for `k = 2`).
pub fn covariance_with_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    let k = a.len();
    assert!(k >= 2 && b.len() == k);
    let kf = k as f64;
    let ma = a.iter().sum::<f64>() / kf;
    let mb = b.iter().sum::<f64>() / kf;
    let ca: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let cb: Vec<f64> = b.iter().map(|v| v - mb).collect();
    let sab: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    let cov = sab / (kf - 1.0);
    if k < 3 {
        let prods: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x * y).collect();
        let (_, se) = mean_and_se(prods.iter().copied(), k);
        return (cov, se);
    }
    // Leave-one-out covariances from centred sums (both sums are zero).
    let n = kf - 1.0;
    let loo: Vec<f64> = ca
        .iter()
        .zip(&cb)
        .map(|(&x, &y)| {
            let mx = -x / n;
            let my = -y / n;
            (sab - x * y - n * mx * my) / (n - 1.0)
        })
        .collect();
    let mean_loo = loo.iter().sum::<f64>() / kf;
    let var = loo.iter().map(|c| (c - mean_loo).powi(2)).sum::<f64>() * (kf - 1.0) / kf;
    (cov, var.sqrt())
}

/// Means, standard errors and pair covariances of replicate snapshots.
pub fn summarize_samples(samples: &[Vec<f64>], pairs: &[(usize, usize)]) -> EnsembleStats {
    let k = samples.len();
    let sites = samples[0].len();
    let (mean, se) = (0..sites)
        .map(|x| mean_and_se(samples.iter().map(move |s| s[x]), k))
        .unzip();
    let pairs = pairs
        .iter()
        .map(|&(x1, x2)| {
            let a: Vec<f64> = samples.iter().map(|s| s[x1]).collect();
            let b: Vec<f64> = samples.iter().map(|s| s[x2]).collect();
            let (cov, se) = covariance_with_se(&a, &b);
            PairCovariance { x1, x2, cov, se }
        })
        .collect();
    EnsembleStats {
        replicates: k,
        mean,
        se,
        pairs,
    }
}

pub(crate) fn check_pair(params: &SystemParams, x1: usize, x2: usize) -> Result<()> {
    let n = params.n();
    if x1 == x2 {
        return Err(invalid(format!("covariance needs distinct sites, got {x1} twice")));
    }
    if !(1..=n).contains(&x1) || !(1..=n).contains(&x2) {
        return Err(invalid(format!("sites ({x1}, {x2}) outside 1..={n}")));
    }
    Ok(())
}

/// Monte Carlo estimate of the expected occupations at `t_end`, optionally
/// with pair covariances.
pub fn ensemble_stats(
    initial: &InitialCondition,
    params: &SystemParams,
    t_end: f64,
    k: usize,
    seed: u64,
    pairs: &[(usize, usize)],
) -> Result<EnsembleStats> {
    for &(x1, x2) in pairs {
        check_pair(params, x1, x2)?;
    }
    let samples = sample_replicates(initial, params, t_end, k, seed)?;
    Ok(summarize_samples(&samples, pairs))
}

pub fn ensemble_density(
    initial: &InitialCondition,
    params: &SystemParams,
    t_end: f64,
    k: usize,
    seed: u64,
) -> Result<EnsembleStats> {
    ensemble_stats(initial, params, t_end, k, seed, &[])
}

/// `(covariance, standard error)` of `eta(x1)` and `eta(x2)` at `t_end`.
pub fn two_point_covariance(
    initial: &InitialCondition,
    params: &SystemParams,
    t_end: f64,
    x1: usize,
    x2: usize,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let stats = ensemble_stats(initial, params, t_end, k, seed, &[(x1, x2)])?;
    let p = stats.pairs[0];
    Ok((p.cov, p.se))
}

/// Reservoir fractions `n_-/M`, `n_+/M` at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirSample {
    pub t: f64,
    pub minus: f64,
    pub plus: f64,
}

/// Reservoir fractions along a single trajectory at the given sorted times.
pub fn reservoir_trajectory<R: Rng + ?Sized>(
    initial: &InitialCondition,
    params: &SystemParams,
    horizon: f64,
    sample_times: &[f64],
    rng: &mut R,
) -> Result<Vec<ReservoirSample>> {
    if !(horizon >= 0.0) {
        return Err(invalid(format!("horizon must be non-negative, got {horizon}")));
    }
    if sample_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("sample times must be sorted"));
    }
    if sample_times.iter().any(|&t| !(0.0..=horizon).contains(&t)) {
        return Err(invalid(format!("sample times must lie in [0, {horizon}]")));
    }
    let start = initial.sample(params, rng)?;
    let m = params.m() as f64;
    let mut sim = Simulator::new(start, *params);
    let mut out = Vec::with_capacity(sample_times.len());
    for &t in sample_times {
        sim.advance_to(t, rng);
        let c = sim.config();
        out.push(ReservoirSample {
            t,
            minus: c.n_minus() as f64 / m,
            plus: c.n_plus() as f64 / m,
        });
    }
    Ok(out)
}

/// Largest excursion of the reservoir fractions from their initial values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReservoirExcursion {
    pub minus: f64,
    pub plus: f64,
}

/// `sup_{t <= horizon} |n_±(t) - n_±(0)| / M`, tracked at every event.
pub fn max_reservoir_excursion<R: Rng + ?Sized>(
    initial: &InitialCondition,
    params: &SystemParams,
    horizon: f64,
    rng: &mut R,
) -> Result<ReservoirExcursion> {
    if !(horizon >= 0.0) {
        return Err(invalid(format!("horizon must be non-negative, got {horizon}")));
    }
    let start = initial.sample(params, rng)?;
    let (m0, p0) = (start.n_minus() as i64, start.n_plus() as i64);
    let mut sim = Simulator::new(start, *params);
    let (mut dm, mut dp) = (0i64, 0i64);
    sim.advance_observing(horizon, rng, |c| {
        dm = dm.max((c.n_minus() as i64 - m0).abs());
        dp = dp.max((c.n_plus() as i64 - p0).abs());
    });
    let m = params.m() as f64;
    Ok(ReservoirExcursion {
        minus: dm as f64 / m,
        plus: dp as f64 / m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{total_particles, BoundaryDensities, Profile};

    fn params(n: usize, m: u64) -> SystemParams {
        SystemParams::with_reservoir(n, m).unwrap()
    }

    #[test]
    fn bond_set_tracks_membership() {
        let mut s = BondSet::new(6);
        s.set(2, true);
        s.set(4, true);
        s.set(5, true);
        s.set(2, false);
        s.set(4, true);
        let mut m = s.members.clone();
        m.sort();
        assert_eq!(m, vec![4, 5]);
        assert_eq!(s.pos[5], s.members.iter().position(|&b| b == 5).unwrap());
        s.set(5, false);
        s.set(4, false);
        assert_eq!(s.len(), 0);
    }

    #[test]
    fn empty_config_is_absorbing() {
        let p = params(4, 5);
        let c = ParticleConfig::empty(&p);
        let mut rng = RngStream::new(1, 0);
        let (next, dt) = kmc_step(&c, &p, &mut rng);
        assert_eq!(next, c);
        assert!(dt.is_infinite());
        let mut sim = Simulator::new(c.clone(), p);
        assert!(sim.step(&mut rng).is_none());
        assert_eq!(sim.config(), &c);
    }

    #[test]
    fn single_bond_move() {
        // eta = (1, 0) with reservoirs that cannot act: only the bond fires.
        let p = params(2, 3);
        let c = ParticleConfig::from_bits(&[1, 0], 3, 0, &p).unwrap();
        let mut rng = RngStream::new(2, 0);
        let (next, dt) = kmc_step(&c, &p, &mut rng);
        assert!(dt.is_finite() && dt > 0.0);
        assert_eq!(next.occupations(), &[false, true]);
    }

    #[test]
    fn mean_holding_time_of_single_event() {
        // Only the right boundary is active, at rate 1/2.
        let p = params(2, 7);
        let c = ParticleConfig::from_bits(&[1, 1], 7, 0, &p).unwrap();
        let mut rng = RngStream::new(3, 0);
        let k = 100_000;
        let dts: Vec<f64> = (0..k).map(|_| kmc_step(&c, &p, &mut rng).1).collect();
        let mean = dts.iter().sum::<f64>() / k as f64;
        let sd = (dts.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0)).sqrt();
        assert!((mean - 2.0).abs() <= 3.0 * sd / (k as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn run_until_zero_and_full() {
        let p = params(5, 9);
        let mut rng = RngStream::new(4, 0);
        let c = ParticleConfig::from_bits(&[1, 0, 1, 0, 0], 3, 4, &p).unwrap();
        assert_eq!(run_until(&c, &p, 0.0, &mut rng).unwrap(), c);
        let full = ParticleConfig::full(&p);
        assert_eq!(run_until(&full, &p, 123.0, &mut rng).unwrap(), full);
        assert!(run_until(&c, &p, -1.0, &mut rng).is_err());
    }

    #[test]
    fn incremental_bonds_match_full_scan() {
        let p = params(12, 30);
        let mut rng = RngStream::new(5, 0);
        let init = InitialCondition::new(Profile::Const(0.5), BoundaryDensities::new(0.3, 0.8).unwrap());
        let c = init.sample(&p, &mut rng).unwrap();
        let mut sim = Simulator::new(c, p);
        for _ in 0..5000 {
            sim.step(&mut rng);
            let listed = active_event_list(sim.config(), &p);
            let listed_rate: f64 = listed.iter().map(|e| e.1).sum();
            assert!((listed_rate - sim.total_rate()).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_requires_two_replicates() {
        let p = params(4, 5);
        let init = InitialCondition::new(Profile::Const(0.0), BoundaryDensities::new(0.0, 0.0).unwrap());
        assert!(ensemble_density(&init, &p, 1.0, 1, 0).is_err());
        assert!(two_point_covariance(&init, &p, 1.0, 2, 2, 10, 0).is_err());
        assert!(two_point_covariance(&init, &p, 1.0, 0, 2, 10, 0).is_err());
    }

    #[test]
    fn reservoir_trajectory_edge_cases() {
        let p = params(4, 10);
        let mut rng = RngStream::new(6, 0);
        let init = InitialCondition::new(Profile::Const(0.0), BoundaryDensities::new(0.0, 0.0).unwrap());
        let tr = reservoir_trajectory(&init, &p, 50.0, &[0.0, 10.0, 50.0], &mut rng).unwrap();
        assert!(tr.iter().all(|s| s.minus == 0.0 && s.plus == 0.0));
        let init = InitialCondition::new(Profile::Const(0.5), BoundaryDensities::new(0.4, 0.6).unwrap())
            .with_reservoir_init(crate::model::ReservoirInit::Deterministic);
        let tr = reservoir_trajectory(&init, &p, 0.0, &[0.0], &mut rng).unwrap();
        assert_eq!(tr, vec![ReservoirSample { t: 0.0, minus: 0.4, plus: 0.6 }]);
        assert!(reservoir_trajectory(&init, &p, 1.0, &[0.5, 0.2], &mut rng).is_err());
        assert!(reservoir_trajectory(&init, &p, 1.0, &[2.0], &mut rng).is_err());
    }

    #[test]
    fn conservation_along_trajectory() {
        let p = params(10, 25);
        let mut rng = RngStream::new(7, 0);
        let init = InitialCondition::new(Profile::Sine, BoundaryDensities::new(0.9, 0.1).unwrap());
        let c = init.sample(&p, &mut rng).unwrap();
        let total = total_particles(&c);
        let mut sim = Simulator::new(c, p);
        sim.advance_observing(2000.0, &mut rng, |c| assert_eq!(total_particles(c), total));
        assert!(sim.events() > 0);
    }

    #[test]
    fn covariance_jackknife_small_cases() {
        let (c, se) = covariance_with_se(&[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0]);
        assert_eq!((c, se), (0.0, 0.0));
        let (c, _) = covariance_with_se(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 4.0, 6.0]);
        assert!((c - 2.0 * 5.0 / 3.0).abs() < 1e-12);
        // Jackknife of the sample covariance: brute-force leave-one-out.
        let a = [0.3, 1.2, -0.7, 2.2, 0.1];
        let b = [1.0, 0.4, 0.0, 1.9, -1.1];
        let cov = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
        };
        let loo: Vec<f64> = (0..5)
            .map(|i| {
                let aa: Vec<f64> = (0..5).filter(|&j| j != i).map(|j| a[j]).collect();
                let bb: Vec<f64> = (0..5).filter(|&j| j != i).map(|j| b[j]).collect();
                cov(&aa, &bb)
            })
            .collect();
        let m = loo.iter().sum::<f64>() / 5.0;
        let want = (loo.iter().map(|c| (c - m).powi(2)).sum::<f64>() * 4.0 / 5.0).sqrt();
        let (c, se) = covariance_with_se(&a, &b);
        assert!((c - cov(&a, &b)).abs() < 1e-12);
        assert!((se - want).abs() < 1e-12, "{se} vs {want}");
    }
}
