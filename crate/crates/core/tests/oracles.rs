//! Checks against values computed independently of the library: exact
//! master-equation solutions, hand-solved stationary laws, finite
//! differences, third-party special functions and plain Simpson rules.

use std::f64::consts::PI;

use ssep::expectation::{evolve, evolve_dirichlet, DensityProfile, EvolveOptions};
use ssep::harness::{run_chaos_experiment, Engine, ExperimentSpec};
use ssep::kmc::{covariance_with_se, ensemble_density, sample_replicates};
use ssep::limits::heat_solution;
use ssep::model::{BoundaryDensities, InitialCondition, Profile, SystemParams};
use ssep::rng::RngStream;
use ssep::special::erfc;
use ssep::sticky::{sticky_bm_kernel, sticky_bm_negative_mass, StickyWalk};

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

// ---------------------------------------------------------------------------
// Exact law of a tiny system: N = 2, M = 2, 36 states.

const N: usize = 2;
const M: usize = 2;

#[derive(Clone, Copy)]
struct State {
    eta: [u8; N],
    minus: usize,
    plus: usize,
}

fn index(s: State) -> usize {
    ((s.eta[0] as usize * 2 + s.eta[1] as usize) * (M + 1) + s.minus) * (M + 1) + s.plus
}

fn all_states() -> Vec<State> {
    let mut v = Vec::new();
    for e0 in 0..2 {
        for e1 in 0..2 {
            for minus in 0..=M {
                for plus in 0..=M {
                    v.push(State { eta: [e0, e1], minus, plus });
                }
            }
        }
    }
    v
}

/// Outgoing transitions, written straight from the rate formulas.
fn transitions(s: State) -> Vec<(State, f64)> {
    let m = M as f64;
    let mut out = Vec::new();
    if s.eta[0] != s.eta[1] {
        out.push((State { eta: [s.eta[1], s.eta[0]], ..s }, 0.5));
    }
    // Right end.
    let (e, n) = (s.eta[N - 1] as f64, s.plus as f64);
    let rate = 0.5 * (1.0 - n / m) * e + 0.5 * (n / m) * (1.0 - e);
    if rate > 0.0 {
        let mut t = s;
        if s.eta[N - 1] == 1 {
            t.eta[N - 1] = 0;
            t.plus += 1;
        } else {
            t.eta[N - 1] = 1;
            t.plus -= 1;
        }
        out.push((t, rate));
    }
    // Left end.
    let (e, n) = (s.eta[0] as f64, s.minus as f64);
    let rate = 0.5 * (1.0 - n / m) * e + 0.5 * (n / m) * (1.0 - e);
    if rate > 0.0 {
        let mut t = s;
        if s.eta[0] == 1 {
            t.eta[0] = 0;
            t.minus += 1;
        } else {
            t.eta[0] = 1;
            t.minus -= 1;
        }
        out.push((t, rate));
    }
    out
}

fn binomial(k: usize, p: f64) -> f64 {
    let c = [1.0, 2.0, 1.0][k];
    c * p.powi(k as i32) * (1.0 - p).powi((M - k) as i32)
}

/// Distribution at time `t` by uniformization.
fn exact_law(p0: &[f64], t: f64) -> Vec<f64> {
    let states = all_states();
    let lambda = 2.0;
    let mut term = p0.to_vec();
    let mut weight = (-lambda * t).exp();
    let mut out: Vec<f64> = term.iter().map(|p| p * weight).collect();
    for k in 1..400 {
        let mut next = term.clone();
        for s in &states {
            let i = index(*s);
            for (to, rate) in transitions(*s) {
                let flow = term[i] * rate / lambda;
                next[i] -= flow;
                next[index(to)] += flow;
            }
        }
        term = next;
        weight *= lambda * t / k as f64;
        for (o, p) in out.iter_mut().zip(&term) {
            *o += p * weight;
        }
    }
    out
}

struct Moments {
    eta: [f64; 2],
    minus: f64,
    plus: f64,
    cov: f64,
}

fn moments(law: &[f64]) -> Moments {
    let mut m = Moments { eta: [0.0; 2], minus: 0.0, plus: 0.0, cov: 0.0 };
    let mut both = 0.0;
    for s in all_states() {
        let p = law[index(s)];
        m.eta[0] += p * s.eta[0] as f64;
        m.eta[1] += p * s.eta[1] as f64;
        m.minus += p * s.minus as f64 / M as f64;
        m.plus += p * s.plus as f64 / M as f64;
        both += p * (s.eta[0] * s.eta[1]) as f64;
    }
    m.cov = both - m.eta[0] * m.eta[1];
    m
}

fn tiny_initial() -> (InitialCondition, Vec<f64>) {
    // u0(1/2) = 0.55, u0(1) = 0.9; reservoirs Binomial(2, 0.7), Binomial(2, 0.1).
    let init = InitialCondition::new(Profile::Affine(0.2, 0.9), BoundaryDensities::new(0.7, 0.1).unwrap());
    let q = [0.55, 0.9];
    let mut p0 = vec![0.0; 4 * (M + 1) * (M + 1)];
    for s in all_states() {
        let site = |x: usize| if s.eta[x] == 1 { q[x] } else { 1.0 - q[x] };
        p0[index(s)] = site(0) * site(1) * binomial(s.minus, 0.7) * binomial(s.plus, 0.1);
    }
    (init, p0)
}

#[test]
fn ode_equals_exact_expectations() {
    let (init, p0) = tiny_initial();
    let params = SystemParams::with_reservoir(N, M as u64).unwrap();
    let start = DensityProfile::from_initial(&init, &params).unwrap();
    for t in [0.5, 3.0, 12.0] {
        let exact = moments(&exact_law(&p0, t));
        let rho = evolve(&start, &params, t, &EvolveOptions::default()).unwrap();
        let want = [exact.minus, exact.eta[0], exact.eta[1], exact.plus];
        for (x, w) in want.iter().enumerate() {
            assert!((rho.get(x) - w).abs() < 1e-8, "t={t} x={x}: {} vs {w}", rho.get(x));
        }
    }
}

#[test]
fn kmc_matches_exact_law() {
    let (init, p0) = tiny_initial();
    let params = SystemParams::with_reservoir(N, M as u64).unwrap();
    let t = 3.0;
    let exact = moments(&exact_law(&p0, t));
    let k = 40_000;
    let samples = sample_replicates(&init, &params, t, k, 11).unwrap();
    let col = |x: usize| samples.iter().map(|s| s[x]).collect::<Vec<f64>>();
    let want = [exact.minus, exact.eta[0], exact.eta[1], exact.plus];
    for (x, w) in want.iter().enumerate() {
        let v = col(x);
        let mean = v.iter().sum::<f64>() / k as f64;
        let var = v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0);
        let se = (var / k as f64).sqrt();
        assert!((mean - w).abs() <= 3.0 * se, "x={x}: {mean} vs {w} (se {se})");
    }
    let (cov, se) = covariance_with_se(&col(1), &col(2));
    assert!((cov - exact.cov).abs() <= 3.0 * se, "cov {cov} vs {} (se {se})", exact.cov);
    // Finite reservoirs correlate the channel.
    assert!(exact.cov.abs() > 1e-4);
}

// ---------------------------------------------------------------------------
// Special functions.

#[test]
fn erfc_matches_statrs() {
    for i in 0..=600 {
        let x = -6.0 + i as f64 * 0.05;
        let want = statrs::function::erf::erfc(x);
        let got = erfc(x);
        // statrs is off by up to ~1e-10 (x = 0.5, checked against mpmath),
        // so this is only a dense sanity sweep; the table below is the tight check.
        assert!(((got - want) / want).abs() < 1e-9, "x={x}: {got} vs {want}");
    }
}

#[test]
fn erfc_matches_high_precision_values() {
    // 40-digit mpmath evaluations.
    let table = [
        (-1.95, 1.994_179_333_592_189_117_658_633),
        (-1.4, 1.952_285_119_762_648_796_4),
        (-0.7, 1.677_801_193_837_418_442_277),
        (0.7, 0.322_198_806_162_581_557_723_1),
        (0.5, 0.479_500_122_186_953_462_317_253_3),
        (1.0, 0.157_299_207_050_285_130_658_779_4),
        (1.5, 0.033_894_853_524_689_272_933_023_74),
        (1.95, 0.005_820_666_407_810_882_341_366_816),
        (2.0, 0.004_677_734_981_047_265_837_930_744),
        (2.5, 0.000_406_952_017_444_958_939_564_215_7),
        (4.0, 1.541_725_790_028_001_885_215_967e-8),
        (5.0, 1.537_459_794_428_034_850_188e-12),
    ];
    for (x, want) in table {
        assert!(((erfc(x) - want) / want).abs() < 1e-13, "x={x}: {} vs {want}", erfc(x));
    }
}

#[test]
fn erfc_matches_direct_integration() {
    for x in [0.0, 0.3, 1.0, 1.9, 2.1, 3.5, 5.0] {
        let want = 2.0 / PI.sqrt() * simpson(|z| (-z * z).exp(), x, x + 12.0, 40_000);
        assert!((erfc(x) - want).abs() < 1e-13 * want.max(1e-300) + 1e-16, "x={x}");
    }
}

// ---------------------------------------------------------------------------
// Heat equation and discrete Dirichlet problem.

/// Method of lines on `J` cells with RK4 in time.
fn heat_fd(u0: impl Fn(f64) -> f64, j: usize, t: f64) -> Vec<f64> {
    let h = 1.0 / j as f64;
    let mut u: Vec<f64> = (0..=j).map(|i| u0(i as f64 * h)).collect();
    u[0] = 0.0;
    u[j] = 0.0;
    let lap = |u: &[f64]| {
        let mut d = vec![0.0; u.len()];
        for i in 1..j {
            d[i] = 0.5 * (u[i - 1] - 2.0 * u[i] + u[i + 1]) / (h * h);
        }
        d
    };
    let dt_max = 1.0 * h * h;
    let steps = (t / dt_max).ceil() as usize;
    let dt = t / steps as f64;
    for _ in 0..steps {
        let k1 = lap(&u);
        let y: Vec<f64> = u.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = lap(&y);
        let y: Vec<f64> = u.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = lap(&y);
        let y: Vec<f64> = u.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = lap(&y);
        for i in 0..=j {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    u
}

#[test]
fn heat_single_mode_matches_finite_differences() {
    let b = BoundaryDensities::new(0.0, 0.0).unwrap();
    for t in [0.05, 0.1, 0.5] {
        let coarse = heat_fd(|r| (PI * r).sin(), 100, t);
        let fine = heat_fd(|r| (PI * r).sin(), 200, t);
        for r in [0.1, 0.25, 0.5, 0.8] {
            let c = coarse[(r * 100.0_f64).round() as usize];
            let f = fine[(r * 200.0_f64).round() as usize];
            let extrapolated = (4.0 * f - c) / 3.0;
            let u = heat_solution(&Profile::Sine, b, r, t, 1).unwrap();
            assert!((u - extrapolated).abs() < 1e-6, "t={t} r={r}: {u} vs {extrapolated}");
        }
    }
}

#[test]
fn heat_relaxes_to_line() {
    let b = BoundaryDensities::new(0.1, 0.7).unwrap();
    for i in 0..=20 {
        let r = i as f64 / 20.0;
        let u = heat_solution(&Profile::Step(1.0, 0.0), b, r, 3.0, 1).unwrap();
        assert!((u - (0.1 + 0.6 * r)).abs() <= 2e-6);
    }
}

#[test]
fn dirichlet_sine_mode_at_diffusive_time() {
    let n = 50;
    let init = InitialCondition::new(Profile::Sine, BoundaryDensities::new(0.0, 0.0).unwrap());
    let params = SystemParams::new(n, 0.5).unwrap();
    let start = DensityProfile::from_initial(&init, &params).unwrap();
    let t = 0.1 * (n * n) as f64;
    let out = evolve_dirichlet(&start, init.boundary, t, &EvolveOptions::default()).unwrap();
    let decay = (-PI * PI * 0.1 / 2.0).exp();
    for x in 0..=n + 1 {
        let want = decay * (PI * x as f64 / n as f64).sin();
        assert!((out.get(x) - want).abs() <= 5e-2, "x={x}");
    }
}

#[test]
fn finite_reservoir_stays_within_boundary_drift_of_dirichlet() {
    // The difference solves the discrete heat equation with zero initial
    // data and boundary values rho_±(s) - v_±, so it is bounded by their sup.
    let params = SystemParams::new(16, 0.25).unwrap();
    let b = BoundaryDensities::new(0.9, 0.2).unwrap();
    let init = InitialCondition::new(Profile::Step(0.0, 1.0), b);
    let start = DensityProfile::from_initial(&init, &params).unwrap();
    let opts = EvolveOptions::default();
    let mut envelope: f64 = 0.0;
    let steps = 400;
    let horizon = 600.0;
    for i in 1..=steps {
        let t = horizon * i as f64 / steps as f64;
        let finite = evolve(&start, &params, t, &opts).unwrap();
        envelope = envelope.max((finite.minus() - b.v_minus).abs()).max((finite.plus() - b.v_plus).abs());
        let ideal = evolve_dirichlet(&start, b, t, &opts).unwrap();
        let gap = (1..=params.n()).map(|x| (finite.get(x) - ideal.get(x)).abs()).fold(0.0, f64::max);
        assert!(gap <= envelope + 1e-9, "t={t}: gap {gap} > envelope {envelope}");
    }
}

// ---------------------------------------------------------------------------
// Sticky walk and sticky Brownian motion.

#[test]
fn three_state_stationary_law() {
    // On {0, 1, 2}: pi_0 / (2M) = pi_1 / 2, so pi is proportional to (M, 1, M).
    for m in [1u64, 3] {
        let walk = StickyWalk::new(1, m).unwrap();
        let k = 100_000;
        let law = walk.empirical_law(1, 400.0, k, 5 + m).unwrap();
        let z = (2 * m + 1) as f64;
        let want = [m as f64 / z, 1.0 / z, m as f64 / z];
        for (p, w) in law.iter().zip(want) {
            let se = (w * (1.0 - w) / k as f64).sqrt();
            assert!((p - w).abs() <= 3.0 * se, "m={m}: {p} vs {w}");
        }
        let exact: Vec<f64> = walk.stationary_law();
        assert!(exact.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-15));
    }
}

#[test]
fn exit_time_mean() {
    let walk = StickyWalk::new(9, 4).unwrap();
    let mut rng = RngStream::new(8, 0);
    for x in [1, 4, 7] {
        let k = 20_000;
        let taus: Vec<f64> = (0..k).map(|_| walk.first_hitting(x, &mut rng).unwrap().tau).collect();
        let mean = taus.iter().sum::<f64>() / k as f64;
        let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k as f64 - 1.0)).sqrt();
        // Rate-1 simple walk: E tau = x (N + 1 - x).
        let want = (x * (10 - x)) as f64;
        assert!((mean - want).abs() <= 3.0 * sd / (k as f64).sqrt(), "x={x}: {mean} vs {want}");
    }
}

#[test]
fn sticky_kernel_mass_by_simpson() {
    for (x, t) in [(1.0, 1.0), (0.0, 0.5), (2.0, 2.0)] {
        let density = |y: f64| sticky_bm_kernel(x, y, t).unwrap().density;
        let centre = 1.0 + x;
        let lo = 1.0f64.min(centre) - 15.0 * t.sqrt();
        let hi = 1.0f64.max(centre) + 15.0 * t.sqrt();
        let mut cuts = vec![lo, 1.0, centre, hi];
        cuts.dedup();
        let mass: f64 = cuts.windows(2).map(|w| simpson(density, w[0], w[1], 20_000)).sum();
        let atom = sticky_bm_kernel(x, 1.0, t).unwrap().atom;
        assert!((mass + atom - 1.0).abs() < 1e-6, "({x}, {t}): {}", mass + atom);
    }
}

#[test]
fn sticky_kernel_left_tail_value() {
    // Reference value from an independent scipy evaluation of the same integral.
    let p = sticky_bm_negative_mass(1.0, 1.0).unwrap();
    assert!(p > 0.0);
    assert!((p - 0.006_305_007_330).abs() < 1e-9, "{p}");
}

#[test]
fn sticky_kernel_solves_heat_equation_off_the_sticky_point() {
    let (x, dt, dy) = (0.7, 1e-5, 1e-3);
    for t in [0.5, 1.5] {
        for y in [-1.0, 0.2, 2.3, 3.0] {
            let p = |y: f64, t: f64| sticky_bm_kernel(x, y, t).unwrap().density;
            let pt = (p(y, t + dt) - p(y, t - dt)) / (2.0 * dt);
            let pyy = (p(y + dy, t) - 2.0 * p(y, t) + p(y - dy, t)) / (dy * dy);
            assert!((pt - 0.5 * pyy).abs() < 1e-5, "t={t} y={y}: {pt} vs {}", 0.5 * pyy);
        }
    }
}

// ---------------------------------------------------------------------------
// Particle system ensembles.

#[test]
fn half_filled_product_measure_is_stationary() {
    let params = SystemParams::new(10, 0.5).unwrap();
    let init = InitialCondition::new(Profile::Const(0.5), BoundaryDensities::new(0.5, 0.5).unwrap());
    for (i, t) in [1.0, 25.0, 200.0].into_iter().enumerate() {
        let stats = ensemble_density(&init, &params, t, 4000, 30 + i as u64).unwrap();
        for (x, (m, se)) in stats.mean.iter().zip(&stats.se).enumerate() {
            assert!((m - 0.5).abs() <= 3.0 * se, "t={t} x={x}: {m} (se {se})");
        }
    }
}

#[test]
fn covariance_vanishes_under_initial_product_law() {
    let params = SystemParams::new(12, 0.5).unwrap();
    let init = InitialCondition::new(Profile::Sine, BoundaryDensities::new(1.0, 0.0).unwrap());
    let mut spec = ExperimentSpec::new(params, 0.0, init, vec![1.0])
        .unwrap()
        .with_engine(Engine::Kmc)
        .with_replicates(4000)
        .with_seed(3);
    spec.times = vec![0.0];
    let res = run_chaos_experiment(&spec, &[(0.25, 0.5), (1.0 / 3.0, 2.0 / 3.0)]).unwrap();
    for row in &res.rows {
        assert!(row.measured.abs() <= 3.0 * row.se.unwrap(), "{row:?}");
    }
}
