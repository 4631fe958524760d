//! Experiment orchestration: regime dispatch, error tables, output.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expectation::{evolve, DensityProfile, EvolveOptions};
use crate::kmc::{check_pair, max_event_rate, sample_replicates_at, summarize_samples};
use crate::limits::{heat_terms, HeatSeries, LimitRegime, RegimeKind};
use crate::model::{BoundaryDensities, InitialCondition, Profile, SystemParams};

/// Number of macroscopic probe points `r = 0, 0.1, ..., 1`.
pub const PROBE_POINTS: usize = 11;
pub const DEFAULT_BUDGET_EVENTS: f64 = 2e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Ode,
    Kmc,
    Both,
}

impl Engine {
    fn runs_ode(self) -> bool {
        matches!(self, Self::Ode | Self::Both)
    }

    fn runs_kmc(self) -> bool {
        matches!(self, Self::Kmc | Self::Both)
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ode => "ode",
            Self::Kmc => "kmc",
            Self::Both => "both",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(Self::Ode),
            "kmc" => Ok(Self::Kmc),
            "both" => Ok(Self::Both),
            _ => Err(invalid(format!("unknown engine {s:?} (ode, kmc, both)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(invalid(format!("unknown format {s:?} (csv, json)"))),
        }
    }
}

/// C-style `%.12g`.
pub fn fmt_g(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.into();
    }
    const P: i32 = 12;
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..P).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (P - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to the value that `%.12g` prints.
pub fn quantize(x: f64) -> f64 {
    fmt_g(x).parse().unwrap_or(x)
}

/// Macroscopic probe grid `r_i = i / (PROBE_POINTS - 1)`.
pub fn probe_grid() -> Vec<f64> {
    (0..PROBE_POINTS).map(|i| i as f64 / (PROBE_POINTS - 1) as f64).collect()
}

/// Extended-lattice site for macroscopic position `r`: `round(r (N+1))`, so
/// `r = 0` and `r = 1` are the reservoir sites.
pub fn probe_site(r: f64, n: usize) -> usize {
    ((r * (n + 1) as f64).round() as usize).min(n + 1)
}

/// [`probe_site`] restricted to the channel `1..=N`.
pub fn channel_site(r: f64, n: usize) -> usize {
    probe_site(r, n).clamp(1, n)
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub regime: LimitRegime,
    pub params: SystemParams,
    pub initial: InitialCondition,
    /// Macroscopic times, sorted.
    pub times: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub engine: Engine,
    pub budget_events: f64,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl ExperimentSpec {
    /// The regime follows from `alpha'` and `params.alpha()`.
    pub fn new(params: SystemParams, alpha_prime: f64, initial: InitialCondition, times: Vec<f64>) -> Result<Self> {
        let spec = Self {
            regime: LimitRegime::classify(params.alpha(), alpha_prime)?,
            params,
            initial,
            times,
            replicates: 1000,
            seed: 1,
            engine: Engine::Ode,
            budget_events: DEFAULT_BUDGET_EVENTS,
            out: None,
            format: Format::Csv,
        }
        .sorted();
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_replicates(mut self, k: usize) -> Self {
        self.replicates = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, events: f64) -> Self {
        self.budget_events = events;
        self
    }

    fn sorted(mut self) -> Self {
        self.times.sort_by(f64::total_cmp);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(invalid("no probe times"));
        }
        if let Some(t) = self.times.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(invalid(format!("probe times must be positive, got {t}")));
        }
        if self.engine.runs_kmc() && self.replicates < 2 {
            return Err(invalid(format!("kmc needs K >= 2 replicates, got {}", self.replicates)));
        }
        Ok(())
    }

    pub fn micro_time(&self, t: f64) -> f64 {
        self.params.micro_time(self.regime.alpha_prime(), t)
    }

    /// Estimated KMC event count: replicates times the maximal total rate
    /// times the longest horizon.
    pub fn estimated_events(&self) -> f64 {
        let horizon = self.times.iter().copied().fold(0.0, f64::max);
        self.replicates as f64 * max_event_rate(&self.params) * self.micro_time(horizon)
    }

    fn check_budget(&self) -> Result<()> {
        let estimated = self.estimated_events();
        if estimated > self.budget_events {
            return Err(Error::Budget {
                estimated,
                budget: self.budget_events,
            });
        }
        Ok(())
    }
}

/// One output line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub regime: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub alpha_prime: f64,
    pub t: f64,
    pub site_or_pair: String,
    pub measured: f64,
    pub reference: f64,
    pub abs_err: f64,
    pub se: Option<f64>,
    pub seed: u64,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "regime",
    "N",
    "alpha",
    "alpha_prime",
    "t",
    "site_or_pair",
    "measured",
    "reference",
    "abs_err",
    "se",
    "seed",
];

impl Row {
    fn new(spec: &ExperimentSpec, t: f64, label: String, measured: f64, reference: f64, se: Option<f64>) -> Self {
        Self {
            regime: spec.regime.kind().to_string(),
            n: spec.params.n(),
            alpha: quantize(spec.params.alpha()),
            alpha_prime: quantize(spec.regime.alpha_prime()),
            t: quantize(t),
            site_or_pair: label,
            measured: quantize(measured),
            reference: quantize(reference),
            abs_err: quantize((measured - reference).abs()),
            se: se.map(quantize),
            seed: spec.seed,
        }
    }

    fn record(&self) -> [String; 11] {
        [
            self.regime.clone(),
            self.n.to_string(),
            fmt_g(self.alpha),
            fmt_g(self.alpha_prime),
            fmt_g(self.t),
            self.site_or_pair.clone(),
            fmt_g(self.measured),
            fmt_g(self.reference),
            fmt_g(self.abs_err),
            self.se.map(fmt_g).unwrap_or_default(),
            self.seed.to_string(),
        ]
    }
}

/// Error metrics of one engine at one time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSummary {
    pub t: f64,
    pub engine: String,
    /// Largest error over the probe grid (over pairs for covariances).
    pub sup_error: f64,
    pub boundary_minus_error: Option<f64>,
    pub boundary_plus_error: Option<f64>,
    pub max_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub regime: LimitRegime,
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub engine: Engine,
    pub rows: Vec<Row>,
    pub summaries: Vec<TimeSummary>,
    pub wall_clock: f64,
}

impl ExperimentResult {
    pub fn summary(&self, t: f64, engine: &str) -> Option<&TimeSummary> {
        self.summaries.iter().find(|s| s.t == quantize(t) && s.engine == engine)
    }

    pub fn csv_string(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }

    pub fn json_string(&self) -> Result<String> {
        let doc = serde_json::json!({
            "schema": JSON_SCHEMA_ID,
            "regime": self.regime.kind().as_str(),
            "N": self.n,
            "alpha": quantize(self.alpha),
            "alpha_prime": quantize(self.regime.alpha_prime()),
            "seed": self.seed,
            "engine": self.engine.to_string(),
            "rows": self.rows,
            "summary": self.summaries,
            "wall_clock_seconds": self.wall_clock,
        });
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, GFormatter);
        doc.serialize(&mut ser)?;
        out.push(b'\n');
        Ok(String::from_utf8(out).expect("json is utf-8"))
    }
}

pub const JSON_SCHEMA_ID: &str = "ssep-experiment/1";

/// Compact JSON with every float printed as `%.12g`.
struct GFormatter;

impl serde_json::ser::Formatter for GFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_g(value).as_bytes())
    }
}

pub fn rows_to_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        w.write_record(row.record())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Reads back the table written by [`emit`] in CSV form.
pub fn parse_csv(text: &str) -> Result<Vec<Row>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(invalid(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let r = record?;
        let num = |i: usize| -> Result<f64> {
            r[i].parse().map_err(|_| invalid(format!("column {} is not a number: {:?}", CSV_COLUMNS[i], &r[i])))
        };
        let int = |i: usize| -> Result<u64> {
            r[i].parse().map_err(|_| invalid(format!("column {} is not an integer: {:?}", CSV_COLUMNS[i], &r[i])))
        };
        rows.push(Row {
            regime: r[0].to_string(),
            n: int(1)? as usize,
            alpha: num(2)?,
            alpha_prime: num(3)?,
            t: num(4)?,
            site_or_pair: r[5].to_string(),
            measured: num(6)?,
            reference: num(7)?,
            abs_err: num(8)?,
            se: if r[9].is_empty() { None } else { Some(num(9)?) },
            seed: int(10)?,
        });
    }
    Ok(rows)
}

/// Writes the result to `path`, or to stdout when `path` is `-`.
pub fn emit(result: &ExperimentResult, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => result.csv_string()?,
        Format::Json => result.json_string()?,
    };
    if path == Path::new("-") {
        io::stdout().write_all(text.as_bytes())?;
    } else {
        fs::write(path, text)?;
    }
    Ok(())
}

/// A probe of the limit profile: where it is read and what it should be.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub label: String,
    pub site: usize,
    pub r: f64,
    pub reference: f64,
}

/// Reference values for the probe grid and both reservoirs at macroscopic
/// time `t`. The reservoir probes come last, labelled `minus` and `plus`.
pub fn probe_references(spec: &ExperimentSpec, t: f64) -> Result<Vec<Probe>> {
    let n = spec.params.n();
    let boundary = spec.initial.boundary;
    let heat = match spec.regime.kind() {
        RegimeKind::IdealHydrodynamic => Some(HeatSeries::new(&spec.initial.u0, boundary, heat_terms(t, crate::limits::HEAT_TAIL_TOL))?),
        _ => None,
    };
    let mut probes = Vec::with_capacity(PROBE_POINTS + 2);
    for r in probe_grid() {
        let reference = match &heat {
            Some(series) => series.eval(r, t),
            None => spec.regime.reference(&spec.initial.u0, boundary, r, t)?,
        };
        let site = probe_site(r, n);
        probes.push(Probe {
            label: format!("x={site}"),
            site,
            r,
            reference,
        });
    }
    let ends = spec.regime.boundary_reference(boundary, t);
    probes.push(Probe {
        label: "minus".into(),
        site: 0,
        r: 0.0,
        reference: ends.v_minus,
    });
    probes.push(Probe {
        label: "plus".into(),
        site: n + 1,
        r: 1.0,
        reference: ends.v_plus,
    });
    Ok(probes)
}

fn summarize_probes(t: f64, engine: Engine, rows: &[Row]) -> TimeSummary {
    let prefix = format!("{engine}:");
    let mine: Vec<&Row> = rows
        .iter()
        .filter(|r| r.t == quantize(t) && r.site_or_pair.starts_with(&prefix))
        .collect();
    let find = |name: &str| {
        mine.iter()
            .find(|r| r.site_or_pair[prefix.len()..] == *name)
            .map(|r| r.abs_err)
    };
    let se: Vec<f64> = mine.iter().filter_map(|r| r.se).collect();
    TimeSummary {
        t: quantize(t),
        engine: engine.to_string(),
        sup_error: mine
            .iter()
            .filter(|r| r.site_or_pair[prefix.len()..].starts_with("x="))
            .map(|r| r.abs_err)
            .fold(0.0, f64::max),
        boundary_minus_error: find("minus"),
        boundary_plus_error: find("plus"),
        max_se: if se.is_empty() { None } else { Some(se.iter().copied().fold(0.0, f64::max)) },
    }
}

/// Runs the configured engines at every probe time and compares them with
/// the limit profile of the experiment's regime.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    if spec.engine.runs_kmc() {
        spec.check_budget()?;
    }
    let clock = Instant::now();
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let probes: Vec<Vec<Probe>> = spec.times.iter().map(|&t| probe_references(spec, t)).collect::<Result<_>>()?;

    if spec.engine.runs_ode() {
        let start = DensityProfile::from_initial(&spec.initial, &spec.params)?;
        let opts = EvolveOptions::default();
        for (&t, probes) in spec.times.iter().zip(&probes) {
            let rho = evolve(&start, &spec.params, spec.micro_time(t), &opts)?;
            for p in probes {
                rows.push(Row::new(spec, t, format!("ode:{}", p.label), rho.get(p.site), p.reference, None));
            }
            summaries.push(summarize_probes(t, Engine::Ode, &rows));
        }
    }

    if spec.engine.runs_kmc() {
        let micro: Vec<f64> = spec.times.iter().map(|&t| spec.micro_time(t)).collect();
        let samples = sample_replicates_at(&spec.initial, &spec.params, &micro, spec.replicates, spec.seed)?;
        for (i, (&t, probes)) in spec.times.iter().zip(&probes).enumerate() {
            let at_t: Vec<Vec<f64>> = samples.iter().map(|s| s[i].clone()).collect();
            let stats = summarize_samples(&at_t, &[]);
            for p in probes {
                rows.push(Row::new(
                    spec,
                    t,
                    format!("kmc:{}", p.label),
                    stats.mean[p.site],
                    p.reference,
                    Some(stats.se[p.site]),
                ));
            }
            summaries.push(summarize_probes(t, Engine::Kmc, &rows));
        }
    }

    Ok(ExperimentResult {
        regime: spec.regime,
        n: spec.params.n(),
        alpha: spec.params.alpha(),
        seed: spec.seed,
        engine: spec.engine,
        rows,
        summaries,
        wall_clock: clock.elapsed().as_secs_f64(),
    })
}

/// Two-point covariances at macroscopic pairs `(r1, r2)`, compared with the
/// value 0 of the product measure seen with ideal reservoirs. Unlike
/// [`run_experiment`], time 0 is allowed and probes the initial law.
pub fn run_chaos_experiment(spec: &ExperimentSpec, pairs: &[(f64, f64)]) -> Result<ExperimentResult> {
    if spec.engine != Engine::Kmc {
        return Err(invalid(format!("covariances need engine kmc, got {}", spec.engine)));
    }
    if spec.replicates < 2 {
        return Err(invalid(format!("kmc needs K >= 2 replicates, got {}", spec.replicates)));
    }
    if spec.times.is_empty() || spec.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(invalid("covariance times must be finite and non-negative"));
    }
    if pairs.is_empty() {
        return Err(invalid("no site pairs"));
    }
    spec.check_budget()?;
    let clock = Instant::now();
    let n = spec.params.n();
    let sites: Vec<(usize, usize)> = pairs.iter().map(|&(a, b)| (channel_site(a, n), channel_site(b, n))).collect();
    for &(x1, x2) in &sites {
        check_pair(&spec.params, x1, x2)?;
    }
    let micro: Vec<f64> = spec.times.iter().map(|&t| spec.micro_time(t)).collect();
    let samples = sample_replicates_at(&spec.initial, &spec.params, &micro, spec.replicates, spec.seed)?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (i, &t) in spec.times.iter().enumerate() {
        let at_t: Vec<Vec<f64>> = samples.iter().map(|s| s[i].clone()).collect();
        let stats = summarize_samples(&at_t, &sites);
        for p in &stats.pairs {
            rows.push(Row::new(spec, t, format!("kmc:x={}/x={}", p.x1, p.x2), p.cov, 0.0, Some(p.se)));
        }
        let here: Vec<&Row> = rows.iter().filter(|r| r.t == quantize(t)).collect();
        summaries.push(TimeSummary {
            t: quantize(t),
            engine: Engine::Kmc.to_string(),
            sup_error: here.iter().map(|r| r.abs_err).fold(0.0, f64::max),
            boundary_minus_error: None,
            boundary_plus_error: None,
            max_se: Some(here.iter().filter_map(|r| r.se).fold(0.0, f64::max)),
        });
    }
    Ok(ExperimentResult {
        regime: spec.regime,
        n,
        alpha: spec.params.alpha(),
        seed: spec.seed,
        engine: spec.engine,
        rows,
        summaries,
        wall_clock: clock.elapsed().as_secs_f64(),
    })
}

/// Experiment family chosen on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ideal,
    Adiabatic,
    Global,
    Chaos,
}

/// Experiment settings from a key=value file and command-line flags.
/// Unset fields fall back to family defaults in [`Settings::spec`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub n: Option<usize>,
    pub alpha: Option<f64>,
    pub alpha_prime: Option<f64>,
    pub times: Vec<f64>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub engine: Option<Engine>,
    pub u0: Option<String>,
    pub v_minus: Option<f64>,
    pub v_plus: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub budget_events: Option<f64>,
    pub pairs: Vec<(f64, f64)>,
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("bad value {value:?} for {key}"))
}

/// Parses `a,b` into a pair of reals.
pub fn parse_pair(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(',').ok_or_else(|| invalid(format!("pair {s:?} is not of the form r1,r2")))?;
    let a = a.trim().parse().map_err(|_| invalid(format!("bad pair {s:?}")))?;
    let b = b.trim().parse().map_err(|_| invalid(format!("bad pair {s:?}")))?;
    Ok((a, b))
}

impl Settings {
    /// Flat `key = value` lines; `#` starts a comment. Keys are the long flag
    /// names (`alpha-prime` and `alpha_prime` both work). `t` and `pair` may
    /// repeat; `t` also takes a comma-separated list.
    pub fn parse_config(text: &str) -> Result<Self> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let config_err = |msg: String| Error::Config { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("expected key=value, got {line:?}")))?;
            let key = key.trim().replace('_', "-");
            let value = value.trim();
            let res: std::result::Result<(), String> = (|| {
                match key.as_str() {
                    "n" => s.n = Some(parse_value(&key, value)?),
                    "alpha" => s.alpha = Some(parse_value(&key, value)?),
                    "alpha-prime" => s.alpha_prime = Some(parse_value(&key, value)?),
                    "t" => {
                        for part in value.split(',') {
                            s.times.push(parse_value(&key, part.trim())?);
                        }
                    }
                    "k" => s.k = Some(parse_value(&key, value)?),
                    "seed" => s.seed = Some(parse_value(&key, value)?),
                    "engine" => s.engine = Some(value.parse().map_err(|e: Error| e.to_string())?),
                    "u0" => {
                        value.parse::<Profile>().map_err(|e| e.to_string())?;
                        s.u0 = Some(value.to_string());
                    }
                    "v-minus" => s.v_minus = Some(parse_value(&key, value)?),
                    "v-plus" => s.v_plus = Some(parse_value(&key, value)?),
                    "out" => s.out = Some(PathBuf::from(value)),
                    "format" => s.format = Some(value.parse().map_err(|e: Error| e.to_string())?),
                    "budget-events" => s.budget_events = Some(parse_value(&key, value)?),
                    "pair" => s.pairs.push(parse_pair(value).map_err(|e| e.to_string())?),
                    _ => return Err(format!("unknown key {key:?}")),
                }
                Ok(())
            })();
            res.map_err(config_err)?;
        }
        Ok(s)
    }

    /// `other`'s fields win wherever they are set.
    pub fn overlay(self, other: Settings) -> Settings {
        Settings {
            n: other.n.or(self.n),
            alpha: other.alpha.or(self.alpha),
            alpha_prime: other.alpha_prime.or(self.alpha_prime),
            times: if other.times.is_empty() { self.times } else { other.times },
            k: other.k.or(self.k),
            seed: other.seed.or(self.seed),
            engine: other.engine.or(self.engine),
            u0: other.u0.or(self.u0),
            v_minus: other.v_minus.or(self.v_minus),
            v_plus: other.v_plus.or(self.v_plus),
            out: other.out.or(self.out),
            format: other.format.or(self.format),
            budget_events: other.budget_events.or(self.budget_events),
            pairs: if other.pairs.is_empty() { self.pairs } else { other.pairs },
        }
    }

    /// Builds the experiment, filling unset fields with defaults: N = 20,
    /// alpha = 0.5, t = 1, K = 1000, seed = 1, v = (1, 0), u0 the line
    /// between the boundary values. alpha' defaults to 0 (ideal, chaos),
    /// alpha (adiabatic) or alpha + 0.5 (global).
    pub fn spec(&self, family: Family) -> Result<ExperimentSpec> {
        let alpha = self.alpha.unwrap_or(0.5);
        let alpha_prime = self.alpha_prime.unwrap_or(match family {
            Family::Ideal | Family::Chaos => 0.0,
            Family::Adiabatic => alpha,
            Family::Global => alpha + 0.5,
        });
        let params = SystemParams::new(self.n.unwrap_or(20), alpha)?;
        let boundary = BoundaryDensities::new(self.v_minus.unwrap_or(1.0), self.v_plus.unwrap_or(0.0))?;
        let u0 = match &self.u0 {
            Some(s) => s.parse()?,
            None => Profile::interpolating(boundary),
        };
        let times = if self.times.is_empty() { vec![1.0] } else { self.times.clone() };
        let engine = match family {
            Family::Chaos => Engine::Kmc,
            _ => self.engine.unwrap_or_default(),
        };
        if family == Family::Chaos && self.engine.is_some_and(|e| e != Engine::Kmc) {
            return Err(invalid("chaos experiments run on the kmc engine only"));
        }
        let initial = InitialCondition::new(u0, boundary);
        let spec = ExperimentSpec {
            regime: LimitRegime::classify(alpha, alpha_prime)?,
            params,
            initial,
            times,
            replicates: self.k.unwrap_or(1000),
            seed: self.seed.unwrap_or(1),
            engine,
            budget_events: self.budget_events.unwrap_or(DEFAULT_BUDGET_EVENTS),
            out: self.out.clone(),
            format: self.format.unwrap_or_default(),
        }
        .sorted();
        let kind = spec.regime.kind();
        let fits = match family {
            Family::Ideal => matches!(kind, RegimeKind::IdealHydrodynamic | RegimeKind::IdealStationary),
            Family::Adiabatic => kind == RegimeKind::Adiabatic,
            Family::Global => kind == RegimeKind::Global,
            Family::Chaos => true,
        };
        if !fits {
            return Err(invalid(format!(
                "alpha = {alpha}, alpha' = {alpha_prime} selects the {kind} regime, not {family:?}"
            )));
        }
        // Covariance runs may include t = 0; they validate their own times.
        if family != Family::Chaos {
            spec.validate()?;
        }
        Ok(spec)
    }

    /// Pairs for covariance runs, `(1/3, 2/3)` when none were given.
    pub fn pairs_or_default(&self) -> Vec<(f64, f64)> {
        if self.pairs.is_empty() {
            vec![(1.0 / 3.0, 2.0 / 3.0)]
        } else {
            self.pairs.clone()
        }
    }
}
