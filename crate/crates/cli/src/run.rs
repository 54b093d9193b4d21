use std::fmt::Write as _;
use std::path::Path;

use hypctrl::pressure::{
    invariance_entropy_lower_bound, monodromy_spectrum, pressure_separated, ulam_escape_rate,
    volume_decay_escape_rate, PressureEstimate, SurvivalDomain, UnstableSource,
};
use hypctrl::ratelimited::{design_controller, rate_sweep, simulate_run, RateSweep};
use hypctrl::setops::{controlled_invariant, maximal_invariant, FiberEvolution, GridSet};
use hypctrl::shadowing::{find_periodic_orbit, refine_to_orbit, Boundary, PseudoOrbit, ShadowOptions};
use hypctrl::stats::{stream_rng, substream_seed};
use hypctrl::system::{ControlSequence, ControlSystem, Henon, LinearSystem, OrbitSegment, State};
use nalgebra::DVector;
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::config::{Candidates, Command, ConfigError, Domain, Resolved, RunConfig, SystemName};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Domain(#[from] hypctrl::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 3,
            _ => 2,
        }
    }
}

enum Sys {
    Henon(Henon),
    Linear(LinearSystem),
}

impl Sys {
    fn build(r: &Resolved) -> Result<Self, RunError> {
        let c = &r.cfg;
        let eps = c.eps.unwrap();
        Ok(match r.system {
            SystemName::Henon => Sys::Henon(Henon::planar(eps).with_params(c.a.unwrap(), c.b.unwrap())?),
            SystemName::HenonScalar => Sys::Henon(Henon::scalar(eps).with_params(c.a.unwrap(), c.b.unwrap())?),
            SystemName::LinearToy => Sys::Linear(LinearSystem::linear_toy(eps)),
        })
    }

    fn dyn_sys(&self) -> &dyn ControlSystem {
        match self {
            Sys::Henon(h) => h,
            Sys::Linear(l) => l,
        }
    }

    fn default_region(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Sys::Henon(h) => h.square(),
            Sys::Linear(_) => (vec![-1.0, -1.0], vec![1.0, 1.0]),
        }
    }
}

/// Files produced by a command, written only once everything succeeded.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
    result: Map<String, Value>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new(), result: Map::new() }
    }

    fn file(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn set(&mut self, key: &str, v: impl serde::Serialize) {
        self.result.insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }

    fn raster(&mut self, stem: &str, grid: &GridSet) -> Result<(), RunError> {
        self.file(format!("{stem}.pgm"), grid.to_pgm()?);
        self.file(format!("{stem}.svg"), grid.to_svg(800.0)?);
        Ok(())
    }
}

fn check_writable(dir: &Path) -> Result<(), ConfigError> {
    let fail = |e: std::io::Error| ConfigError(format!("`out_dir`: {} is not writable: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".hypctrl-write-test");
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}

/// Runs the configured command, writes its artifacts and returns the JSON
/// summary.
pub fn run(config: &RunConfig) -> Result<Value, RunError> {
    let mut resolved = config.resolve()?;
    let out_dir = resolved.cfg.out_dir.clone().unwrap();
    check_writable(&out_dir)?;
    let sys = Sys::build(&resolved)?;
    let mut out = Outputs::new();
    match resolved.command {
        Command::InvariantSet => invariant_set(&resolved, &sys, &mut out)?,
        Command::PressureUlam => {
            let est = ulam(&resolved, &sys)?;
            report_estimate(&mut out, "pressure", &est)?;
        }
        Command::PressureSeparated => {
            let est = separated(&resolved, &sys)?;
            report_estimate(&mut out, "pressure", &est)?;
        }
        Command::EscapeRateMc => {
            let est = volume_decay(&resolved, &sys)?;
            report_estimate(&mut out, "pressure", &est)?;
        }
        Command::Shadow => shadow(&resolved, &sys, &mut out)?,
        Command::PeriodicOrbit => {
            let orbit = periodic_orbit(&resolved, &sys)?;
            let mono = monodromy_spectrum(sys.dyn_sys(), &orbit)?;
            out.file("orbit.csv", orbit_csv(&orbit));
            out.set("R0", mono.r0);
            out.set("orbit", &orbit.states);
            out.set("spectrum", &mono);
        }
        Command::RateR0 => {
            let orbit = periodic_orbit(&resolved, &sys)?;
            let mono = monodromy_spectrum(sys.dyn_sys(), &orbit)?;
            out.set("R0", mono.r0);
            out.set("period", mono.period);
            out.set("eigenvalues", &mono.eigenvalues);
        }
        Command::RateSweep => {
            let sweep = sweep(&mut resolved, &sys, &mut out)?;
            out.file("sweep.csv", sweep.to_csv());
            out.set("R0", sweep.r0);
            out.set("sweep", &sweep);
        }
        Command::HenonDemo => henon_demo(&mut resolved, &sys, &mut out)?,
    }

    let mut summary = Map::new();
    summary.insert("command".into(), serde_json::to_value(resolved.command).unwrap());
    summary.insert("config".into(), serde_json::to_value(&resolved.cfg).unwrap());
    summary.extend(out.result);
    let summary = Value::Object(summary);
    let mut text = serde_json::to_string_pretty(&summary).unwrap();
    text.push('\n');
    out.files.push(("summary.json".into(), text.into_bytes()));
    out.files.push(("config.toml".into(), resolved.cfg.to_toml().into_bytes()));
    for (name, bytes) in &out.files {
        std::fs::write(out_dir.join(name), bytes)?;
    }
    Ok(summary)
}

fn region(r: &Resolved, sys: &Sys) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = match &r.cfg.region {
        Some(v) => (vec![v[0], v[2]], vec![v[1], v[3]]),
        None => sys.default_region(),
    };
    let s = r.cfg.region_scale.unwrap();
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| {
            let (c, w) = (0.5 * (l + h), 0.5 * (h - l) * s);
            (c - w, c + w)
        })
        .unzip()
}

fn nominal(sys: &Sys) -> ControlSequence {
    ControlSequence::constant(sys.dyn_sys().nominal_control())
}

fn tau_list(r: &Resolved) -> Vec<usize> {
    (r.cfg.tau_min.unwrap()..=r.cfg.tau_max.unwrap()).collect()
}

fn report_estimate(out: &mut Outputs, key: &str, est: &PressureEstimate) -> Result<(), RunError> {
    out.set(key, est);
    out.set("h_inv_lower_bound", invariance_entropy_lower_bound(est)?);
    if !est.series.is_empty() {
        out.file("series.csv", est.series_csv());
    }
    Ok(())
}

fn invariant_set(r: &Resolved, sys: &Sys, out: &mut Outputs) -> Result<(), RunError> {
    let (lo, hi) = region(r, sys);
    let (res, horizon) = (r.cfg.resolution.unwrap(), r.cfg.horizon.unwrap());
    let s = sys.dyn_sys();
    let ctrl = controlled_invariant(s, &lo, &hi, res, horizon)?;
    let free = maximal_invariant(s, &s.nominal_control(), &lo, &hi, res, horizon)?;
    out.raster("controlled", &ctrl)?;
    out.raster("maximal", &free)?;
    out.set("controlled", ctrl.metadata());
    out.set("maximal", free.metadata());
    out.set("maximal_within_controlled", free.is_subset_of(&ctrl)?);
    Ok(())
}

fn ulam(r: &Resolved, sys: &Sys) -> Result<PressureEstimate, RunError> {
    let (lo, hi) = region(r, sys);
    let s = sys.dyn_sys();
    Ok(ulam_escape_rate(s, &s.nominal_control(), &lo, &hi, r.cfg.resolution.unwrap(), r.cfg.samples_per_cell.unwrap())?)
}

fn separated(r: &Resolved, sys: &Sys) -> Result<PressureEstimate, RunError> {
    let s = sys.dyn_sys();
    let candidates: Vec<State> = match (r.cfg.candidates.unwrap(), sys) {
        (Candidates::Periodic, Sys::Henon(h)) => h.periodic_points(r.cfg.candidate_period.unwrap())?,
        (Candidates::Periodic, _) => periodic_orbit(r, sys)?.states,
        (Candidates::InvariantSet, _) => {
            let (lo, hi) = region(r, sys);
            let set = maximal_invariant(s, &s.nominal_control(), &lo, &hi, r.cfg.resolution.unwrap(), r.cfg.horizon.unwrap())?;
            set.cells().iter().map(|&c| State::from_vec(set.center(c))).collect()
        }
    };
    let source = UnstableSource::Pulled { unstable_dim: 1, backward_steps: r.cfg.backward_steps.unwrap() };
    Ok(pressure_separated(s, &nominal(sys), &candidates, source, &tau_list(r), r.cfg.separation.unwrap())?)
}

fn volume_decay(r: &Resolved, sys: &Sys) -> Result<PressureEstimate, RunError> {
    let s = sys.dyn_sys();
    let (lo, hi) = region(r, sys);
    let (samples, seed) = (r.cfg.samples.unwrap(), r.cfg.seed.unwrap());
    let u = nominal(sys);
    let est = match r.cfg.domain.unwrap() {
        Domain::Region => {
            volume_decay_escape_rate(s, &u, &SurvivalDomain::Region { lo, hi }, &tau_list(r), samples, seed)?
        }
        Domain::Fiber => {
            let fiber = maximal_invariant(s, &s.nominal_control(), &lo, &hi, r.cfg.resolution.unwrap(), r.cfg.horizon.unwrap())?;
            let dom = SurvivalDomain::Fiber { fiber: &fiber, eps: r.cfg.eps.unwrap(), evolution: FiberEvolution::Fixed };
            volume_decay_escape_rate(s, &u, &dom, &tau_list(r), samples, seed)?
        }
    };
    Ok(est)
}

fn periodic_orbit(r: &Resolved, sys: &Sys) -> Result<OrbitSegment, RunError> {
    let s = sys.dyn_sys();
    match (sys, &r.cfg.seed_point) {
        (Sys::Henon(h), None) => {
            let word: Vec<bool> = r.cfg.itinerary.as_ref().unwrap().chars().map(|c| c == '1').collect();
            Ok(h.coded_orbit(&word)?)
        }
        (_, seed) => {
            let x0 = State::from_vec(seed.clone().unwrap_or_else(|| vec![0.0; s.state_dim()]));
            let u = ControlSequence::periodic(vec![s.nominal_control(); r.cfg.period.unwrap()])?;
            Ok(find_periodic_orbit(s, &u, &x0)?)
        }
    }
}

fn orbit_csv(orbit: &OrbitSegment) -> String {
    let mut s = String::from("t,x0,x1\n");
    for (i, x) in orbit.states.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in x.iter() {
            let _ = write!(s, ",{v:.17e}");
        }
        s.push('\n');
    }
    s
}

fn shadow(r: &Resolved, sys: &Sys, out: &mut Outputs) -> Result<(), RunError> {
    let s = sys.dyn_sys();
    let orbit = periodic_orbit(r, sys)?;
    let cycles = r.cfg.cycles.unwrap();
    let alpha = r.cfg.alpha.unwrap();
    let mut rng = stream_rng(substream_seed(r.cfg.seed.unwrap(), "shadow"), 0);
    let d = s.state_dim();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for _ in 0..cycles {
        for (i, x) in orbit.states.iter().enumerate() {
            // a perturbation of norm at most alpha / 2 keeps every jump below alpha
            let noise = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0)) * (0.5 * alpha / (d as f64).sqrt());
            states.push(x + noise);
            controls.push(orbit.control(i)?.clone());
        }
    }
    let pseudo = PseudoOrbit::periodic(s, states, ControlSequence::periodic(controls)?)?;
    let res = refine_to_orbit(s, &pseudo, Boundary::Periodic, &ShadowOptions::default())?;
    out.file("shadow.csv", res.to_csv(s)?);
    out.set("alpha", pseudo.alpha);
    out.set("beta", res.beta);
    out.set("residual", res.residual);
    out.set("iterations", res.iterations);
    out.set("distance_to_orbit", {
        let tau = orbit.len();
        res.orbit.states.iter().enumerate().map(|(i, x)| (x - &orbit.states[i % tau]).norm()).fold(0.0, f64::max)
    });
    Ok(())
}

fn sweep(r: &mut Resolved, sys: &Sys, out: &mut Outputs) -> Result<RateSweep, RunError> {
    let s = sys.dyn_sys();
    let orbit = periodic_orbit(r, sys)?;
    let rates = match &r.cfg.rates {
        Some(v) => v.clone(),
        None => {
            let c = (monodromy_spectrum(s, &orbit)?.r0 * 10.0).round() / 10.0;
            let v: Vec<f64> = [-0.4, -0.2, 0.2, 0.4].iter().map(|o| ((c + o) * 10.0).round() / 10.0).filter(|v| *v > 0.0).collect();
            r.cfg.rates = Some(v.clone());
            v
        }
    };
    let c = &r.cfg;
    let (eps, delta, steps) = (c.eps.unwrap(), c.delta.unwrap(), c.steps.unwrap());
    let sweep = rate_sweep(s, &orbit, &rates, c.trials.unwrap(), eps, delta, steps, c.seed.unwrap())?;
    if c.symbol_log.unwrap() {
        let mut x0 = orbit.states[0].clone();
        x0[0] += 0.5 * delta;
        for &rate in &rates {
            let cc = design_controller(s, &orbit, rate, eps)?;
            let run = simulate_run(s, &cc, cc.channel(), &x0, delta, steps, eps)?;
            if let Some(bytes) = run.channel.log_bytes() {
                out.file(format!("symbols_rate_{rate}.bin"), bytes);
            }
        }
    }
    Ok(sweep)
}

fn henon_demo(r: &mut Resolved, sys: &Sys, out: &mut Outputs) -> Result<(), RunError> {
    let ulam = ulam(r, sys)?;
    // separated sets saturate beyond τ ≈ 10 at the default separation
    let mut short = r.clone();
    short.cfg.tau_min = Some(2);
    short.cfg.tau_max = Some(10);
    let separated = separated(&short, sys)?;
    out.set("separated_tau_range", [2, 10]);
    let decay = volume_decay(r, sys)?;
    out.set("h_inv_lower_bound", invariance_entropy_lower_bound(&ulam)?);
    out.set("pressure", json!({ "ulam": ulam, "separated": separated, "volume_decay": decay }));
    out.file("separated_series.csv", separated.series_csv());
    out.file("volume_decay_series.csv", decay.series_csv());
    invariant_set(r, sys, out)?;
    let orbit = periodic_orbit(r, sys)?;
    out.set("R0", monodromy_spectrum(sys.dyn_sys(), &orbit)?);
    let sweep = sweep(r, sys, out)?;
    out.file("sweep.csv", sweep.to_csv());
    out.set("sweep", &sweep);
    Ok(())
}
