//! One function per subcommand: resolved config in, rendered text out.

use std::fmt;

use num_complex::Complex64 as C;
use serde_json::{Map, Value};

use tdelay::classical::{self, Convention, DelayOutcome, Outcome};
use tdelay::dynamics::{self, ClockRun};
use tdelay::floquet::{self, FloquetSystem};
use tdelay::sojourn::{self, Condition, Incoming, LineSystem, Reference};
use tdelay::stationary;
use tdelay::{Direction, FuzzyProfile, Geometry, PeriodicPotential, Potential, Region, Shape};

use crate::config::{missing, ConfigError, RunConfig};
use crate::output::{jarr, jnum, num, render_json, Csv};

/// Bad input (exit 2) or a failed computation (exit 1).
#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Compute(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "{e}"),
            Failure::Compute(e) => write!(f, "{e}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        Failure::Config(e)
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure::Compute(e.to_string())
    }
}

type Out = Result<String, Failure>;

pub fn run(cfg: &RunConfig) -> Out {
    match cfg.command.as_str() {
        "classical" => classical_cmd(cfg),
        "smatrix" => smatrix_cmd(cfg),
        "delay" => delay_cmd(cfg),
        "sojourn-scan" => sojourn_scan_cmd(cfg),
        "fuzzy-sweep" => fuzzy_sweep_cmd(cfg),
        "packet-sojourn" => packet_sojourn_cmd(cfg),
        "clocks" => clocks_cmd(cfg),
        "linear-response" => linear_response_cmd(cfg),
        "floquet" => floquet_cmd(cfg),
        "floquet-delay" => floquet_delay_cmd(cfg),
        "resonance" => resonance_cmd(cfg),
        "general-delay" => general_delay_cmd(cfg),
        other => Err(Failure::Config(ConfigError(format!("unknown command `{other}`")))),
    }
}

// ---------------------------------------------------------------------
// Inputs

/// Model constructors reject bad parameters; those are input errors.
fn model<T>(cfg: &RunConfig, key: &str, r: Result<T, tdelay::ModelError>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Config(cfg.invalid(key, &e.to_string())))
}

fn potential(cfg: &RunConfig) -> Result<Potential, Failure> {
    let kind = cfg.str("potential.kind").ok_or_else(|| missing("potential.kind"))?;
    let l = cfg.usize_or("potential.l", 0)? as u32;
    let h = || cfg.need_f64("potential.height");
    let built = match kind {
        "free" => Ok(Potential::free()),
        "square" => Potential::square(h()?, cfg.need_f64("potential.a")?, cfg.need_f64("potential.b")?),
        "double-barrier" => Potential::double_barrier(h()?, cfg.need_f64("potential.width")?, cfg.need_f64("potential.gap")?),
        "gaussian" => Potential::gaussian(h()?, cfg.f64_or("potential.center", 0.0)?, cfg.need_f64("potential.width")?),
        "hard-core" => return model(cfg, "potential.radius", Potential::hard_core(cfg.need_f64("potential.radius")?, l)),
        "table" => {
            let path = cfg.str("potential.file").ok_or_else(|| missing("potential.file"))?;
            let text = std::fs::read_to_string(path).map_err(|e| cfg.invalid("potential.file", &e.to_string()))?;
            let (xs, vs) = model(cfg, "potential.file", Potential::parse_table(&text))?;
            Potential::tabulated(xs, vs)
        }
        _ => return Err(cfg.invalid("potential.kind", "expected one of free, square, double-barrier, gaussian, hard-core, table").into()),
    };
    let p = model(cfg, "potential.kind", built)?;
    let radial = cfg.choice("potential.geometry", |s| matches!(s, "line" | "radial").then(|| s == "radial"), "line, radial")?;
    Ok(if radial.unwrap_or(false) { p.radial(l) } else { p })
}

fn line_potential(cfg: &RunConfig) -> Result<Potential, Failure> {
    let p = potential(cfg)?;
    if p.geometry != Geometry::Line {
        return Err(cfg.invalid("potential.geometry", &format!("`{}` needs a line potential", cfg.command)).into());
    }
    Ok(p)
}

fn periodic(cfg: &RunConfig) -> Result<PeriodicPotential, Failure> {
    let mut base = potential(cfg)?;
    if base.geometry == Geometry::Line {
        base = base.radial(cfg.usize_or("potential.l", 0)? as u32);
    }
    let omega = cfg.need_f64("drive.omega")?;
    let amp = cfg.f64_or("drive.amplitude", 0.0)?;
    if amp == 0.0 {
        return model(cfg, "drive.omega", PeriodicPotential::static_only(base, omega));
    }
    let n = cfg.usize_or("drive.harmonic", 1)?;
    if n == 0 {
        return Err(cfg.invalid("drive.harmonic", "must be positive").into());
    }
    let prof = model(cfg, "drive.b", Potential::square(1.0, cfg.f64_or("drive.a", 0.0)?, cfg.need_f64("drive.b")?))?;
    let a = C::from_polar(amp, cfg.f64_or("drive.phase", 0.0)?);
    model(cfg, "drive.omega", PeriodicPotential::new(base, omega, vec![(n as i32, a, prof)]))
}

fn n_max(cfg: &RunConfig, pp: &PeriodicPotential) -> Result<usize, Failure> {
    Ok(cfg.usize_or("floquet.n_max", pp.default_truncation())?)
}

fn direction(cfg: &RunConfig) -> Result<Direction, Failure> {
    let d = cfg.choice(
        "direction",
        |s| match s {
            "left" => Some(Direction::FromLeft),
            "right" => Some(Direction::FromRight),
            _ => None,
        },
        "left, right",
    )?;
    Ok(d.unwrap_or(Direction::FromLeft))
}

fn reference(cfg: &RunConfig, default: Reference) -> Result<Reference, Failure> {
    Ok(cfg.choice("reference", Reference::parse, "in, out, symmetric, free-flight")?.unwrap_or(default))
}

fn condition(cfg: &RunConfig) -> Result<Condition, Failure> {
    Ok(cfg.choice("condition", Condition::parse, "none, transmit, reflect-left, reflect-right, sideband:n")?.unwrap_or(Condition::None))
}

fn shape(cfg: &RunConfig) -> Result<Shape, Failure> {
    let s = cfg.choice("region.shape", |s| Shape::parse(s).filter(|sh| *sh != Shape::Degenerate), "cos2, halfcos")?;
    Ok(s.unwrap_or(Shape::CosSquared))
}

fn fuzzy(cfg: &RunConfig, r: f64, rho: f64, sh: Shape) -> Result<Region, Failure> {
    let c = cfg.f64_or("region.center", 0.0)?;
    if rho > 0.0 {
        Ok(Region::fuzzy(model(cfg, "region.rho", FuzzyProfile::new(r, rho, sh))?).centered(c))
    } else {
        Ok(Region::sharp(r).centered(c))
    }
}

fn region(cfg: &RunConfig) -> Result<Region, Failure> {
    fuzzy(cfg, cfg.need_f64("region.r")?, cfg.f64_or("region.rho", 0.0)?, shape(cfg)?)
}

/// `energy` alone, or `n` points spanning [emin, emax].
fn energies(cfg: &RunConfig) -> Result<Vec<f64>, Failure> {
    if let (Some(lo), Some(hi)) = (cfg.f64("emin")?, cfg.f64("emax")?) {
        let n = cfg.usize_or("n", 50)?;
        if n < 2 || !(hi > lo) || !(lo > 0.0) {
            return Err(cfg.invalid("n", "a sweep needs n >= 2 and emax > emin > 0").into());
        }
        return Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect());
    }
    Ok(vec![energy(cfg)?])
}

fn energy(cfg: &RunConfig) -> Result<f64, Failure> {
    let e = cfg.need_f64("energy")?;
    if !(e > 0.0) {
        return Err(cfg.invalid("energy", "must be positive").into());
    }
    Ok(e)
}

fn is_sweep(cfg: &RunConfig) -> bool {
    cfg.has("emin") && cfg.has("emax")
}

fn radii(cfg: &RunConfig, lo: f64, hi: f64, steps: usize) -> Result<Vec<f64>, Failure> {
    let lo = cfg.f64_or("scan.rmin", lo)?;
    let hi = cfg.f64_or("scan.rmax", hi)?;
    let n = cfg.usize_or("scan.steps", steps)?;
    if n < 1 || !(lo > 0.0) || hi < lo || (n > 1 && hi == lo) {
        return Err(cfg.invalid("scan.steps", "need 0 < scan.rmin < scan.rmax and scan.steps >= 1").into());
    }
    Ok(if n == 1 { vec![hi] } else { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() })
}

fn couplings(cfg: &RunConfig, key: &str, default: &[f64]) -> Result<Vec<f64>, Failure> {
    Ok(cfg.list(key)?.unwrap_or_else(|| default.to_vec()))
}

/// Order-preserving map over scoped threads.
fn par_map<T: Sync, R: Send>(xs: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let n = std::thread::available_parallelism().map_or(1, |n| n.get()).min(xs.len());
    if n <= 1 {
        return xs.iter().map(f).collect();
    }
    let f = &f;
    std::thread::scope(|sc| {
        let hs: Vec<_> = xs.chunks(xs.len().div_ceil(n)).map(|c| sc.spawn(move || c.iter().map(f).collect::<Vec<R>>())).collect();
        hs.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

fn obj(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn cjson(z: C) -> Value {
    jarr(&[z.re, z.im])
}

// ---------------------------------------------------------------------
// Commands

fn classical_cmd(cfg: &RunConfig) -> Out {
    let p = line_potential(cfg)?;
    let sr = p.support_radius();
    let rs = radii(cfg, (2.0 * sr).max(10.0), (20.0 * sr).max(100.0), 6)?;
    let r_top = rs[rs.len() - 1];
    let dir = direction(cfg)?;
    let q0 = match dir {
        Direction::FromLeft => -(r_top + sr + 10.0),
        Direction::FromRight => r_top + sr + 10.0,
    };
    let mut names = vec!["E", "tau_closed_form"];
    names.extend(Convention::ALL.iter().map(|c| c.name()));
    names.extend(["ff_slope", "outcome"]);
    let mut csv = Csv::new(&names);
    let rows = par_map(&energies(cfg)?, |&e| -> Result<Vec<String>, Failure> {
        let v = tdelay::velocity(e);
        let t1 = 4.0 * q0.abs() / v + 200.0;
        let tr = classical::integrate_trajectory(&p, e, q0, (0.0, t1), 1e-3)?;
        let mut row = vec![num(e)];
        match classical::classical_time_delay(&tr, &rs)? {
            DelayOutcome::Finite(rep) => {
                row.push(num(rep.tau_closed_form));
                row.extend(Convention::ALL.iter().map(|&c| num(rep.limit(c))));
                row.push(num(rep.ff_slope));
                row.push(if rep.outcome == Outcome::Transmitted { "transmitted".into() } else { "reflected".into() });
            }
            DelayOutcome::Infinite => {
                row.extend((0..Convention::ALL.len() + 2).map(|_| num(f64::INFINITY)));
                row.push("captured".into());
            }
        }
        Ok(row)
    });
    for row in rows {
        csv.row(row?);
    }
    Ok(csv.render(cfg))
}

fn smatrix_cmd(cfg: &RunConfig) -> Out {
    let p = potential(cfg)?;
    let es = energies(cfg)?;
    let radial = p.geometry != Geometry::Line;
    if !is_sweep(cfg) {
        let e = es[0];
        let body = if radial {
            let s = stationary::radial_s(&p, e)?;
            obj(vec![("energy", jnum(e)), ("delta", jnum(stationary::phase_shift(&p, e)?)), ("s", cjson(s))])
        } else {
            let s = stationary::s_matrix(&p, e)?;
            let a = s.as_array();
            let rows = a.iter().map(|r| Value::Array(r.iter().map(|&z| cjson(z)).collect())).collect();
            obj(vec![
                ("energy", jnum(e)),
                ("s", Value::Array(rows)),
                ("transmission", jnum(s.transmission())),
                ("reflection", jnum(s.reflection())),
                ("unitarity_defect", jnum(s.unitarity_defect())),
            ])
        };
        return Ok(render_json(cfg, body));
    }
    if radial {
        let mut csv = Csv::new(&["E", "delta", "S_re", "S_im"]);
        let tab = stationary::phase_shift_table(&p, &es)?;
        for (i, &e) in es.iter().enumerate() {
            let s = stationary::radial_s(&p, e)?;
            csv.nums(&[e, tab.deltas[i], s.re, s.im]);
        }
        return Ok(csv.render(cfg));
    }
    let mut csv = Csv::new(&["E", "T_re", "T_im", "L_re", "L_im", "R_re", "R_im", "absT2", "unitarity_defect"]);
    let (ss, _) = stationary::s_matrix_sweep(&p, &es)?;
    for (s, &e) in ss.iter().zip(&es) {
        csv.nums(&[e, s.t.re, s.t.im, s.l.re, s.l.im, s.r.re, s.r.im, s.transmission(), s.unitarity_defect()]);
    }
    Ok(csv.render(cfg))
}

fn delay_cmd(cfg: &RunConfig) -> Out {
    let p = potential(cfg)?;
    let es = energies(cfg)?;
    if p.geometry != Geometry::Line {
        let mut csv = Csv::new(&["E", "tau_ew", "error"]);
        for e in es {
            let d = sojourn::radial_delay(&p, e, None)?;
            csv.nums(&[e, d.value, d.error]);
        }
        return Ok(csv.render(cfg));
    }
    let dir = direction(cfg)?;
    let mut csv = Csv::new(&["E", "tau_ew", "tau_tr", "tau_refl", "absT2"]);
    let val = |x: Option<stationary::PhaseDerivative>| x.map_or(f64::NAN, |d| d.value);
    let rows = par_map(&es, |&e| sojourn::shell_delays(&p, e, dir, None).map(|d| [e, d.eisenbud_wigner(), val(d.tau_t), val(d.tau_refl), d.s.transmission()]));
    for row in rows {
        csv.nums(&row?);
    }
    Ok(csv.render(cfg))
}

fn sojourn_scan_cmd(cfg: &RunConfig) -> Out {
    let p = potential(cfg)?;
    let e = energy(cfg)?;
    let sr = p.support_radius();
    let rs = radii(cfg, sr.max(1.0) + 5.0, 20.0 * (sr.max(1.0) + 5.0), 20)?;
    let sh = shape(cfg)?;
    let rho = cfg.f64_or("fuzzy.rho", 0.0)?;
    let regions = rs.iter().map(|&r| fuzzy(cfg, r, rho, sh)).collect::<Result<Vec<_>, _>>()?;
    let inc = Incoming::fixed(e, direction(cfg)?);
    let res = sojourn::local_time_delay_with(&p, &inc, &regions, reference(cfg, Reference::Symmetric)?, cfg.usize_or("ff.points", 6)?)?;
    let mut csv = Csv::new(&["r", "T_int", "T_ref", "tau_local"]);
    csv.note("limit", num(res.value));
    csv.note("residual", num(res.residual));
    for row in &res.table {
        csv.nums(&[row.r, row.interaction, row.reference, row.delay]);
    }
    Ok(csv.render(cfg))
}

fn fuzzy_sweep_cmd(cfg: &RunConfig) -> Out {
    let p = potential(cfg)?;
    let e = energy(cfg)?;
    let r = cfg.need_f64("region.r")?;
    let sh = shape(cfg)?;
    let lo = cfg.f64_or("sweep.rho_min", 0.05 * r)?;
    let hi = cfg.f64_or("sweep.rho_max", 0.9 * r)?;
    let n = cfg.usize_or("sweep.steps", 8)?;
    if n < 2 || !(lo > 0.0 && hi > lo) {
        return Err(cfg.invalid("sweep.steps", "need 0 < sweep.rho_min < sweep.rho_max and sweep.steps >= 2").into());
    }
    let inc = Incoming::fixed(e, direction(cfg)?);
    let ew = if p.geometry == Geometry::Line { sojourn::eisenbud_wigner_delay(&p, &inc)?.value } else { sojourn::radial_delay(&p, e, None)?.value };
    let refk = reference(cfg, Reference::Symmetric)?;
    let mut csv = Csv::new(&["rho", "tau_local", "tau_ew", "difference", "oscillation_bound"]);
    csv.note("tau_ew", num(ew));
    for i in 0..n {
        let rho = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
        let reg = fuzzy(cfg, r, rho, sh)?;
        let d = sojourn::local_time_delay(&p, &inc, &[reg], refk)?.value;
        let bound = model(cfg, "region.r", FuzzyProfile::new(r, rho, sh))?.oscillation_bound(e);
        csv.nums(&[rho, d, ew, d - ew, bound]);
    }
    Ok(csv.render(cfg))
}

fn packet(cfg: &RunConfig, p: &Potential, reg: &Region) -> Result<(dynamics::WavePacket, dynamics::PropagationConfig), Failure> {
    let k0 = cfg.need_f64("packet.k0")?;
    let sk = cfg.f64_or("packet.sigma_k", 0.05 * k0)?;
    let r_max = reg.breakpoints().iter().fold(reg.outer_radius(), |m, x| m.max(x.abs()));
    Ok(dynamics::launch_with_dx(p, k0, sk, r_max, direction(cfg)?, cfg.f64("packet.dx")?)?)
}

fn packet_sojourn_cmd(cfg: &RunConfig) -> Out {
    let p = line_potential(cfg)?;
    let reg = region(cfg)?;
    let (wp, pc) = packet(cfg, &p, &reg)?;
    let series = dynamics::record_region_probabilities(&p, &wp, &[reg], &pc)?;
    let d = dynamics::direct_sojourn(&series, 0, None)?;
    let inc = wp.incoming()?;
    let onshell = sojourn::local_time_delay(&p, &inc, &[reg], Reference::Symmetric)?;
    let body = obj(vec![
        ("direct_sojourn", jnum(d.value)),
        ("tail", jnum(d.tail)),
        ("start_probability", jnum(d.start_probability)),
        ("end_probability", jnum(d.end_probability)),
        ("absorbed", jnum(series.absorbed)),
        ("final_norm", jnum(series.final_norm)),
        ("complete", Value::Bool(series.complete)),
        ("onshell_interaction_sojourn", jnum(onshell.table[0].interaction)),
    ]);
    Ok(render_json(cfg, body))
}

fn clocks_cmd(cfg: &RunConfig) -> Out {
    let p = line_potential(cfg)?;
    let reg = region(cfg)?;
    let (wp, pc) = packet(cfg, &p, &reg)?;
    let cs = couplings(cfg, "clock.couplings", &[2e-3, 4e-3, 6e-3])?;
    if cs.len() < 3 || cs.iter().any(|&c| !(c > 0.0)) {
        return Err(cfg.invalid("clock.couplings", "need at least three positive couplings").into());
    }
    let runs: Vec<ClockRun> = vec![
        dynamics::larmor_clock(&p, &wp, &reg, &cs, &pc)?,
        dynamics::dissipative_clock(&p, &wp, &reg, &cs, &pc)?,
        dynamics::energy_clock(&p, &wp, &reg, &cs, &pc)?,
    ];
    let series = dynamics::record_region_probabilities(&p, &wp, &[reg], &pc)?;
    let direct = dynamics::direct_sojourn(&series, 0, None)?;
    let mut csv = Csv::new(&["clock", "coupling", "reading", "flagged"]);
    csv.note("direct_sojourn", num(direct.value));
    for run in &runs {
        for (c, r) in run.couplings.iter().zip(&run.readings) {
            csv.row(vec![run.kind.name().into(), num(*c), num(*r), run.flagged.to_string()]);
        }
        csv.row(vec![run.kind.name().into(), num(0.0), num(run.extrapolated), run.flagged.to_string()]);
    }
    Ok(csv.render(cfg))
}

fn linear_response_cmd(cfg: &RunConfig) -> Out {
    let p = line_potential(cfg)?;
    let e = energy(cfg)?;
    let reg = region(cfg)?;
    let dir = direction(cfg)?;
    let cs = couplings(cfg, "response.couplings", &[1e-3, 2e-3, 4e-3])?;
    let lr = dynamics::linear_response_check(&p, &Incoming::fixed(e, dir), &reg, &cs)?;
    let st = stationary::line_state(&p, e, dir)?;
    let soj = sojourn::onshell_interaction_sojourn(&st, &reg)?.value;
    let body = obj(vec![
        ("linear_response", jnum(lr.value)),
        ("onshell_sojourn", jnum(soj)),
        ("difference", jnum(lr.value - soj)),
        ("couplings", jarr(&lr.couplings)),
        ("estimates", jarr(&lr.estimates)),
    ]);
    Ok(render_json(cfg, body))
}

fn floquet_cmd(cfg: &RunConfig) -> Out {
    let pp = periodic(cfg)?;
    let nm = n_max(cfg, &pp)?;
    let (m, eps) = floquet::quasi_energy(energy(cfg)?, pp.omega);
    let grid = floquet::default_grid(&pp, eps, nm);
    let sol = floquet::solve_floquet(&pp, eps, nm, &grid)?;
    let s = floquet::floquet_s_matrix(&sol)?;
    let rows = (0..s.matrix.nrows()).map(|i| Value::Array((0..s.matrix.ncols()).map(|j| cjson(s.matrix[(i, j)])).collect())).collect();
    let column: Vec<f64> = (0..s.matrix.nrows()).map(|i| s.matrix[(i, m.min(nm))].norm_sqr()).collect();
    let body = obj(vec![
        ("epsilon", jnum(eps)),
        ("omega", jnum(pp.omega)),
        ("incoming_sideband", Value::from(m)),
        ("n_max", Value::from(nm)),
        ("l", Value::from(s.l)),
        ("s", Value::Array(rows)),
        ("incoming_probabilities", jarr(&column)),
        ("unitarity_defect", jnum(s.defect)),
        ("edge_leak", jnum(s.edge_leak)),
        ("closed_edge_ratio", jnum(sol.closed_edge_ratio())),
    ]);
    Ok(render_json(cfg, body))
}

fn floquet_delay_cmd(cfg: &RunConfig) -> Out {
    let pp = periodic(cfg)?;
    let nm = n_max(cfg, &pp)?;
    let e = energy(cfg)?;
    let (m, eps) = floquet::quasi_energy(e, pp.omega);
    if m > nm {
        return Err(cfg.invalid("floquet.n_max", "incoming sideband exceeds the truncation").into());
    }
    let inc = Incoming::fixed(e, Direction::FromLeft);
    let rs = radii(cfg, 200.0, 400.0, 3)?;
    let regions = sojourn::fuzzy_schedule(&rs, cfg.f64_or("scan.ratio", 0.5)?, shape(cfg)?, 0.0)?;
    let refk = reference(cfg, Reference::Symmetric)?;
    let ff = cfg.usize_or("ff.points", 6)?;
    let dm = floquet::floquet_delay_matrix(&pp, eps, nm)?;
    let parts: Vec<Value> = dm
        .decomposition(m)
        .into_iter()
        .map(|(sg, pr, tau)| Value::Object(obj(vec![("sideband", Value::from(sg)), ("probability", jnum(pr)), ("tau", jnum(tau))])))
        .collect();
    let local = floquet::floquet_time_delay(&pp, &inc, nm, &regions, refk, ff)?;
    let body = obj(vec![
        ("energy", jnum(e)),
        ("epsilon", jnum(eps)),
        ("incoming_sideband", Value::from(m)),
        ("n_max", Value::from(nm)),
        ("tau_ew", jnum(dm.diagonal(m))),
        ("derivative_error", jnum(dm.error)),
        ("decomposition", Value::Array(parts)),
        ("local_delay", jnum(local.value)),
        ("local_residual", jnum(local.residual)),
        ("reference", Value::String(refk.name().into())),
    ]);
    Ok(render_json(cfg, body))
}

fn resonance_cmd(cfg: &RunConfig) -> Out {
    let p = potential(cfg)?;
    let lo = cfg.need_f64("emin")?;
    let hi = cfg.need_f64("emax")?;
    let fit = sojourn::resonance_analysis(&p, (lo, hi), cfg.usize_or("n", 400)?)?;
    let body = obj(vec![
        ("e_r", jnum(fit.e_r)),
        ("delta_e", jnum(fit.delta_e)),
        ("amplitude", jnum(fit.amplitude)),
        ("background_phase", jnum(fit.background_phase)),
        ("tau_peak", jnum(fit.tau_peak)),
        ("ratio", jnum(fit.ratio)),
        ("quality", jnum(fit.quality)),
    ]);
    Ok(render_json(cfg, body))
}

fn general_delay_cmd(cfg: &RunConfig) -> Out {
    let e = energy(cfg)?;
    let cond = condition(cfg)?;
    let rs = radii(cfg, 100.0, 400.0, 4)?;
    let ratio = cfg.f64_or("scan.ratio", 0.5)?;
    let regions = sojourn::fuzzy_schedule(&rs, ratio, shape(cfg)?, cfg.f64_or("region.center", 0.0)?)?;
    let ff = cfg.usize_or("ff.points", 6)?;
    let res = if cfg.has("drive.omega") {
        let pp = periodic(cfg)?;
        let nm = n_max(cfg, &pp)?;
        let (m, _) = floquet::quasi_energy(e, pp.omega);
        let sys = FloquetSystem { potential: pp, n_max: nm };
        sojourn::general_conditional_fuzzy_delay(&sys, &Incoming::fixed(e, Direction::FromLeft), m, &cond, &regions, ff)?
    } else {
        let p = line_potential(cfg)?;
        let dir = direction(cfg)?;
        let sys = LineSystem { potential: p };
        sojourn::general_conditional_fuzzy_delay(&sys, &Incoming::fixed(e, dir), LineSystem::channel_of(dir), &cond, &regions, ff)?
    };
    let table: Vec<Value> = res
        .table
        .iter()
        .map(|r| Value::Object(obj(vec![("r", jnum(r.r)), ("rho", jnum(r.rho)), ("delay", jnum(r.delay))])))
        .collect();
    let body = obj(vec![
        ("energy", jnum(e)),
        ("condition", Value::String(cond.name())),
        ("value", jnum(res.value)),
        ("residual", jnum(res.residual)),
        ("probability", jnum(res.probability)),
        ("free_flight_slope", res.slope.map_or(Value::Null, jnum)),
        ("table", Value::Array(table)),
    ]);
    Ok(render_json(cfg, body))
}
