//! Acceptance run: one PASS/FAIL line per criterion.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64 as C;

use tdelay::classical::{self, Convention, DelayOutcome};
use tdelay::dynamics::{self, ProbabilitySeries, PropagationConfig, WavePacket};
use tdelay::floquet::{self, FloquetSMatrix};
use tdelay::numeric;
use tdelay::sojourn::{self, Condition, Incoming, LineSystem, Reference};
use tdelay::stationary;
use tdelay::{velocity, wavenumber, Direction, FuzzyProfile, PeriodicPotential, Potential, Region, Shape, SpatialGrid};

type Res = Result<(bool, String), String>;

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------
// Independent oracles

/// Transmission and reflection amplitudes of a square barrier on [0, a].
fn square_oracle(v0: f64, a: f64, e: f64) -> (C, C) {
    let k = (2.0 * e).sqrt();
    let kap = C::new(2.0 * (v0 - e), 0.0).sqrt();
    let ka = kap * a;
    let denom = ka.cosh() + C::i() * (kap * kap - k * k) / (2.0 * k * kap) * ka.sinh();
    let t = C::from_polar(1.0, -k * a) / denom;
    let r = t * C::from_polar(1.0, k * a) * (ka.cosh() - C::i() * k / kap * ka.sinh()) - 1.0;
    (t, r)
}

/// Classical delay by quadrature of the travel time.  Transmitted:
/// int (1/v(x) - 1/v) dx.  Reflected at x_t: 2 x_t / v + 2 int^{x_t} (1/v(x) - 1/v) dx,
/// with x = x_t - u^2 to tame the turning point.
fn classical_oracle(p: &Potential, e: f64) -> f64 {
    let (lo, hi) = p.support().unwrap();
    let v = velocity(e);
    let inv = |x: f64| 1.0 / (2.0 * (e - p.eval(x))).sqrt() - 1.0 / v;
    let n = 20000;
    let first = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).find(|&x| p.eval(x) >= e);
    match first {
        None => numeric::integrate(inv, lo, hi, &p.breakpoints(), 0.01),
        Some(x1) => {
            let (mut a, mut b) = (x1 - (hi - lo) / n as f64, x1);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if p.eval(m) >= e {
                    b = m;
                } else {
                    a = m;
                }
            }
            let xt = a;
            let breaks: Vec<f64> = p.breakpoints().iter().filter(|&&x| x > lo && x < xt).map(|&x| (xt - x).sqrt()).collect();
            let i = numeric::integrate(|u| 2.0 * u * inv(xt - u * u), 0.0, (xt - lo).sqrt(), &breaks, 0.005);
            2.0 * xt / v + 2.0 * i
        }
    }
}

// ---------------------------------------------------------------------
// Criteria

fn c1_classical() -> Res {
    let pots = [
        ("barrier", Potential::square(1.0, -1.0, 1.0).map_err(e2s)?),
        ("well", Potential::square(-1.0, -1.0, 1.0).map_err(e2s)?),
        ("double-barrier", Potential::double_barrier(1.5, 0.4, 1.0).map_err(e2s)?),
        ("gaussian bump", Potential::gaussian(0.8, 0.0, 0.7).map_err(e2s)?),
        ("gaussian well", Potential::gaussian(-0.6, 0.0, 1.0).map_err(e2s)?),
    ];
    let rs: Vec<f64> = (1..=6).map(|i| 20.0 * i as f64).collect();
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for (name, p) in &pots {
        for e in [0.5, 1.25, 2.0] {
            let t1 = 4.0 * 140.0 / velocity(e) + 200.0;
            let tr = classical::integrate_trajectory(p, e, -140.0, (0.0, t1), 1e-3).map_err(e2s)?;
            let rep = match classical::classical_time_delay(&tr, &rs).map_err(e2s)? {
                DelayOutcome::Finite(r) => r,
                DelayOutcome::Infinite => return Ok((false, format!("{name} captured at E={e}"))),
            };
            let oracle = classical_oracle(p, e);
            worst_oracle = worst_oracle.max((rep.tau_closed_form - oracle).abs());
            for c in Convention::ALL {
                worst = worst.max((rep.limit(c) - rep.tau_closed_form).abs()).max((rep.limit(c) - oracle).abs());
            }
        }
    }
    Ok((worst < 1e-4 && worst_oracle < 1e-4, format!("max |convention - tau| = {worst:.2e}, |closed form - quadrature| = {worst_oracle:.2e}")))
}

fn c2_smatrix() -> Res {
    let es: Vec<f64> = (0..200).map(|i| 0.05 + 2.95 * i as f64 / 199.0).collect();
    let mut amp = 0.0f64;
    let mut t2 = 0.0f64;
    let mut phase = 0.0f64;
    let mut defect = 0.0f64;
    for v0 in [1.0, -1.0] {
        let p = Potential::square(v0, 0.0, 1.0).map_err(e2s)?;
        let (ss, _) = stationary::s_matrix_sweep(&p, &es).map_err(e2s)?;
        for (s, &e) in ss.iter().zip(&es) {
            let (t, l) = square_oracle(v0, 1.0, e);
            amp = amp.max((s.t - t).norm()).max((s.l - l).norm());
            t2 = t2.max((s.transmission() - t.norm_sqr()).abs());
            let d = |a: f64, b: f64| ((a - b + PI).rem_euclid(2.0 * PI) - PI).abs();
            phase = phase.max(d(s.alpha_t(), t.arg())).max(d(s.alpha_l(), l.arg()));
            defect = defect.max(s.unitarity_defect());
        }
    }
    Ok((t2 < 1e-6 && phase < 1e-6 && amp < 1e-6 && defect < 1e-8, format!("|T|^2 err {t2:.1e}, phase err {phase:.1e}, defect {defect:.1e}")))
}

fn route_potentials() -> Result<Vec<(&'static str, Potential)>, String> {
    Ok(vec![
        ("barrier", Potential::square(1.0, -0.5, 0.5).map_err(e2s)?),
        ("well", Potential::square(-0.8, -0.5, 0.5).map_err(e2s)?),
        ("double-barrier", Potential::double_barrier(1.5, 0.4, 1.0).map_err(e2s)?),
        ("gaussian", Potential::gaussian(0.8, 0.0, 0.7).map_err(e2s)?),
    ])
}

fn fixed_e_fuzzy_schedule() -> Result<Vec<Region>, String> {
    sojourn::fuzzy_schedule(&[200.0, 400.0], 0.25, Shape::CosSquared, 0.0).map_err(e2s)
}

fn c3_route_identity() -> Res {
    let mut worst_packet = 0.0f64;
    let mut worst_fixed = 0.0f64;
    let sharp = sojourn::sharp_schedule(&[40.0, 60.0, 80.0], 0.0);
    let fuzzy = fixed_e_fuzzy_schedule()?;
    for (_, p) in route_potentials()? {
        let inc = Incoming::gaussian(0.9, 0.05, 201, Direction::FromLeft).map_err(e2s)?;
        let loc = sojourn::local_time_delay(&p, &inc, &sharp, Reference::In).map_err(e2s)?.value;
        let ew = sojourn::eisenbud_wigner_delay(&p, &inc).map_err(e2s)?.value;
        worst_packet = worst_packet.max((loc - ew).abs());
        let inc = Incoming::fixed(0.9, Direction::FromLeft);
        let loc = sojourn::local_time_delay(&p, &inc, &fuzzy, Reference::Symmetric).map_err(e2s)?.value;
        let ew = sojourn::eisenbud_wigner_delay(&p, &inc).map_err(e2s)?.value;
        worst_fixed = worst_fixed.max((loc - ew).abs());
    }
    Ok((worst_packet < 5e-4 && worst_fixed < 5e-4, format!("packet/sharp {worst_packet:.1e}, fixed-E/fuzzy {worst_fixed:.1e}")))
}

fn c4_interference() -> Res {
    let mut worst = 0.0f64;
    let cases = [(Potential::square(1.0, 0.0, 1.0).map_err(e2s)?, 0.5), (Potential::gaussian(0.8, 0.3, 0.7).map_err(e2s)?, 0.6)];
    for (p, e) in &cases {
        let s = stationary::s_matrix(p, *e).map_err(e2s)?;
        let d = sojourn::local_time_delay(p, &Incoming::fixed(*e, Direction::FromLeft), &sojourn::sharp_schedule(&[20.0, 50.0, 100.0], 0.0), Reference::In)
            .map_err(e2s)?;
        let osc = d.oscillation.ok_or("no oscillation fit")?;
        let want = 2.0 * s.l.norm() / (2.0 * e);
        worst = worst.max((osc.peak_to_peak - want).abs() / want);
    }
    let p = Potential::double_barrier(1.5, 0.4, 1.0).map_err(e2s)?;
    let mut sym = 0.0f64;
    for e in [0.3, 0.9, 1.7] {
        let s = stationary::s_matrix(&p, e).map_err(e2s)?;
        for r in [5.0, 17.0, 80.0] {
            let v = sojourn::free_reference_sojourn(Reference::Symmetric, &s, Direction::FromLeft, &Region::sharp(r), None).map_err(e2s)?.value;
            sym = sym.max((v - 2.0 * r / velocity(e)).abs());
        }
    }
    Ok((worst < 0.05 && sym < 1e-8, format!("peak-to-peak rel err {worst:.2e}, symmetric oscillating term {sym:.1e}")))
}

fn c5_fuzzy_convergence() -> Res {
    let p = Potential::square(1.0, 0.0, 1.0).map_err(e2s)?;
    let e = 0.5;
    let inc = Incoming::fixed(e, Direction::FromLeft);
    let ew = sojourn::eisenbud_wigner_delay(&p, &inc).map_err(e2s)?.value;
    // half-wavelength lattice keeps the phase of the leading residual fixed
    let half = PI / wavenumber(e);
    let mut xs = vec![];
    let mut ys = vec![];
    let mut last = (0.0, 0.0);
    for n in [8.0, 16.0, 32.0, 64.0, 128.0] {
        let rho = n * half;
        let prof = FuzzyProfile::new(50.0, rho, Shape::HalfCosine).map_err(e2s)?;
        let d = sojourn::local_time_delay(&p, &inc, &[Region::fuzzy(prof)], Reference::In).map_err(e2s)?.value;
        let res = (d - ew).abs();
        xs.push(rho.ln());
        ys.push(res.ln());
        last = (res, prof.oscillation_bound(e));
    }
    let slope = numeric::linear_fit(&xs, &ys).slope;
    Ok(((-1.3..=-0.7).contains(&slope) && last.0 < last.1, format!("slope {slope:.3}, final residual {:.2e} < bound {:.2e}", last.0, last.1)))
}

fn c6_clocks() -> Res {
    let couplings = [2.5e-4, 5e-4, 1e-3, 2.5e-3];
    let mut worst = 0.0f64;
    let mut mutual = 0.0f64;
    for (p, k0, r) in [(Potential::free(), 1.0, 10.0), (Potential::square(1.0, -0.5, 0.5).map_err(e2s)?, 1.0, 5.0)] {
        let (pk, cfg) = dynamics::launch(&p, k0, 0.05, r, Direction::FromLeft).map_err(e2s)?;
        let reg = Region::sharp(r);
        let s = dynamics::record_region_probabilities(&p, &pk, &[reg], &cfg).map_err(e2s)?;
        let d = dynamics::direct_sojourn(&s, 0, None).map_err(e2s)?.value;
        let vals = [
            dynamics::larmor_clock(&p, &pk, &reg, &couplings, &cfg).map_err(e2s)?.extrapolated,
            dynamics::dissipative_clock(&p, &pk, &reg, &couplings, &cfg).map_err(e2s)?.extrapolated,
            dynamics::energy_clock(&p, &pk, &reg, &couplings, &cfg).map_err(e2s)?.extrapolated,
        ];
        for v in vals {
            worst = worst.max((v - d).abs() / d);
        }
        let hi = vals.iter().cloned().fold(f64::MIN, f64::max);
        let lo = vals.iter().cloned().fold(f64::MAX, f64::min);
        mutual = mutual.max((hi - lo) / d);
    }
    Ok((worst < 0.01 && mutual < 0.01, format!("clock vs direct {worst:.1e}, mutual spread {mutual:.1e}")))
}

fn c7_linear_response() -> Res {
    let p = Potential::square(1.0, -0.5, 0.5).map_err(e2s)?;
    let reg = Region::sharp(5.0);
    let mut worst = 0.0f64;
    for e in [0.3, 0.8, 1.7] {
        let lr = dynamics::linear_response_check(&p, &Incoming::fixed(e, Direction::FromLeft), &reg, &[1e-3, 2e-3, 4e-3]).map_err(e2s)?;
        let st = stationary::line_state(&p, e, Direction::FromLeft).map_err(e2s)?;
        let want = sojourn::onshell_sojourn_in(&p, &st, &reg).map_err(e2s)?.value;
        worst = worst.max((lr.value - want).abs());
    }
    Ok((worst < 1e-4, format!("max |response - sojourn| = {worst:.1e}")))
}

fn c8_resonance() -> Res {
    let p = Potential::double_barrier(2.0, 1.2, 1.0).map_err(e2s)?;
    let fit = sojourn::resonance_analysis(&p, (0.6, 1.6), 201).map_err(e2s)?;
    Ok(((0.9..=1.1).contains(&fit.ratio), format!("E_r {:.5}, dE {:.3e}, ratio {:.4}", fit.e_r, fit.delta_e, fit.ratio)))
}

fn floquet_system() -> Result<PeriodicPotential, String> {
    let base = Potential::square(-1.0, 0.0, 2.0).map_err(e2s)?.radial(0);
    let prof = Potential::square(1.0, 0.0, 2.0).map_err(e2s)?;
    PeriodicPotential::new(base, 1.2, vec![(1, C::new(0.3, 0.0), prof)]).map_err(e2s)
}

fn c9_floquet() -> Res {
    let pp = floquet_system()?;
    let n_max = pp.default_truncation();
    let eps = 0.5;
    let grid = floquet::default_grid(&pp, eps, n_max);
    let s = floquet::floquet_s_matrix(&floquet::solve_floquet(&pp, eps, n_max, &grid).map_err(e2s)?).map_err(e2s)?;
    let rows = s.row_sums().into_iter().chain(s.column_sums()).map(|v| (v - 1.0).abs()).fold(0.0, f64::max);

    let st = PeriodicPotential::static_only(pp.base.clone(), pp.omega).map_err(e2s)?;
    let grid = floquet::default_grid(&st, eps, n_max);
    let s0: FloquetSMatrix = floquet::floquet_s_matrix(&floquet::solve_floquet(&st, eps, n_max, &grid).map_err(e2s)?).map_err(e2s)?;
    let mut stat = 0.0f64;
    for i in 0..=n_max {
        for j in 0..=n_max {
            let want = if i == j { stationary::radial_s(&pp.base, eps + i as f64 * pp.omega).map_err(e2s)? } else { C::new(0.0, 0.0) };
            stat = stat.max((s0.matrix[(i, j)] - want).norm());
        }
    }

    let inc = Incoming::fixed(eps, Direction::FromLeft);
    let tmpl = Region::fuzzy(FuzzyProfile::new(100.0, 50.0, Shape::CosSquared).map_err(e2s)?);
    let div = floquet::floquet_in_divergence(&pp, &inc, n_max, &tmpl, 100.0, 8).map_err(e2s)?;
    let regions = sojourn::fuzzy_schedule(&[200.0, 300.0, 400.0], 0.5, Shape::CosSquared, 0.0).map_err(e2s)?;
    let sym = floquet::floquet_time_delay(&pp, &inc, n_max, &regions, Reference::Symmetric, 12).map_err(e2s)?.value;
    let ew = floquet::floquet_delay_matrix(&pp, eps, n_max).map_err(e2s)?.diagonal(0);
    let pass = rows < 1e-6 && stat < 1e-6 && div.relative_error < 0.02 && (sym - ew).abs() < 1e-3;
    Ok((
        pass,
        format!(
            "unitarity {rows:.1e}, static {stat:.1e}, divergence slope rel err {:.1e}, symmetric {:.1e}",
            div.relative_error,
            (sym - ew).abs()
        ),
    ))
}

fn c10_conditional() -> Res {
    let mut decomp = 0.0f64;
    for (_, p) in route_potentials()? {
        let inc = Incoming::fixed(0.9, Direction::FromLeft);
        let ew = sojourn::eisenbud_wigner_delay(&p, &inc).map_err(e2s)?.value;
        let tr = sojourn::conditional_time_delay(&p, &inc, &Condition::Transmit).map_err(e2s)?;
        let re = sojourn::conditional_time_delay(&p, &inc, &Condition::ReflectLeft).map_err(e2s)?;
        decomp = decomp.max((ew - (tr.probability * tr.value + re.probability * re.value)).abs());
    }
    let p = Potential::square(1.0, -0.5, 0.5).map_err(e2s)?;
    let sys = LineSystem { potential: p.clone() };
    let inc = Incoming::fixed(0.9, Direction::FromLeft);
    let regs = fixed_e_fuzzy_schedule()?;
    let general = sojourn::general_conditional_fuzzy_delay(&sys, &inc, 0, &Condition::None, &regs, 8).map_err(e2s)?.value;
    let local = sojourn::local_time_delay(&p, &inc, &regs, Reference::Symmetric).map_err(e2s)?.value;
    let identity = (general - local).abs();
    let regs = sojourn::fuzzy_schedule(&[100.0, 200.0], 0.5, Shape::CosSquared, 0.0).map_err(e2s)?;
    let com = sojourn::commuting_limits_check(&sys, 0.9, Direction::FromLeft, 0, &Condition::Transmit, &regs, &[0.01, 0.015, 0.02], 6).map_err(e2s)?;
    Ok((decomp < 1e-12 && identity < 5e-4 && com.difference < 1e-3, format!("decomposition {decomp:.1e}, F=1 vs local {identity:.1e}, commuting {:.1e}", com.difference)))
}

fn c11_positivity() -> Res {
    let grid = SpatialGrid::new(-300.0, 300.0 - 0.05, 12000).map_err(e2s)?;
    let (sk, x0, k0) = (0.05, -100.0, 1.0);
    let pk = WavePacket::gaussian(&grid, x0, k0, sk, 0.0).map_err(e2s)?;
    let mut cfg = PropagationConfig::for_grid(&grid);
    cfg.dt = 0.01;
    let region = Region::sharp(1.0);
    let ts: Vec<f64> = (0..=10).map(|j| j as f64 * cfg.dt).collect();
    let ps: Vec<f64> = ts.iter().map(|&t| pk.free_evolved(t).region_probability(&region)).collect();
    let s = ProbabilitySeries { regions: vec![region], times: ts, probs: vec![ps], absorbed: 0.0, final_norm: 1.0, complete: false };
    let d = dynamics::direct_sojourn(&s, 0, Some((0.0, 0.1))).map_err(e2s)?.value;
    let sx = 0.5 / sk;
    let want = numeric::integrate(
        |t| {
            let var = sx * sx + (sk * t).powi(2);
            let m = x0 + k0 * t;
            numeric::integrate(|x| (-(x - m).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt(), -1.0, 1.0, &[], 0.05)
        },
        0.0,
        0.1,
        &[],
        0.01,
    );
    let rel = (d - want).abs() / want;
    Ok((d > 1e-300 && d > 0.0 && rel < 1e-2, format!("T = {d:.3e} (Gaussian tail {want:.3e}, rel {rel:.1e})")))
}

fn c12_translation() -> Res {
    let p = Potential::gaussian(0.1, 0.0, 2.0).map_err(e2s)?;
    let e = 2.0;
    let inc = Incoming::fixed(e, Direction::FromLeft);
    let t2 = stationary::s_matrix(&p, e).map_err(e2s)?.transmission();
    let t0 = sojourn::translated_quantum_delay(&p, &inc, 0.0).map_err(e2s)?.value;
    let mut trans = 0.0f64;
    for c in [-10.0, 10.0] {
        trans = trans.max((sojourn::translated_quantum_delay(&p, &inc, c).map_err(e2s)?.value - t0).abs());
    }
    let wall = Potential::square(50.0, 0.0, 1.0).map_err(e2s)?;
    let inc = Incoming::fixed(0.5, Direction::FromLeft);
    let v = velocity(0.5);
    let w0 = sojourn::translated_quantum_delay(&wall, &inc, 0.0).map_err(e2s)?.value;
    let mut refl = 0.0f64;
    let mut route = 0.0f64;
    for c in [-10.0, 10.0] {
        let wc = sojourn::translated_quantum_delay(&wall, &inc, c).map_err(e2s)?.value;
        refl = refl.max((wc - w0 + 2.0 * c / v).abs());
        // sojourn route: fuzzy balls centred at c
        let regs = sojourn::fuzzy_schedule(&[400.0, 800.0], 0.25, Shape::CosSquared, c).map_err(e2s)?;
        let loc = sojourn::local_time_delay(&wall, &inc, &regs, Reference::Symmetric).map_err(e2s)?.value;
        route = route.max((loc - wc).abs());
    }
    let pass = t2 > 0.999 && trans < 1e-6 && refl < 1e-3 && route < 1e-3;
    Ok((pass, format!("|T|^2 {t2:.6}, transmitted shift {trans:.1e}, reflected shift err {refl:.1e}, sojourn route {route:.1e}")))
}

fn main() {
    let criteria: [(&str, fn() -> Res); 12] = [
        ("classical equivalence", c1_classical),
        ("S-matrix oracles", c2_smatrix),
        ("route identity", c3_route_identity),
        ("interference amplitude", c4_interference),
        ("fuzzy convergence", c5_fuzzy_convergence),
        ("clocks", c6_clocks),
        ("linear response", c7_linear_response),
        ("resonance", c8_resonance),
        ("floquet", c9_floquet),
        ("conditional identities", c10_conditional),
        ("strict positivity", c11_positivity),
        ("translation", c12_translation),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(f) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail} [{:.1}s]", if ok { "PASS" } else { "FAIL" }, i + 1, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
