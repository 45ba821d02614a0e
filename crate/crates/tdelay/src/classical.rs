//! Classical trajectories on the line and the time delays built from them.

use thiserror::Error;

use crate::model::{velocity, Geometry, Potential, Term};
use crate::numeric;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("energy must be positive, got {0}")]
    NonPositiveEnergy(f64),
    #[error("start point {0} lies inside the potential support")]
    StartInside(f64),
    #[error("time step must be positive and smaller than the time span")]
    BadStep,
    #[error("classical trajectories are only supported on the line")]
    Geometry,
    #[error("potential mixes steps with smooth terms; split it or tabulate it")]
    MixedPotential,
    #[error("|q - c| = {r} crossed {found} times; need at least two")]
    TooFewCrossings { r: f64, found: usize },
    #[error("too few free samples to fit the {0} asymptote")]
    NoAsymptote(&'static str),
    #[error("asymptotic fit residual {0:.3e} exceeds 1e-6")]
    FitResidual(f64),
    #[error("trajectory is captured: infinite delay")]
    Captured,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub q: f64,
    pub p: f64,
}

/// Free motion q(t) = q + p t.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Asymptote {
    pub q: f64,
    pub p: f64,
}

impl Asymptote {
    pub fn direction(&self) -> f64 {
        self.p.signum()
    }

    /// Times at which |q(t) - c| = r, in increasing order.
    pub fn arrivals(&self, r: f64, c: f64) -> (f64, f64) {
        let a = (c - r - self.q) / self.p;
        let b = (c + r - self.q) / self.p;
        (a.min(b), a.max(b))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Transmitted,
    Reflected,
    Captured,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub energy: f64,
    pub samples: Vec<Sample>,
    pub outcome: Outcome,
    pub incoming: Asymptote,
    pub outgoing: Option<Asymptote>,
    pub fit_residual: f64,
    support: (f64, f64),
    potential: Potential,
}

impl Trajectory {
    pub fn speed(&self) -> f64 {
        velocity(self.energy)
    }

    pub fn dt(&self) -> f64 {
        self.samples[1].t - self.samples[0].t
    }

    /// Same motion with the clock origin moved to t0.
    pub fn shifted(&self, t0: f64) -> Trajectory {
        let mut tr = self.clone();
        for s in tr.samples.iter_mut() {
            s.t -= t0;
        }
        tr.incoming.q += tr.incoming.p * t0;
        if let Some(o) = tr.outgoing.as_mut() {
            o.q += o.p * t0;
        }
        tr
    }

    /// Largest |p^2/2 + V(q) - E| over the samples.
    pub fn energy_drift(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| (0.5 * s.p * s.p + self.potential.eval(s.q) - self.energy).abs())
            .fold(0.0, f64::max)
    }

    fn outgoing_checked(&self) -> Result<Asymptote, ClassicalError> {
        self.outgoing.ok_or(ClassicalError::Captured)
    }
}

/// Newtonian motion started at `q_start` with kinetic energy `e`, heading
/// towards the support. Steps are integrated exactly on piecewise-constant
/// potentials and by velocity Verlet otherwise.
pub fn integrate_trajectory(p: &Potential, e: f64, q_start: f64, t_span: (f64, f64), dt: f64) -> Result<Trajectory, ClassicalError> {
    if !(e > 0.0) {
        return Err(ClassicalError::NonPositiveEnergy(e));
    }
    if p.geometry != Geometry::Line {
        return Err(ClassicalError::Geometry);
    }
    let (t0, t1) = t_span;
    if !(dt > 0.0) || !(t1 - t0 > 2.0 * dt) {
        return Err(ClassicalError::BadStep);
    }
    let support = p.support().unwrap_or((q_start, q_start));
    if p.support().is_some() && q_start >= support.0 && q_start <= support.1 {
        return Err(ClassicalError::StartInside(q_start));
    }
    let v = velocity(e);
    let p0 = if q_start < support.0 || p.support().is_none() { v } else { -v };
    let n = ((t1 - t0) / dt).floor() as usize;
    let all_steps = p.terms().iter().all(|t| matches!(t, Term::Segments(_)));
    let any_steps = p.terms().iter().any(|t| matches!(t, Term::Segments(_)));
    let samples = if all_steps {
        exact_steps(p, e, q_start, p0, t0, dt, n)
    } else if any_steps {
        return Err(ClassicalError::MixedPotential);
    } else {
        verlet(p, q_start, p0, t0, dt, n)
    };
    // free runs at both ends: outside the support with unchanged momentum
    let outside = |q: f64| p.support().is_none() || q < support.0 || q > support.1;
    let (p_first, p_last) = (samples[0].p, samples[samples.len() - 1].p);
    let incoming_end = samples.iter().position(|s| !(outside(s.q) && s.p == p_first)).unwrap_or(samples.len());
    let outgoing_start = samples.len() - samples.iter().rev().position(|s| !(outside(s.q) && s.p == p_last)).unwrap_or(samples.len());
    let first_in = (incoming_end < samples.len()).then_some(incoming_end);
    let incoming = fit_asymptote(&samples[..incoming_end], true).ok_or(ClassicalError::NoAsymptote("incoming"))?;
    let last = samples[samples.len() - 1];
    let escaped = (last.q < support.0 && last.p < 0.0) || (last.q > support.1 && last.p > 0.0);
    let (outcome, outgoing) = if first_in.is_none() && p.support().is_none() {
        (Outcome::Transmitted, Some(incoming))
    } else if first_in.is_none() {
        // never reached the support within the span
        (Outcome::Captured, None)
    } else if !escaped {
        (Outcome::Captured, None)
    } else {
        let out = fit_asymptote(&samples[outgoing_start..], false).ok_or(ClassicalError::NoAsymptote("outgoing"))?;
        let kind = if out.p.signum() == incoming.p.signum() { Outcome::Transmitted } else { Outcome::Reflected };
        (kind, Some(out))
    };
    let mut fit_residual: f64 = 0.0;
    for (asym, part) in [(Some(incoming), &samples[..incoming_end]), (outgoing, &samples[outgoing_start.min(samples.len())..])] {
        if let Some(a) = asym {
            if part.len() >= 2 {
                let worst = part.iter().map(|s| (s.q - a.q - a.p * s.t).abs()).fold(0.0, f64::max);
                fit_residual = fit_residual.max(worst);
            }
        }
    }
    if fit_residual > 1e-6 {
        return Err(ClassicalError::FitResidual(fit_residual));
    }
    Ok(Trajectory { energy: e, samples, outcome, incoming, outgoing, fit_residual, support, potential: p.clone() })
}

/// Line fit over the outer tenth of a run of free samples.
fn fit_asymptote(free: &[Sample], leading: bool) -> Option<Asymptote> {
    if free.len() < 2 {
        return None;
    }
    let m = (free.len() / 10).max(2).min(free.len());
    let part = if leading { &free[..m] } else { &free[free.len() - m..] };
    let ts: Vec<f64> = part.iter().map(|s| s.t).collect();
    let qs: Vec<f64> = part.iter().map(|s| s.q).collect();
    let fit = numeric::linear_fit(&ts, &qs);
    Some(Asymptote { q: fit.intercept, p: fit.slope })
}

fn verlet(p: &Potential, q0: f64, p0: f64, t0: f64, dt: f64, n: usize) -> Vec<Sample> {
    let mut out = Vec::with_capacity(n + 1);
    let (mut q, mut mom) = (q0, p0);
    let mut force = -p.slope(q);
    out.push(Sample { t: t0, q, p: mom });
    for i in 1..=n {
        let half = mom + 0.5 * dt * force;
        q += dt * half;
        force = -p.slope(q);
        mom = half + 0.5 * dt * force;
        out.push(Sample { t: t0 + i as f64 * dt, q, p: mom });
    }
    out
}

/// Uniform-step samples of the exact motion through piecewise-constant V.
fn exact_steps(p: &Potential, e: f64, q0: f64, p0: f64, t0: f64, dt: f64, n: usize) -> Vec<Sample> {
    let walls = p.breakpoints();
    let speed_at = |x: f64, dir: f64| -> Option<f64> {
        let ke = e - p.eval(x + dir * 1e-12 * (1.0 + x.abs()));
        if ke > 0.0 {
            Some((2.0 * ke).sqrt())
        } else {
            None
        }
    };
    let mut out = Vec::with_capacity(n + 1);
    let (mut q, mut mom) = (q0, p0);
    out.push(Sample { t: t0, q, p: mom });
    for i in 1..=n {
        let mut left = dt;
        while left > 0.0 {
            let dir = mom.signum();
            let next = if dir > 0.0 {
                walls.iter().copied().find(|&w| w > q)
            } else {
                walls.iter().rev().copied().find(|&w| w < q)
            };
            match next {
                Some(w) if (w - q) / mom <= left => {
                    left -= (w - q) / mom;
                    q = w;
                    mom = match speed_at(w, dir) {
                        Some(s) => dir * s,
                        None => -mom,
                    };
                }
                _ => {
                    q += mom * left;
                    left = 0.0;
                }
            }
        }
        out.push(Sample { t: t0 + i as f64 * dt, q, p: mom });
    }
    out
}

fn hermite(a: &Sample, b: &Sample, s: f64) -> f64 {
    let h = b.t - a.t;
    let (s2, s3) = (s * s, s * s * s);
    (2.0 * s3 - 3.0 * s2 + 1.0) * a.q + (s3 - 2.0 * s2 + s) * h * a.p + (-2.0 * s3 + 3.0 * s2) * b.q + (s3 - s2) * h * b.p
}

/// All times at which |q(t) - c| = r, located by bisection on the cubic
/// Hermite interpolant between samples.
pub fn crossings(tr: &Trajectory, r: f64, c: f64) -> Vec<f64> {
    let inside = |q: f64| (q - c).abs() < r;
    let mut out = vec![];
    for w in tr.samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if inside(a.q) == inside(b.q) {
            continue;
        }
        let target = if 0.5 * (a.q + b.q) > c { c + r } else { c - r };
        let sign = (a.q - target).signum();
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if (hermite(a, b, mid) - target).signum() == sign {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        out.push(a.t + 0.5 * (lo + hi) * (b.t - a.t));
    }
    out
}

/// (t^-(r), t^+(r)) about the origin.
pub fn arrival_times(tr: &Trajectory, r: f64) -> Result<(f64, f64), ClassicalError> {
    arrival_times_about(tr, r, 0.0)
}

pub fn arrival_times_about(tr: &Trajectory, r: f64, c: f64) -> Result<(f64, f64), ClassicalError> {
    let x = crossings(tr, r, c);
    if x.len() < 2 {
        return Err(ClassicalError::TooFewCrossings { r, found: x.len() });
    }
    Ok((x[0], x[x.len() - 1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convention {
    InPlus,
    OutMinus,
    SojournIn,
    SojournOut,
    Symmetric,
    FreeFlight,
}

impl Convention {
    pub const ALL: [Convention; 6] =
        [Convention::InPlus, Convention::OutMinus, Convention::SojournIn, Convention::SojournOut, Convention::Symmetric, Convention::FreeFlight];

    pub fn name(self) -> &'static str {
        match self {
            Convention::InPlus => "in+",
            Convention::OutMinus => "out-",
            Convention::SojournIn => "sojourn-in",
            Convention::SojournOut => "sojourn-out",
            Convention::Symmetric => "symmetric",
            Convention::FreeFlight => "free-flight",
        }
    }

    pub fn parse(s: &str) -> Option<Convention> {
        Convention::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// Local delays at one radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalDelays {
    pub r: f64,
    pub sojourn: f64,
    pub tau_in_minus: f64,
    pub tau_in_plus: f64,
    pub tau_out_minus: f64,
    pub tau_out_plus: f64,
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_s: f64,
    pub tau_ff: f64,
}

impl LocalDelays {
    pub fn get(&self, c: Convention) -> f64 {
        match c {
            Convention::InPlus => self.tau_in_plus,
            Convention::OutMinus => self.tau_out_minus,
            Convention::SojournIn => self.tau_in,
            Convention::SojournOut => self.tau_out,
            Convention::Symmetric => self.tau_s,
            Convention::FreeFlight => self.tau_ff,
        }
    }
}

/// Arrival-time delays at radius r, measuring the interacting particle
/// from c and the free references from c0. `ff_slope` is lim T(B_r)/r.
pub fn local_delays_about(tr: &Trajectory, r: f64, c: f64, c0: f64, ff_slope: f64) -> Result<LocalDelays, ClassicalError> {
    let out = tr.outgoing_checked()?;
    let (tm, tp) = arrival_times_about(tr, r, c)?;
    let (in_m, in_p) = tr.incoming.arrivals(r, c0);
    let (out_m, out_p) = out.arrivals(r, c0);
    let sojourn = tp - tm;
    let t0_in = in_p - in_m;
    let t0_out = out_p - out_m;
    let tau_in = sojourn - t0_in;
    let tau_out = sojourn - t0_out;
    Ok(LocalDelays {
        r,
        sojourn,
        tau_in_minus: tm - in_m,
        tau_in_plus: tp - in_p,
        tau_out_minus: out_m - tm,
        tau_out_plus: out_p - tp,
        tau_in,
        tau_out,
        tau_s: 0.5 * (tau_in + tau_out),
        tau_ff: sojourn - r * ff_slope,
    })
}

/// tau(c) = -(1/v) [p+ (q+ - c) - p- (q- - c)] with unit momenta.
pub fn translated_time_delay(tr: &Trajectory, c: f64) -> Result<f64, ClassicalError> {
    let out = tr.outgoing_checked()?;
    let v = tr.speed();
    let (dm, dp) = (tr.incoming.direction(), out.direction());
    Ok(-(dp * (out.q - c) - dm * (tr.incoming.q - c)) / v)
}

pub fn closed_form_delay(tr: &Trajectory) -> Result<f64, ClassicalError> {
    translated_time_delay(tr, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedOrigin {
    pub in_minus: f64,
    pub out_plus: f64,
    pub in_plus: f64,
    pub out_minus: f64,
}

/// Limits of the arrival-time delays when the interacting particle is
/// timed from c and the free references from c0.
pub fn mixed_origin_limits(tr: &Trajectory, c: f64, c0: f64) -> Result<MixedOrigin, ClassicalError> {
    let out = tr.outgoing_checked()?;
    let v = tr.speed();
    let (dm, dp) = (tr.incoming.direction(), out.direction());
    let (qm, qp) = (tr.incoming.q, out.q);
    Ok(MixedOrigin {
        in_minus: -dm * (c0 - c) / v,
        out_plus: -dp * (c - c0) / v,
        in_plus: -(dp * (qp - c) - dm * (qm - c0)) / v,
        out_minus: -(dp * (qp - c0) - dm * (qm - c)) / v,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalDelayReport {
    pub tau_closed_form: f64,
    pub rows: Vec<LocalDelays>,
    /// lim T(B_r)/r from a line fit over the grid.
    pub ff_slope: f64,
    pub outcome: Outcome,
}

impl ClassicalDelayReport {
    /// Value at the largest radius.
    pub fn limit(&self, c: Convention) -> f64 {
        self.rows.last().map(|row| row.get(c)).unwrap_or(f64::NAN)
    }

    pub fn residuals(&self, c: Convention) -> Vec<f64> {
        self.rows.iter().map(|row| (row.get(c) - self.tau_closed_form).abs()).collect()
    }

    /// Empirical power of r in the residual decay, when the residuals
    /// are resolvable above roundoff.
    pub fn residual_slope(&self, c: Convention) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.rows.iter().zip(self.residuals(c)).filter(|(_, e)| *e > 1e-10).map(|(row, e)| (row.r.ln(), e.ln())).collect();
        if pts.len() < 3 {
            return None;
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        Some(numeric::linear_fit(&xs, &ys).slope)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DelayOutcome {
    Finite(ClassicalDelayReport),
    Infinite,
}

/// Every local delay over `r_grid` (about the origin) with the closed form.
pub fn classical_time_delay(tr: &Trajectory, r_grid: &[f64]) -> Result<DelayOutcome, ClassicalError> {
    classical_time_delay_about(tr, r_grid, 0.0, 0.0)
}

pub fn classical_time_delay_about(tr: &Trajectory, r_grid: &[f64], c: f64, c0: f64) -> Result<DelayOutcome, ClassicalError> {
    if tr.outcome == Outcome::Captured {
        return Ok(DelayOutcome::Infinite);
    }
    let soj: Vec<f64> = r_grid
        .iter()
        .map(|&r| arrival_times_about(tr, r, c).map(|(a, b)| b - a))
        .collect::<Result<_, _>>()?;
    let ff_slope = if r_grid.len() >= 2 { numeric::linear_fit(r_grid, &soj).slope } else { 2.0 / tr.speed() };
    let rows = r_grid.iter().map(|&r| local_delays_about(tr, r, c, c0, ff_slope)).collect::<Result<_, _>>()?;
    Ok(DelayOutcome::Finite(ClassicalDelayReport { tau_closed_form: translated_time_delay(tr, c)?, rows, ff_slope, outcome: tr.outcome }))
}

/// Time spent in |q - c| < r as a sum over sampled presence.
pub fn classical_probabilistic_sojourn(tr: &Trajectory, r: f64, c: f64) -> f64 {
    let dt = tr.dt();
    let w = numeric::simpson_weights(tr.samples.len(), dt);
    tr.samples.iter().zip(&w).map(|(s, w)| if (s.q - c).abs() < r { *w } else { 0.0 }).sum()
}

/// Support of the potential the trajectory was run in.
pub fn support_of(tr: &Trajectory) -> (f64, f64) {
    tr.support
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Segment;

    fn run(p: &Potential, e: f64) -> Trajectory {
        integrate_trajectory(p, e, -20.0, (0.0, 60.0), 1e-3).unwrap()
    }

    #[test]
    fn free_line() {
        let tr = run(&Potential::free(), 0.5);
        assert_eq!(tr.outcome, Outcome::Transmitted);
        for s in tr.samples.iter().step_by(997) {
            assert!((s.q - (-20.0 + s.t)).abs() < 1e-9);
        }
        let tr = integrate_trajectory(&Potential::free(), 0.5, -30.0, (-30.0, 30.0), 1e-3).unwrap();
        let (a, b) = arrival_times(&tr, 10.0).unwrap();
        assert!((a + 10.0).abs() < 1e-9 && (b - 10.0).abs() < 1e-9);
        match classical_time_delay(&tr, &[10.0, 20.0]).unwrap() {
            DelayOutcome::Finite(rep) => {
                for c in Convention::ALL {
                    assert!(rep.limit(c).abs() < 1e-9);
                }
            }
            DelayOutcome::Infinite => panic!(),
        }
    }

    #[test]
    fn well_transmits_with_speed_two() {
        let p = Potential::square(-1.5, -0.5, 0.5).unwrap();
        let tr = run(&p, 0.5);
        assert_eq!(tr.outcome, Outcome::Transmitted);
        let inside: Vec<&Sample> = tr.samples.iter().filter(|s| s.q.abs() < 0.4).collect();
        assert!(!inside.is_empty() && inside.iter().all(|s| (s.p - 2.0).abs() < 1e-12));
        let (a, b) = arrival_times(&tr, 10.0).unwrap();
        // 2 * 9.5 / 1 + 1 / 2
        assert!((b - a - 19.5).abs() < 1e-9);
        assert!((classical_probabilistic_sojourn(&tr, 10.0, 0.0) - 19.5).abs() < 2.0 * tr.dt());
        assert!((closed_form_delay(&tr).unwrap() + 0.5).abs() < 1e-9);
    }

    #[test]
    fn barrier_reflects_and_delays() {
        let p = Potential::square(1.0, -0.5, 0.5).unwrap();
        let tr = run(&p, 0.5);
        assert_eq!(tr.outcome, Outcome::Reflected);
        let out = tr.outgoing.unwrap();
        assert!((out.p + tr.incoming.p).abs() < 1e-9);
        let x = crossings(&tr, 10.0, 0.0);
        assert_eq!(x.len(), 2);
        let p = Potential::square(1.5, -0.5, 0.5).unwrap();
        let tr = integrate_trajectory(&p, 2.0, -20.0, (0.0, 30.0), 1e-3).unwrap();
        assert!((closed_form_delay(&tr).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn conventions_agree_and_zero_limits() {
        let p = Potential::piecewise(vec![Segment { a: -1.0, b: 0.0, v: 0.8 }, Segment { a: 0.3, b: 1.2, v: -0.6 }]).unwrap();
        let tr = integrate_trajectory(&p, 1.1, -40.0, (0.0, 90.0), 1e-3).unwrap();
        let grid: Vec<f64> = (0..10).map(|i| 3.0 * 1.25f64.powi(i)).collect();
        let DelayOutcome::Finite(rep) = classical_time_delay(&tr, &grid).unwrap() else { panic!() };
        for c in Convention::ALL {
            let res = rep.residuals(c);
            assert!(res.iter().all(|r| *r < 1e-8), "{c:?} {res:?}");
        }
        for row in &rep.rows {
            assert!(row.tau_in_minus.abs() < 1e-9 && row.tau_out_plus.abs() < 1e-9);
            assert!((row.sojourn - 2.0 * row.r / tr.speed() - rep.tau_closed_form).abs() < 1e-8);
        }
        assert!((rep.ff_slope - 2.0 / tr.speed()).abs() < 1e-9);
    }

    #[test]
    fn smooth_potential_via_verlet() {
        let p = Potential::gaussian(0.6, 0.0, 0.5).unwrap();
        let e = 1.0;
        let tr = integrate_trajectory(&p, e, -20.0, (0.0, 45.0), 1e-3).unwrap();
        assert!(tr.energy_drift() < 1e-6);
        assert_eq!(tr.outcome, Outcome::Transmitted);
        // delay from the travel-time integral, -int (1/v(x) - 1/v) dx
        let v = velocity(e);
        let (lo, hi) = p.support().unwrap();
        let want = numeric::integrate(|x| 1.0 / v - 1.0 / (2.0 * (e - p.eval(x))).sqrt(), lo, hi, &[], 0.05);
        let got = closed_form_delay(&tr).unwrap();
        assert!((got + want).abs() < 1e-5, "{got} {want}");
        let (a, b) = arrival_times(&tr, 8.0).unwrap();
        assert!((b - a - 16.0 / v - got).abs() < 1e-5);
    }

    #[test]
    fn time_shift_invariance() {
        let p = Potential::square(-1.5, -0.5, 0.5).unwrap();
        let tr = run(&p, 0.5);
        let sh = tr.shifted(17.25);
        let grid = [5.0, 10.0];
        let (DelayOutcome::Finite(a), DelayOutcome::Finite(b)) = (classical_time_delay(&tr, &grid).unwrap(), classical_time_delay(&sh, &grid).unwrap()) else {
            panic!()
        };
        for c in Convention::ALL {
            assert!((a.limit(c) - b.limit(c)).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_and_mixed_origins() {
        let well = Potential::square(-1.5, -0.5, 0.5).unwrap();
        let tr = run(&well, 0.5);
        let base = closed_form_delay(&tr).unwrap();
        assert!((translated_time_delay(&tr, 3.0).unwrap() - base).abs() < 1e-9);
        let bar = Potential::square(1.0, -0.5, 0.5).unwrap();
        let rf = run(&bar, 0.5);
        let t0 = closed_form_delay(&rf).unwrap();
        let t3 = translated_time_delay(&rf, 3.0).unwrap();
        // shifted-ball sojourn: enter and leave |q - 3| < r on the left
        let r = 12.0;
        let (a, b) = arrival_times_about(&rf, r, 3.0).unwrap();
        assert!((b - a - 2.0 * r - t3).abs() < 1e-8);
        assert!((t3 - (t0 - 6.0)).abs() < 1e-8);
        let m = mixed_origin_limits(&tr, 0.0, 2.0).unwrap();
        assert!((m.in_minus + 2.0).abs() < 1e-12);
        let row = local_delays_about(&tr, 10.0, 0.0, 2.0, 2.0).unwrap();
        assert!((row.tau_in_minus - m.in_minus).abs() < 1e-8);
        assert!((row.tau_out_plus - m.out_plus).abs() < 1e-8);
        assert!((row.tau_in_plus - m.in_plus).abs() < 1e-8);
        assert!((row.tau_out_minus - m.out_minus).abs() < 1e-8);
        let same = mixed_origin_limits(&tr, 1.0, 1.0).unwrap();
        assert!(same.in_minus == 0.0 && same.out_plus == 0.0);
        for c0 in [-3.0, 0.0, 4.0] {
            let DelayOutcome::Finite(rep) = classical_time_delay_about(&tr, &[10.0, 15.0], 0.5, c0).unwrap() else { panic!() };
            for c in [Convention::SojournIn, Convention::SojournOut, Convention::Symmetric] {
                assert!((rep.limit(c) - translated_time_delay(&tr, 0.5).unwrap()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn capture_and_errors() {
        let p = Potential::square(1.0, -0.5, 0.5).unwrap();
        assert!(matches!(integrate_trajectory(&p, 0.5, 0.0, (0.0, 1.0), 1e-3), Err(ClassicalError::StartInside(_))));
        assert!(integrate_trajectory(&p, -1.0, -5.0, (0.0, 1.0), 1e-3).is_err());
        // too short a span to get back out
        let tr = integrate_trajectory(&Potential::square(-1.0, -5.0, 5.0).unwrap(), 0.5, -6.0, (0.0, 3.0), 1e-3).unwrap();
        assert_eq!(tr.outcome, Outcome::Captured);
        assert_eq!(classical_time_delay(&tr, &[10.0]).unwrap(), DelayOutcome::Infinite);
        let mixed = Potential::gaussian(1.0, 0.0, 1.0).unwrap().with_term(Term::Segments(vec![Segment { a: 0.0, b: 1.0, v: 1.0 }])).unwrap();
        assert!(matches!(integrate_trajectory(&mixed, 1.0, -20.0, (0.0, 10.0), 1e-3), Err(ClassicalError::MixedPotential)));
        let tr = run(&Potential::square(-1.5, -0.5, 0.5).unwrap(), 0.5);
        assert!(matches!(arrival_times(&tr, 100.0), Err(ClassicalError::TooFewCrossings { .. })));
    }
}
