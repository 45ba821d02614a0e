//! On-shell sojourn times, free reference times and time delays.
//!
//! Line states carry unit incoming amplitude, so the on-shell sojourn
//! time is (1/k) times the weighted norm of the state; radial states use
//! the prefactor 4/k.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::model::{velocity, wavenumber, Direction, EnergyProfile, Geometry, Potential, Region, RegionKind, Shape, DEFAULT_E_MIN};
use crate::numeric::{self, LineFit};
use crate::stationary::{self, Asymptotics, PhaseDerivative, SMatrix1D, StationaryError, StationaryState};

type C = Complex64;
type Pair = (C, C);

const C0: C = Complex64::new(0.0, 0.0);
const I: C = Complex64::new(0.0, 1.0);

/// Condition probabilities below this are treated as zero.
pub const CONDITION_THRESHOLD: f64 = 1e-10;

/// Relative disagreement allowed between the free-flight slopes fitted on
/// the two halves of the decade.
const SLOPE_TOLERANCE: f64 = 1e-2;

/// Samples over the last oscillation period of a sharp fixed-energy table.
const PERIOD_SAMPLES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SojournError {
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error("region [{lo}, {hi}] extends beyond the grid [{grid_lo}, {grid_hi}]")]
    RegionOutsideGrid { lo: f64, hi: f64, grid_lo: f64, grid_hi: f64 },
    #[error("free-flight slope not converged: {first:.6e} on the lower half of the decade, {second:.6e} on the upper half (fit residual {residual:.3e})")]
    SlopeNotConverged { first: f64, second: f64, residual: f64 },
    #[error("condition almost never satisfied (probability {0:.3e})")]
    ConditionNeverSatisfied(f64),
    #[error("no peak of |T|^2 inside the window")]
    NoPeak,
    #[error("{0} peaks of |T|^2 inside the window")]
    MultiplePeaks(usize),
    #[error("resonance fit failed: {0}")]
    FitFailed(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> SojournError {
    SojournError::Invalid(msg.into())
}

/// Incoming energy content: a single energy or a sampled |phi(E)|^2.
#[derive(Clone, Debug, PartialEq)]
pub struct Incoming {
    pub energies: Vec<f64>,
    /// |phi(E_i)|^2 times quadrature weight; sums to one.
    pub weights: Vec<f64>,
    pub direction: Direction,
}

impl Incoming {
    pub fn fixed(e: f64, direction: Direction) -> Incoming {
        Incoming { energies: vec![e], weights: vec![1.0], direction }
    }

    pub fn profile(p: &EnergyProfile) -> Incoming {
        Incoming { energies: p.energies().to_vec(), weights: p.density_weights(), direction: p.direction }
    }

    /// Gaussian in energy with |phi|^2 of standard deviation sigma.
    pub fn gaussian(e0: f64, sigma: f64, n: usize, direction: Direction) -> Result<Incoming, SojournError> {
        let e_min = DEFAULT_E_MIN.min(0.5 * e0);
        let p = EnergyProfile::gaussian(e0, sigma, 5.0, n, direction, e_min).map_err(|e| invalid(e.to_string()))?;
        Ok(Incoming::profile(&p))
    }

    pub fn is_fixed(&self) -> bool {
        self.energies.len() == 1
    }

    fn average(&self, vals: &[f64]) -> f64 {
        self.weights.iter().zip(vals).map(|(w, v)| w * v).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SojournKind {
    Interaction,
    FreeIn,
    FreeOut,
    FreeSymmetric,
    FreeFlight,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SojournOnShell {
    pub energy: f64,
    pub region: Region,
    pub value: f64,
    pub kind: SojournKind,
    /// Incoming channel on the line; None for radial states.
    pub channel: Option<Direction>,
}

/// Free reference sojourn time used in a local delay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    In,
    Out,
    Symmetric,
    FreeFlight,
}

impl Reference {
    pub const ALL: [Reference; 4] = [Reference::In, Reference::Out, Reference::Symmetric, Reference::FreeFlight];

    pub fn name(self) -> &'static str {
        match self {
            Reference::In => "in",
            Reference::Out => "out",
            Reference::Symmetric => "symmetric",
            Reference::FreeFlight => "free-flight",
        }
    }

    pub fn parse(s: &str) -> Option<Reference> {
        Reference::ALL.into_iter().find(|r| r.name() == s)
    }

    fn kind(self) -> SojournKind {
        match self {
            Reference::In => SojournKind::FreeIn,
            Reference::Out => SojournKind::FreeOut,
            Reference::Symmetric => SojournKind::FreeSymmetric,
            Reference::FreeFlight => SojournKind::FreeFlight,
        }
    }
}

/// Final-state condition F.
#[derive(Clone, Debug, PartialEq)]
pub enum Condition {
    None,
    Transmit,
    /// Particle from the left reflected back to the left.
    ReflectLeft,
    /// Particle from the right reflected back to the right.
    ReflectRight,
    /// Outgoing Floquet sideband n (energy transfer n hbar omega).
    Sideband(i32),
    /// Arbitrary set of outgoing channel indices.
    Channels(Vec<usize>),
}

impl Condition {
    pub fn name(&self) -> String {
        match self {
            Condition::None => "none".into(),
            Condition::Transmit => "transmit".into(),
            Condition::ReflectLeft => "reflect-left".into(),
            Condition::ReflectRight => "reflect-right".into(),
            Condition::Sideband(n) => format!("sideband:{n}"),
            Condition::Channels(c) => format!("channels:{c:?}"),
        }
    }

    pub fn parse(s: &str) -> Option<Condition> {
        match s {
            "none" | "identity" => Some(Condition::None),
            "transmit" => Some(Condition::Transmit),
            "reflect-left" | "reflect" => Some(Condition::ReflectLeft),
            "reflect-right" => Some(Condition::ReflectRight),
            _ => s.strip_prefix("sideband:").and_then(|n| n.trim().parse().ok()).map(Condition::Sideband),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayRow {
    pub r: f64,
    pub rho: f64,
    pub interaction: f64,
    pub reference: f64,
    pub delay: f64,
}

/// Sinusoidal fit a + b sin(2kr) + c cos(2kr) over the last period of a
/// sharp fixed-energy table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Oscillation {
    pub midpoint: f64,
    /// Max minus min of the sampled delays over the period.
    pub peak_to_peak: f64,
    /// sqrt(b^2 + c^2) of the fit.
    pub amplitude: f64,
    pub fit_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayResult {
    pub value: f64,
    /// None for formula routes (phase derivatives).
    pub reference: Option<Reference>,
    pub condition: Condition,
    pub origin: f64,
    pub fuzzy: Option<Shape>,
    pub table: Vec<DelayRow>,
    /// Extrapolation or derivative error estimate.
    pub residual: f64,
    /// Probability of the condition (1 when unconditioned).
    pub probability: f64,
    pub oscillation: Option<Oscillation>,
    /// Fitted lim T / f(r, rho) for free-flight references.
    pub slope: Option<f64>,
}

impl DelayResult {
    pub(crate) fn formula(value: f64, residual: f64, condition: Condition, probability: f64) -> DelayResult {
        DelayResult {
            value,
            reference: None,
            condition,
            origin: 0.0,
            fuzzy: None,
            table: vec![],
            residual,
            probability,
            oscillation: None,
            slope: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResonanceFit {
    pub e_r: f64,
    /// Half-width of the Lorentzian.
    pub delta_e: f64,
    /// Peak height of the fitted Lorentzian.
    pub amplitude: f64,
    pub background_phase: f64,
    pub tau_peak: f64,
    /// tau(E_r) * Delta_E / hbar.
    pub ratio: f64,
    /// Relative rms of the Lorentzian fit.
    pub quality: f64,
}

// ---------------------------------------------------------------------
// Weighted overlaps

/// Integral of conj(a e^{ikx} + b e^{-ikx}) (c e^{ikx} + d e^{-ikx}) over [x1, x2].
fn plane_overlap(k: f64, u: Pair, w: Pair, x1: f64, x2: f64) -> C {
    let e2 = |x: f64| Complex64::from_polar(1.0, 2.0 * k * x);
    let ep = (e2(x2) - e2(x1)) / (2.0 * I * k);
    (u.0.conj() * w.0 + u.1.conj() * w.1) * (x2 - x1) + u.0.conj() * w.1 * ep.conj() + u.1.conj() * w.0 * ep
}

/// Line wave function with its free zones x <= lo and x >= hi.
struct LineView<'a> {
    psi: Box<dyn Fn(f64) -> C + 'a>,
    lo: f64,
    hi: f64,
    left: Pair,
    right: Pair,
    breaks: &'a [f64],
}

impl<'a> LineView<'a> {
    fn of_state(st: &'a StationaryState) -> Option<LineView<'a>> {
        match st.asymptotics {
            Asymptotics::Line { lo, hi, left, right } => {
                Some(LineView { psi: Box::new(move |x| st.psi(x)), lo, hi, left, right, breaks: st.breakpoints() })
            }
            Asymptotics::Radial { .. } => None,
        }
    }

    fn free(k: f64, pair: Pair) -> LineView<'static> {
        let psi = move |x: f64| pair.0 * Complex64::from_polar(1.0, k * x) + pair.1 * Complex64::from_polar(1.0, -k * x);
        LineView { psi: Box::new(psi), lo: f64::INFINITY, hi: f64::INFINITY, left: pair, right: pair, breaks: &[] }
    }
}

/// Integral of chi(x) conj(a) b; weight-one free stretches are done in
/// closed form, the rest by Gauss-Legendre panels a quarter of the
/// shortest wavelength wide.
fn line_overlap(k: f64, kmax: f64, a: &LineView, b: &LineView, region: &Region) -> C {
    let c = region.center;
    let (r, o) = (region.r(), region.outer_radius());
    let zl = a.lo.min(b.lo);
    let zr = a.hi.max(b.hi);
    let mut pts = vec![c - o, c - r, c + r, c + o, zl, zr];
    pts.extend_from_slice(a.breaks);
    pts.extend_from_slice(b.breaks);
    pts.retain(|x| x.is_finite() && *x >= c - o && *x <= c + o);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let panel = 0.5 * PI / kmax;
    let mut total = C0;
    for w in pts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        let inside = (0.5 * (u + v) - c).abs() < r;
        if inside && v <= zl {
            total += plane_overlap(k, a.left, b.left, u, v);
        } else if inside && u >= zr {
            total += plane_overlap(k, a.right, b.right, u, v);
        } else {
            total += numeric::integrate_c(|x| (a.psi)(x).conj() * (b.psi)(x) * region.weight(x), u, v, &[], panel);
        }
    }
    total
}

fn radial_weight(region: &Region, s: f64) -> f64 {
    match region.kind {
        RegionKind::Sharp { r } => {
            if s <= r {
                1.0
            } else {
                0.0
            }
        }
        RegionKind::Fuzzy(p) => p.membership(s),
    }
}

/// Integral of chi(s) |u(s)|^2 over the half line.
fn radial_norm(st: &StationaryState, kmax: f64, region: &Region) -> f64 {
    let (l, delta, core, edge) = match st.asymptotics {
        Asymptotics::Radial { l, delta, core, edge } => (l, delta, core, edge),
        Asymptotics::Line { .. } => unreachable!("radial_norm on a line state"),
    };
    let k = st.k;
    let (r, o) = (region.r(), region.outer_radius());
    let mut pts = vec![core, edge, r, o];
    pts.extend_from_slice(st.breakpoints());
    pts.retain(|x| *x >= core && *x <= o);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let panel = 0.5 * PI / kmax;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (u, v) = (w[0], w[1]);
        if v <= u {
            continue;
        }
        if l == 0 && u >= edge && 0.5 * (u + v) < r {
            // |u|^2 = sin^2(ks + delta)
            total += 0.5 * (v - u) - ((2.0 * (k * v + delta)).sin() - (2.0 * (k * u + delta)).sin()) / (4.0 * k);
        } else {
            total += numeric::integrate(|s| st.psi(s).norm_sqr() * radial_weight(region, s), u, v, &[], panel);
        }
    }
    total
}

fn kmax_of(p: &Potential, e: f64) -> f64 {
    let (vmin, _) = p.range();
    (2.0 * (e - vmin.min(0.0))).sqrt()
}

fn check_region(st: &StationaryState, region: &Region) -> Result<(), SojournError> {
    if !st.is_bounded() {
        return Ok(());
    }
    let o = region.outer_radius();
    let (lo, hi) = if st.is_radial() { (st.grid.x_min, o) } else { (region.center - o, region.center + o) };
    if !st.grid.contains(lo) || !st.grid.contains(hi) {
        return Err(SojournError::RegionOutsideGrid { lo, hi, grid_lo: st.grid.x_min, grid_hi: st.grid.x_max });
    }
    Ok(())
}

/// (m / hbar k) times the membership-weighted norm of the state; 4m/(hbar k)
/// on the half line. The state does not carry its potential, so panels are
/// sized for four times the asymptotic wavenumber; prefer
/// `onshell_sojourn_in` for deep wells.
pub fn onshell_interaction_sojourn(state: &StationaryState, region: &Region) -> Result<SojournOnShell, SojournError> {
    onshell_with_kmax(state, region, 4.0 * state.k.max(1e-12))
}

/// As `onshell_interaction_sojourn`, with the quadrature resolution set
/// from the potential.
pub fn onshell_sojourn_in(p: &Potential, state: &StationaryState, region: &Region) -> Result<SojournOnShell, SojournError> {
    onshell_with_kmax(state, region, kmax_of(p, state.energy))
}

fn onshell_with_kmax(state: &StationaryState, region: &Region, kmax: f64) -> Result<SojournOnShell, SojournError> {
    check_region(state, region)?;
    let k = state.k;
    let value = if state.is_radial() {
        4.0 / k * radial_norm(state, kmax, region)
    } else {
        let v = LineView::of_state(state).unwrap();
        line_overlap(k, kmax, &v, &v, region).re / k
    };
    Ok(SojournOnShell { energy: state.energy, region: *region, value, kind: SojournKind::Interaction, channel: state.direction })
}

/// On-shell sojourn matrix T_{sigma rho} = (1/k) integral chi conj(psi_sigma) psi_rho
/// over incoming channels ordered (from left, from right).
pub fn line_sojourn_matrix(p: &Potential, e: f64, region: &Region) -> Result<DMatrix<C>, SojournError> {
    let plus = stationary::line_state(p, e, Direction::FromLeft)?;
    let minus = stationary::line_state(p, e, Direction::FromRight)?;
    Ok(line_matrix_from(&plus, &minus, kmax_of(p, e), region))
}

fn line_matrix_from(plus: &StationaryState, minus: &StationaryState, kmax: f64, region: &Region) -> DMatrix<C> {
    let k = plus.k;
    let views = [LineView::of_state(plus).unwrap(), LineView::of_state(minus).unwrap()];
    let mut m = DMatrix::zeros(2, 2);
    for i in 0..2 {
        for j in i..2 {
            let v = line_overlap(k, kmax, &views[i], &views[j], region) / k;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    for i in 0..2 {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
    }
    m
}

/// Outgoing free wave S phi for a unit incoming wave from `dir`, as
/// coefficients of (e^{ikx}, e^{-ikx}).
fn outgoing_pair(s: &SMatrix1D, dir: Direction) -> Pair {
    match dir {
        Direction::FromLeft => (s.t, s.l),
        Direction::FromRight => (s.r, s.t),
    }
}

/// Free reference sojourn time at fixed energy. The free-flight kind needs
/// the fitted slope lim T / f.
pub fn free_reference_sojourn(kind: Reference, s: &SMatrix1D, dir: Direction, region: &Region, ff_slope: Option<f64>) -> Result<SojournOnShell, SojournError> {
    let e = s.energy;
    let k = wavenumber(e);
    let t_in = 2.0 * region.normalizer() / velocity(e);
    let out = || {
        let v = LineView::free(k, outgoing_pair(s, dir));
        line_overlap(k, k, &v, &v, region).re / k
    };
    let value = match kind {
        Reference::In => t_in,
        Reference::Out => out(),
        Reference::Symmetric => 0.5 * (t_in + out()),
        Reference::FreeFlight => match ff_slope {
            Some(sl) => region.normalizer() * sl,
            None => return Err(invalid("free-flight reference needs a fitted slope")),
        },
    };
    Ok(SojournOnShell { energy: e, region: *region, value, kind: kind.kind(), channel: Some(dir) })
}

/// Region with radius r and, when fuzzy, rho scaled by the same factor.
pub fn scaled_region(region: &Region, r: f64) -> Region {
    let kind = match region.kind {
        RegionKind::Sharp { .. } => RegionKind::Sharp { r },
        RegionKind::Fuzzy(p) => {
            let ratio = if region.r() > 0.0 { p.rho / p.r } else { 0.1 };
            RegionKind::Fuzzy(crate::model::FuzzyProfile { r, rho: (ratio * r).max(1e-12), ..p })
        }
    };
    Region { center: region.center, kind }
}

/// `n` radii spaced geometrically over [r_lo, 10 r_lo].
pub fn decade(r_lo: f64, n: usize) -> Vec<f64> {
    let n = n.max(4);
    (0..n).map(|j| r_lo * 10f64.powf(j as f64 / (n - 1) as f64)).collect()
}

/// lim T(B_r') / f(r', rho') by a straight-line fit of T against f over a
/// decade of radii, rho' scaled with r'.
pub fn free_flight_slope<F>(mut sojourn: F, template: &Region, r_lo: f64, n: usize) -> Result<LineFit, SojournError>
where
    F: FnMut(&Region) -> Result<f64, SojournError>,
{
    let rs = decade(r_lo, n);
    let mut xs = Vec::with_capacity(rs.len());
    let mut ys = Vec::with_capacity(rs.len());
    for &r in &rs {
        let reg = scaled_region(template, r);
        xs.push(reg.normalizer());
        ys.push(sojourn(&reg)?);
    }
    let fit = numeric::linear_fit(&xs, &ys);
    let h = xs.len() / 2;
    let first = numeric::linear_fit(&xs[..=h], &ys[..=h]).slope;
    let second = numeric::linear_fit(&xs[h..], &ys[h..]).slope;
    if !fit.slope.is_finite() || (first - second).abs() > SLOPE_TOLERANCE * fit.slope.abs() {
        return Err(SojournError::SlopeNotConverged { first, second, residual: fit.residual });
    }
    Ok(fit)
}

// ---------------------------------------------------------------------
// Per-energy caches

enum Geom {
    Line { states: Vec<StationaryState>, s: Vec<SMatrix1D> },
    Radial { states: Vec<StationaryState> },
}

struct Shell<'a> {
    inc: &'a Incoming,
    kmax: Vec<f64>,
    geom: Geom,
}

impl<'a> Shell<'a> {
    fn new(p: &Potential, inc: &'a Incoming) -> Result<Shell<'a>, SojournError> {
        if inc.energies.is_empty() {
            return Err(invalid("no energies"));
        }
        let kmax = inc.energies.iter().map(|&e| kmax_of(p, e)).collect();
        let geom = match p.geometry {
            Geometry::Line => {
                let mut states = Vec::with_capacity(inc.energies.len());
                let mut s = Vec::with_capacity(inc.energies.len());
                for &e in &inc.energies {
                    let st = stationary::line_state(p, e, inc.direction)?;
                    let m = stationary::s_matrix(p, e)?;
                    states.push(st);
                    s.push(m);
                }
                Geom::Line { states, s }
            }
            Geometry::Radial { .. } => {
                let states = inc.energies.iter().map(|&e| stationary::radial_state(p, e)).collect::<Result<_, _>>()?;
                Geom::Radial { states }
            }
        };
        Ok(Shell { inc, kmax, geom })
    }

    fn interaction(&self, region: &Region) -> Result<f64, SojournError> {
        let states = match &self.geom {
            Geom::Line { states, .. } | Geom::Radial { states } => states,
        };
        let vals: Vec<f64> = states
            .iter()
            .zip(&self.kmax)
            .map(|(st, &km)| onshell_with_kmax(st, region, km).map(|s| s.value))
            .collect::<Result<_, _>>()?;
        Ok(self.inc.average(&vals))
    }

    fn reference(&self, kind: Reference, region: &Region, slope: Option<f64>) -> Result<f64, SojournError> {
        match &self.geom {
            Geom::Line { s, .. } => {
                let vals: Vec<f64> = s
                    .iter()
                    .map(|m| free_reference_sojourn(kind, m, self.inc.direction, region, slope).map(|x| x.value))
                    .collect::<Result<_, _>>()?;
                Ok(self.inc.average(&vals))
            }
            Geom::Radial { .. } => {
                // single channel: S phi has the same free sojourn time as phi
                if kind == Reference::FreeFlight {
                    let sl = slope.ok_or_else(|| invalid("free-flight reference needs a fitted slope"))?;
                    return Ok(region.normalizer() * sl);
                }
                let vals: Vec<f64> = self.inc.energies.iter().map(|&e| 2.0 * region.normalizer() / velocity(e)).collect();
                Ok(self.inc.average(&vals))
            }
        }
    }
}

/// Least-squares a + b sin(2kr) + c cos(2kr).
fn sinusoid_fit(k: f64, rs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = rs.len();
    let a = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => (2.0 * k * rs[i]).sin(),
        _ => (2.0 * k * rs[i]).cos(),
    });
    let b = DVector::from_column_slice(ys);
    let c = a.clone().svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(3));
    let res = (&a * &c - b).norm() / (n as f64).sqrt();
    (c[0], c[1].hypot(c[2]), res)
}

/// Extrapolated limit of a non-oscillating table: Richardson in 1/r when
/// the last three rows approach like 1/r, the last value otherwise.
pub(crate) fn table_limit(rows: &[DelayRow]) -> (f64, f64) {
    let n = rows.len();
    if n == 0 {
        return (f64::NAN, f64::INFINITY);
    }
    let last = rows[n - 1].delay;
    if n < 3 {
        let res = if n == 2 { (last - rows[0].delay).abs() } else { 0.0 };
        return (last, res);
    }
    let (a, b, c) = (&rows[n - 3], &rows[n - 2], &rows[n - 1]);
    let d1 = b.delay - a.delay;
    let d2 = c.delay - b.delay;
    if a.r < b.r && b.r < c.r && d1 * d2 > 0.0 && d2.abs() > 1e-14 {
        let expect = (1.0 / c.r - 1.0 / b.r) / (1.0 / b.r - 1.0 / a.r);
        if ((d2 / d1) - expect).abs() < 0.2 * expect {
            let v = (c.r * c.delay - b.r * b.delay) / (c.r - b.r);
            return (v, (v - last).abs());
        }
    }
    (last, d2.abs())
}

fn oscillation_over_last_period<F>(k: f64, region: &Region, mut tau: F) -> Result<Oscillation, SojournError>
where
    F: FnMut(&Region) -> Result<f64, SojournError>,
{
    let big_r = region.r();
    let period = PI / k;
    let rs: Vec<f64> = (0..PERIOD_SAMPLES).map(|j| big_r - period + period * j as f64 / (PERIOD_SAMPLES - 1) as f64).collect();
    let mut ys = Vec::with_capacity(rs.len());
    for &r in &rs {
        ys.push(tau(&region.with_radius(r))?);
    }
    let (mid, amp, res) = sinusoid_fit(k, &rs, &ys);
    let max = ys.iter().copied().fold(f64::MIN, f64::max);
    let min = ys.iter().copied().fold(f64::MAX, f64::min);
    Ok(Oscillation { midpoint: mid, peak_to_peak: max - min, amplitude: amp, fit_residual: res })
}

pub(crate) fn fuzzy_shape(regions: &[Region]) -> Option<Shape> {
    regions.iter().find_map(|r| match r.kind {
        RegionKind::Fuzzy(p) => Some(p.shape),
        RegionKind::Sharp { .. } => None,
    })
}

/// Local time delay tau(r) = T(B_r) - T_ref(B_r) over a schedule of
/// regions, with its extrapolated limit.
pub fn local_time_delay(p: &Potential, inc: &Incoming, regions: &[Region], reference: Reference) -> Result<DelayResult, SojournError> {
    local_time_delay_with(p, inc, regions, reference, 12)
}

/// `ff_points` is the number of radii in the free-flight decade.
pub fn local_time_delay_with(p: &Potential, inc: &Incoming, regions: &[Region], reference: Reference, ff_points: usize) -> Result<DelayResult, SojournError> {
    if regions.is_empty() {
        return Err(invalid("empty region schedule"));
    }
    let shell = Shell::new(p, inc)?;
    let last = *regions.last().unwrap();
    let slope = if reference == Reference::FreeFlight {
        let r_lo = regions.iter().map(|r| r.r()).fold(0.0, f64::max);
        Some(free_flight_slope(|reg| shell.interaction(reg), &last, r_lo, ff_points)?.slope)
    } else {
        None
    };
    let tau = |reg: &Region| -> Result<(f64, f64), SojournError> { Ok((shell.interaction(reg)?, shell.reference(reference, reg, slope)?)) };
    let mut table = Vec::with_capacity(regions.len());
    for reg in regions {
        let (ti, tr) = tau(reg)?;
        table.push(DelayRow { r: reg.r(), rho: reg.rho(), interaction: ti, reference: tr, delay: ti - tr });
    }
    let (value, residual, oscillation) = if inc.is_fixed() && last.is_sharp() {
        let k = wavenumber(inc.energies[0]);
        let osc = oscillation_over_last_period(k, &last, |reg| tau(reg).map(|(a, b)| a - b))?;
        (osc.midpoint, osc.fit_residual, Some(osc))
    } else {
        let (v, r) = table_limit(&table);
        (v, r, None)
    };
    Ok(DelayResult {
        value,
        reference: Some(reference),
        condition: Condition::None,
        origin: last.center,
        fuzzy: fuzzy_shape(regions),
        table,
        residual,
        probability: 1.0,
        oscillation,
        slope,
    })
}

// ---------------------------------------------------------------------
// Phase-derivative routes

/// S-matrix and phase derivatives at one energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellDelays {
    pub s: SMatrix1D,
    /// hbar d alpha_T / dE.
    pub tau_t: Option<PhaseDerivative>,
    /// hbar d alpha_L / dE (from the left) or d alpha_R / dE (from the right).
    pub tau_refl: Option<PhaseDerivative>,
    pub direction: Direction,
}

impl ShellDelays {
    /// |T|^2 tau_T + |X|^2 tau_X.
    pub fn eisenbud_wigner(&self) -> f64 {
        let (t, x) = self.s.channel(self.direction);
        t.norm_sqr() * self.tau_t.map_or(0.0, |d| d.value) + x.norm_sqr() * self.tau_refl.map_or(0.0, |d| d.value)
    }

    fn error(&self) -> f64 {
        let (t, x) = self.s.channel(self.direction);
        t.norm_sqr() * self.tau_t.map_or(0.0, |d| d.error) + x.norm_sqr() * self.tau_refl.map_or(0.0, |d| d.error)
    }
}

/// Channels with probability below this carry no phase derivative.
const PHASE_FLOOR: f64 = 1e-12;

pub fn shell_delays(p: &Potential, e: f64, dir: Direction, h: Option<f64>) -> Result<ShellDelays, SojournError> {
    let h = h.unwrap_or_else(|| stationary::default_step(e)).min(0.5 * e);
    let nodes = stationary::derivative_nodes(e, h);
    let mut ss = Vec::with_capacity(5);
    for &x in &nodes {
        ss.push(stationary::s_matrix(p, x)?);
    }
    let s = ss[2];
    let pick = |f: &dyn Fn(&SMatrix1D) -> C| -> [C; 5] { [f(&ss[0]), f(&ss[1]), f(&ss[2]), f(&ss[3]), f(&ss[4])] };
    let tau_t = if s.t.norm_sqr() > PHASE_FLOOR { Some(stationary::phase_derivative_from(&pick(&|m| m.t), e, h)?) } else { None };
    let x = s.channel(dir).1;
    let tau_refl = if x.norm_sqr() > PHASE_FLOOR {
        let samples = match dir {
            Direction::FromLeft => pick(&|m| m.l),
            Direction::FromRight => pick(&|m| m.r),
        };
        Some(stationary::phase_derivative_from(&samples, e, h)?)
    } else {
        None
    };
    Ok(ShellDelays { s, tau_t, tau_refl, direction: dir })
}

/// 2 hbar d delta_l / dE from the phase of e^{2 i delta}.
pub fn radial_delay(p: &Potential, e: f64, h: Option<f64>) -> Result<PhaseDerivative, SojournError> {
    let h = h.unwrap_or_else(|| stationary::default_step(e)).min(0.5 * e);
    Ok(stationary::phase_derivative(|x| stationary::radial_s(p, x), e, h)?)
}

/// Eisenbud-Wigner delay, at fixed energy or averaged over |phi(E)|^2.
pub fn eisenbud_wigner_delay(p: &Potential, inc: &Incoming) -> Result<DelayResult, SojournError> {
    eisenbud_wigner_delay_step(p, inc, None)
}

pub fn eisenbud_wigner_delay_step(p: &Potential, inc: &Incoming, h: Option<f64>) -> Result<DelayResult, SojournError> {
    let mut vals = Vec::with_capacity(inc.energies.len());
    let mut errs = Vec::with_capacity(inc.energies.len());
    for &e in &inc.energies {
        match p.geometry {
            Geometry::Line => {
                let d = shell_delays(p, e, inc.direction, h)?;
                vals.push(d.eisenbud_wigner());
                errs.push(d.error());
            }
            Geometry::Radial { .. } => {
                let d = radial_delay(p, e, h)?;
                vals.push(d.value);
                errs.push(d.error);
            }
        }
    }
    Ok(DelayResult::formula(inc.average(&vals), inc.average(&errs), Condition::None, 1.0))
}

/// Transmission or reflection time delay: phase derivative of the
/// conditioned amplitude weighted by its probability.
pub fn conditional_time_delay(p: &Potential, inc: &Incoming, condition: &Condition) -> Result<DelayResult, SojournError> {
    if p.geometry != Geometry::Line {
        return Err(invalid("conditional delays need a line potential"));
    }
    let transmit = match (condition, inc.direction) {
        (Condition::None, _) => return eisenbud_wigner_delay(p, inc),
        (Condition::Transmit, _) => true,
        (Condition::ReflectLeft, Direction::FromLeft) | (Condition::ReflectRight, Direction::FromRight) => false,
        (Condition::ReflectLeft, Direction::FromRight) | (Condition::ReflectRight, Direction::FromLeft) => {
            return Err(SojournError::ConditionNeverSatisfied(0.0));
        }
        _ => return Err(invalid(format!("condition {} does not apply to line scattering", condition.name()))),
    };
    let (mut num, mut den, mut err) = (0.0, 0.0, 0.0);
    for (&e, &w) in inc.energies.iter().zip(&inc.weights) {
        let d = shell_delays(p, e, inc.direction, None)?;
        let (t, x) = d.s.channel(inc.direction);
        let (prob, tau) = if transmit { (t.norm_sqr(), d.tau_t) } else { (x.norm_sqr(), d.tau_refl) };
        if let Some(tau) = tau {
            num += w * prob * tau.value;
            err += w * prob * tau.error;
        }
        den += w * prob;
    }
    if den < CONDITION_THRESHOLD {
        return Err(SojournError::ConditionNeverSatisfied(den));
    }
    Ok(DelayResult::formula(num / den, err / den, condition.clone(), den))
}

/// tau(c) = tau + c <(1/v)(S^dag p_hat S - p_hat)>.
pub fn translated_quantum_delay(p: &Potential, inc: &Incoming, c: f64) -> Result<DelayResult, SojournError> {
    if p.geometry != Geometry::Line {
        return Err(invalid("translated delays need a line potential"));
    }
    let mut base = eisenbud_wigner_delay(p, inc)?;
    let sign_in = match inc.direction {
        Direction::FromLeft => 1.0,
        Direction::FromRight => -1.0,
    };
    let mut shifts = Vec::with_capacity(inc.energies.len());
    for &e in &inc.energies {
        let s = stationary::s_matrix(p, e)?;
        let (t, x) = s.channel(inc.direction);
        // transmitted part keeps the direction, reflected part reverses it
        let p_out = sign_in * (t.norm_sqr() - x.norm_sqr());
        shifts.push((p_out - sign_in) / velocity(e));
    }
    base.value += c * inc.average(&shifts);
    base.origin = c;
    Ok(base)
}

/// Lorentzian fit of an isolated |T|^2 peak and the delay at its centre.
pub fn resonance_analysis(p: &Potential, window: (f64, f64), samples: usize) -> Result<ResonanceFit, SojournError> {
    let (e1, e2) = window;
    if !(e2 > e1 && e1 > 0.0) || samples < 5 {
        return Err(invalid("window must satisfy 0 < E1 < E2 with at least 5 samples"));
    }
    let es: Vec<f64> = (0..samples).map(|i| e1 + (e2 - e1) * i as f64 / (samples - 1) as f64).collect();
    let t2: Vec<f64> = es.iter().map(|&e| stationary::s_matrix(p, e).map(|s| s.transmission())).collect::<Result<_, _>>()?;
    let peaks: Vec<usize> = (1..samples - 1).filter(|&i| t2[i] > t2[i - 1] && t2[i] > t2[i + 1]).collect();
    let ip = match peaks.len() {
        0 => return Err(SojournError::NoPeak),
        1 => peaks[0],
        n => return Err(SojournError::MultiplePeaks(n)),
    };
    // half-maximum crossings give the starting width
    let half = 0.5 * t2[ip];
    let cross = |range: &mut dyn Iterator<Item = usize>| -> Option<f64> {
        let mut prev = ip;
        for i in range {
            if t2[i] < half {
                let f = (t2[prev] - half) / (t2[prev] - t2[i]);
                return Some(es[prev] + f * (es[i] - es[prev]));
            }
            prev = i;
        }
        None
    };
    let lo = cross(&mut (0..ip).rev()).unwrap_or(e1);
    let hi = cross(&mut (ip + 1..samples)).unwrap_or(e2);
    let w0 = (0.5 * (hi - lo)).max(1e-9);
    let (flo, fhi) = ((es[ip] - 4.0 * w0).max(0.5 * es[ip]), es[ip] + 4.0 * w0);
    let fe: Vec<f64> = (0..samples).map(|i| flo + (fhi - flo) * i as f64 / (samples - 1) as f64).collect();
    let ft: Vec<f64> = fe.iter().map(|&e| stationary::s_matrix(p, e).map(|s| s.transmission())).collect::<Result<_, _>>()?;
    let model = |q: &[f64], e: f64| q[2] * q[1] * q[1] / ((e - q[0]).powi(2) + q[1] * q[1]);
    let resid = |q: &[f64]| fe.iter().zip(&ft).map(|(&e, &t)| model(q, e) - t).collect::<Vec<f64>>();
    let (q, cost) = numeric::levenberg_marquardt(resid, &[es[ip], w0, t2[ip]], 200);
    let (e_r, delta_e, amp) = (q[0], q[1].abs(), q[2]);
    if !(delta_e > 0.0) || !e_r.is_finite() || e_r <= 0.0 {
        return Err(SojournError::FitFailed(format!("E_r = {e_r}, Delta_E = {delta_e}")));
    }
    let quality = (cost / fe.len() as f64).sqrt() / amp.abs().max(1e-300);
    let h = stationary::default_step(e_r).min(delta_e / 100.0);
    let d = shell_delays(p, e_r, Direction::FromLeft, Some(h))?;
    let tau_peak = d.eisenbud_wigner();
    Ok(ResonanceFit { e_r, delta_e, amplitude: amp, background_phase: d.s.alpha_t(), tau_peak, ratio: tau_peak * delta_e, quality })
}

// ---------------------------------------------------------------------
// General conditional fuzzy definition

/// Scattering system with an on-shell S-matrix and sojourn matrices.
pub trait OnShellSystem {
    fn channels(&self) -> usize;
    /// Outgoing (rows) by incoming (columns).
    fn s_matrix(&self, e: f64) -> Result<DMatrix<C>, SojournError>;
    /// On-shell sojourn matrices over incoming channels, one per region.
    fn sojourn_matrices(&self, e: f64, regions: &[Region]) -> Result<Vec<DMatrix<C>>, SojournError>;
    /// Outgoing channels selected by the condition.
    fn outgoing_mask(&self, condition: &Condition, incoming: usize) -> Result<Vec<bool>, SojournError>;
}

/// Full-line scattering; channel 0 is the wave from the left (outgoing
/// to the right), channel 1 the wave from the right.
pub struct LineSystem {
    pub potential: Potential,
}

impl LineSystem {
    pub fn channel_of(dir: Direction) -> usize {
        match dir {
            Direction::FromLeft => 0,
            Direction::FromRight => 1,
        }
    }
}

impl OnShellSystem for LineSystem {
    fn channels(&self) -> usize {
        2
    }

    fn s_matrix(&self, e: f64) -> Result<DMatrix<C>, SojournError> {
        let s = stationary::s_matrix(&self.potential, e)?.as_array();
        Ok(DMatrix::from_fn(2, 2, |i, j| s[i][j]))
    }

    fn sojourn_matrices(&self, e: f64, regions: &[Region]) -> Result<Vec<DMatrix<C>>, SojournError> {
        let plus = stationary::line_state(&self.potential, e, Direction::FromLeft)?;
        let minus = stationary::line_state(&self.potential, e, Direction::FromRight)?;
        let km = kmax_of(&self.potential, e);
        Ok(regions.iter().map(|r| line_matrix_from(&plus, &minus, km, r)).collect())
    }

    fn outgoing_mask(&self, condition: &Condition, incoming: usize) -> Result<Vec<bool>, SojournError> {
        // outgoing channel 0 moves right, 1 moves left
        let right = match (condition, incoming) {
            (Condition::None, _) => return Ok(vec![true, true]),
            (Condition::Transmit, 0) | (Condition::ReflectRight, 1) => true,
            (Condition::Transmit, 1) | (Condition::ReflectLeft, 0) => false,
            (Condition::ReflectLeft, 1) | (Condition::ReflectRight, 0) => return Ok(vec![false, false]),
            (Condition::Channels(c), _) => return Ok((0..2).map(|i| c.contains(&i)).collect()),
            _ => return Err(invalid(format!("condition {} does not apply to line scattering", condition.name()))),
        };
        Ok(vec![right, !right])
    }
}

/// Pseudo conditional sojourn times Re <S^dag F S T(B_r)> / ||F S phi||^2
/// for every region, and the condition probability.
pub fn pseudo_conditional_sojourn<S: OnShellSystem + ?Sized>(
    sys: &S,
    inc: &Incoming,
    channel: usize,
    condition: &Condition,
    regions: &[Region],
) -> Result<(Vec<f64>, f64), SojournError> {
    let mask = sys.outgoing_mask(condition, channel)?;
    let mut num = vec![0.0; regions.len()];
    let mut den = 0.0;
    for (&e, &w) in inc.energies.iter().zip(&inc.weights) {
        let s = sys.s_matrix(e)?;
        let mut fs = s.clone();
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                fs.row_mut(i).fill(C0);
            }
        }
        let g = s.adjoint() * fs;
        den += w * g[(channel, channel)].re;
        let ts = sys.sojourn_matrices(e, regions)?;
        for (n, t) in num.iter_mut().zip(&ts) {
            let row = g.row(channel);
            let col = t.column(channel);
            let v: C = row.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            *n += w * v.re;
        }
    }
    if den < CONDITION_THRESHOLD {
        return Err(SojournError::ConditionNeverSatisfied(den));
    }
    Ok((num.into_iter().map(|n| n / den).collect(), den))
}

/// Local pseudo conditional fuzzy delay T~(B_r|F) - f(r, rho) lim T~/f over
/// the schedule, with the slope fitted over the decade above the largest
/// radius.
pub fn general_conditional_fuzzy_delay<S: OnShellSystem + ?Sized>(
    sys: &S,
    inc: &Incoming,
    channel: usize,
    condition: &Condition,
    regions: &[Region],
    ff_points: usize,
) -> Result<DelayResult, SojournError> {
    if regions.is_empty() {
        return Err(invalid("empty region schedule"));
    }
    let last = *regions.last().unwrap();
    let r_lo = regions.iter().map(|r| r.r()).fold(0.0, f64::max);
    let rs = decade(r_lo, ff_points);
    let dec: Vec<Region> = rs.iter().map(|&r| scaled_region(&last, r)).collect();
    let mut all = regions.to_vec();
    all.extend_from_slice(&dec);
    let (vals, prob) = pseudo_conditional_sojourn(sys, inc, channel, condition, &all)?;
    let (tv, dv) = vals.split_at(regions.len());
    let mut cache = dec.iter().zip(dv);
    let slope = free_flight_slope(|_| Ok(*cache.next().unwrap().1), &last, r_lo, ff_points)?.slope;
    let table: Vec<DelayRow> = regions
        .iter()
        .zip(tv)
        .map(|(reg, &t)| {
            let reference = reg.normalizer() * slope;
            DelayRow { r: reg.r(), rho: reg.rho(), interaction: t, reference, delay: t - reference }
        })
        .collect();
    let (value, residual, oscillation) = if inc.is_fixed() && last.is_sharp() {
        let k = wavenumber(inc.energies[0]);
        let osc = oscillation_over_last_period(k, &last, |reg| {
            let (v, _) = pseudo_conditional_sojourn(sys, inc, channel, condition, std::slice::from_ref(reg))?;
            Ok(v[0] - reg.normalizer() * slope)
        })?;
        (osc.midpoint, osc.fit_residual, Some(osc))
    } else {
        let (v, r) = table_limit(&table);
        (v, r, None)
    };
    Ok(DelayResult {
        value,
        reference: Some(Reference::FreeFlight),
        condition: condition.clone(),
        origin: last.center,
        fuzzy: fuzzy_shape(regions),
        table,
        residual,
        probability: prob,
        oscillation,
        slope: Some(slope),
    })
}

/// Two orders of the spatial and monoenergetic limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutingCheck {
    /// Fixed energy first, then the large-region value.
    pub monoenergetic_first: f64,
    /// Large-region value for narrowing packets, extrapolated to zero width.
    pub spatial_first: f64,
    pub difference: f64,
}

/// Compares the two orders of limits for the general definition. `sigmas`
/// are the packet widths (standard deviation of |phi(E)|^2) of the
/// narrowing sequence.
pub fn commuting_limits_check<S: OnShellSystem + ?Sized>(
    sys: &S,
    e: f64,
    direction: Direction,
    channel: usize,
    condition: &Condition,
    regions: &[Region],
    sigmas: &[f64],
    ff_points: usize,
) -> Result<CommutingCheck, SojournError> {
    if sigmas.len() < 2 {
        return Err(invalid("need at least two packet widths"));
    }
    let mono = general_conditional_fuzzy_delay(sys, &Incoming::fixed(e, direction), channel, condition, regions, ff_points)?.value;
    let tail = &regions[regions.len().saturating_sub(2)..];
    let mut xs = Vec::with_capacity(sigmas.len());
    let mut ys = Vec::with_capacity(sigmas.len());
    for &sg in sigmas {
        let inc = Incoming::gaussian(e, sg, 41, direction)?;
        let d = general_conditional_fuzzy_delay(sys, &inc, channel, condition, tail, ff_points)?;
        xs.push(sg * sg);
        ys.push(d.value);
    }
    let spatial = numeric::linear_fit(&xs, &ys).intercept;
    Ok(CommutingCheck { monoenergetic_first: mono, spatial_first: spatial, difference: (mono - spatial).abs() })
}

/// Sharp regions of the given radii.
pub fn sharp_schedule(rs: &[f64], center: f64) -> Vec<Region> {
    rs.iter().map(|&r| Region::sharp(r).centered(center)).collect()
}

/// Fuzzy regions with rho = ratio * r.
pub fn fuzzy_schedule(rs: &[f64], ratio: f64, shape: Shape, center: f64) -> Result<Vec<Region>, SojournError> {
    rs.iter()
        .map(|&r| {
            crate::model::FuzzyProfile::new(r, ratio * r, shape)
                .map(|f| Region::fuzzy(f).centered(center))
                .map_err(|e| invalid(e.to_string()))
        })
        .collect()
}

/// Fixed r with a sweep of rho.
pub fn rho_sweep(r: f64, rhos: &[f64], shape: Shape, center: f64) -> Result<Vec<Region>, SojournError> {
    rhos.iter()
        .map(|&rho| crate::model::FuzzyProfile::new(r, rho, shape).map(|f| Region::fuzzy(f).centered(center)).map_err(|e| invalid(e.to_string())))
        .collect()
}
