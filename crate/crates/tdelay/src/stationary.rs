//! Stationary scattering on the full line and the half line.
//!
//! Piecewise-constant potentials are solved with exact segment transfer
//! matrices; anything else goes through Numerov.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::model::{wavenumber, Direction, Geometry, Potential, SpatialGrid};
use crate::numeric;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Numerov samples per shortest local wavelength.
const POINTS_PER_WAVELENGTH: f64 = 400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StationaryError {
    #[error("energy must be positive, got {0}")]
    NonPositiveEnergy(f64),
    #[error("grid [{lo}, {hi}] does not cover the support [{a}, {b}]")]
    GridTooShort { lo: f64, hi: f64, a: f64, b: f64 },
    #[error("unitarity defect {0:.3e} exceeds 1e-6")]
    Unitarity(f64),
    #[error("phase jump of {jump:.3} rad near E = {energy}; use a step smaller than {h}")]
    PhaseJump { energy: f64, h: f64, jump: f64 },
    #[error("vanishing amplitude at E = {0}; precision lost in forbidden region")]
    PrecisionLost(f64),
    #[error("wrong geometry: {0}")]
    Geometry(&'static str),
}

#[derive(Clone, Debug)]
struct SegmentState {
    a: f64,
    b: f64,
    q: Complex64,
    psi: Complex64,
    dpsi: Complex64,
}

impl SegmentState {
    fn eval(&self, x: f64) -> Complex64 {
        let d = x - self.a;
        let (c, s) = cos_sinc(self.q, d);
        self.psi * c + self.dpsi * s
    }
}

/// cos(q d) and sin(q d)/q.
fn cos_sinc(q: Complex64, d: f64) -> (Complex64, Complex64) {
    let z = q * d;
    if z.norm() < 1e-6 {
        let z2 = z * z;
        (C1 - z2 * 0.5, (C1 - z2 / 6.0) * d)
    } else {
        (z.cos(), z.sin() / q)
    }
}

#[derive(Clone, Debug)]
enum Interior {
    None,
    Segments(Vec<SegmentState>),
    Pieces(Vec<Piece>),
}

impl Interior {
    fn eval(&self, x: f64) -> Complex64 {
        match self {
            Interior::None => C0,
            Interior::Segments(segs) => {
                let i = segs.partition_point(|s| s.b < x).min(segs.len() - 1);
                segs[i].eval(x)
            }
            Interior::Pieces(ps) => {
                let i = ps.partition_point(|p| p.end() < x).min(ps.len() - 1);
                numeric::lagrange_uniform(&ps[i].psi, ps[i].x0, ps[i].h, x, 3)
            }
        }
    }

    fn scale(&mut self, f: Complex64) {
        match self {
            Interior::None => {}
            Interior::Segments(segs) => {
                for s in segs {
                    s.psi *= f;
                    s.dpsi *= f;
                }
            }
            Interior::Pieces(ps) => {
                for v in ps.iter_mut().flat_map(|p| p.psi.iter_mut()) {
                    *v *= f;
                }
            }
        }
    }
}

/// Matching data of a stationary state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Asymptotics {
    /// psi = a e^{ikx} + b e^{-ikx} for x < lo (`left`) and for x > hi
    /// (`right`).
    Line { lo: f64, hi: f64, left: (Complex64, Complex64), right: (Complex64, Complex64) },
    /// u = e^{i delta} (j_l(ks) cos delta - y_l(ks) sin delta) for s >= edge,
    /// and u = 0 for s < core.
    Radial { l: u32, delta: f64, core: f64, edge: f64 },
}

#[derive(Clone, Debug)]
pub struct StationaryState {
    pub energy: f64,
    pub k: f64,
    pub direction: Option<Direction>,
    pub grid: SpatialGrid,
    pub values: Vec<Complex64>,
    pub asymptotics: Asymptotics,
    interior: Interior,
    breaks: Vec<f64>,
    bounded: bool,
}

impl StationaryState {
    /// True when the state was built for a finite sampling grid; regions
    /// must then stay inside it.
    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn psi(&self, x: f64) -> Complex64 {
        let k = self.k;
        match self.asymptotics {
            Asymptotics::Line { lo, hi, left, right } => {
                let pw = |(a, b): (Complex64, Complex64)| a * Complex64::from_polar(1.0, k * x) + b * Complex64::from_polar(1.0, -k * x);
                if x <= lo {
                    pw(left)
                } else if x >= hi {
                    pw(right)
                } else {
                    self.interior.eval(x)
                }
            }
            Asymptotics::Radial { l, delta, core, edge } => {
                if x < core {
                    C0
                } else if x >= edge {
                    let (j, y) = numeric::riccati_jy(l, k * x);
                    Complex64::from_polar(1.0, delta) * (j * delta.cos() - y * delta.sin())
                } else {
                    self.interior.eval(x)
                }
            }
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self.asymptotics {
            Asymptotics::Radial { delta, .. } => Some(delta),
            _ => None,
        }
    }

    /// Points where psi'' may jump (potential kinks and matching edges).
    pub fn breakpoints(&self) -> &[f64] {
        &self.breaks
    }

    pub fn is_radial(&self) -> bool {
        matches!(self.asymptotics, Asymptotics::Radial { .. })
    }

    /// Largest |psi'' + 2(E - V) psi| relative to max |psi| over grid points
    /// at least three spacings from any kink of V.
    pub fn residual(&self, p: &Potential) -> f64 {
        let g = self.grid;
        let h = g.dx();
        let scale = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        let mut worst: f64 = 0.0;
        for i in 2..g.n_points.saturating_sub(2) {
            let x = g.x(i);
            if self.breaks.iter().any(|b| (b - x).abs() < 3.0 * h) {
                continue;
            }
            let v = &self.values;
            let d2 = (-v[i + 2] + v[i + 1] * 16.0 - v[i] * 30.0 + v[i - 1] * 16.0 - v[i - 2]) / (12.0 * h * h);
            let mut q = 2.0 * (self.energy - p.eval(x));
            if let Asymptotics::Radial { l, .. } = self.asymptotics {
                q -= (l * (l + 1)) as f64 / (x * x);
            }
            worst = worst.max((d2 + v[i] * q).norm() / scale);
        }
        worst
    }
}

struct LineCore {
    interior: Interior,
    lo: f64,
    hi: f64,
    left: (Complex64, Complex64),
    right: (Complex64, Complex64),
}

fn plane_decompose(k: f64, x: f64, psi: Complex64, dpsi: Complex64) -> (Complex64, Complex64) {
    let ik = I * k;
    let a = (ik * psi + dpsi) * Complex64::from_polar(1.0, -k * x) / (2.0 * ik);
    let b = (ik * psi - dpsi) * Complex64::from_polar(1.0, k * x) / (2.0 * ik);
    (a, b)
}

fn check_energy(e: f64) -> Result<(), StationaryError> {
    if !(e > 0.0) || !e.is_finite() {
        Err(StationaryError::NonPositiveEnergy(e))
    } else {
        Ok(())
    }
}

fn numerov_step(p: &Potential, e: f64, lo: f64, hi: f64, extra: f64) -> f64 {
    let (vmin, vmax) = p.range();
    let qmax = 2.0 * (e - vmin).abs().max((vmax - e).abs()).max(e) + extra;
    let lam = 2.0 * PI / qmax.sqrt();
    (lam / POINTS_PER_WAVELENGTH).min((hi - lo) / 400.0)
}

fn line_core(p: &Potential, e: f64, dir: Direction) -> Result<LineCore, StationaryError> {
    check_energy(e)?;
    if p.geometry != Geometry::Line {
        return Err(StationaryError::Geometry("full-line solver needs a line potential"));
    }
    let k = wavenumber(e);
    let (lo, hi) = match p.support() {
        None => {
            let (left, right) = match dir {
                Direction::FromLeft => ((C1, C0), (C1, C0)),
                Direction::FromRight => ((C0, C1), (C0, C1)),
            };
            return Ok(LineCore { interior: Interior::None, lo: 0.0, hi: 0.0, left, right });
        }
        Some(s) => s,
    };
    let core = match p.segments() {
        Some(segs) => transfer_core(&segs, k, e, lo, hi, dir),
        None => numerov_line_core(p, k, e, lo, hi, dir),
    }?;
    let t = match dir {
        Direction::FromLeft => core.right.0,
        Direction::FromRight => core.left.1,
    };
    if !t.norm().is_finite() || t.norm() < 1e-280 {
        return Err(StationaryError::PrecisionLost(e));
    }
    Ok(core)
}

fn transfer_core(segs: &[crate::model::Segment], k: f64, e: f64, lo: f64, hi: f64, dir: Direction) -> Result<LineCore, StationaryError> {
    let qs: Vec<Complex64> = segs.iter().map(|s| Complex64::new(2.0 * (e - s.v), 0.0).sqrt()).collect();
    let mut states: Vec<SegmentState> = segs
        .iter()
        .zip(&qs)
        .map(|(s, &q)| SegmentState { a: s.a, b: s.b, q, psi: C0, dpsi: C0 })
        .collect();
    match dir {
        Direction::FromLeft => {
            let mut psi = Complex64::from_polar(1.0, k * hi);
            let mut dpsi = I * k * psi;
            for st in states.iter_mut().rev() {
                let (c, s) = cos_sinc(st.q, st.b - st.a);
                let qs = st.q * st.q * s;
                let pa = c * psi - s * dpsi;
                let da = qs * psi + c * dpsi;
                psi = pa;
                dpsi = da;
                st.psi = psi;
                st.dpsi = dpsi;
            }
            let (a, b) = plane_decompose(k, lo, psi, dpsi);
            let f = C1 / a;
            let mut interior = Interior::Segments(states);
            interior.scale(f);
            Ok(LineCore { interior, lo, hi, left: (C1, b * f), right: (f, C0) })
        }
        Direction::FromRight => {
            let mut psi = Complex64::from_polar(1.0, -k * lo);
            let mut dpsi = -I * k * psi;
            for st in states.iter_mut() {
                st.psi = psi;
                st.dpsi = dpsi;
                let (c, s) = cos_sinc(st.q, st.b - st.a);
                let qs = st.q * st.q * s;
                let pb = c * psi + s * dpsi;
                let db = -qs * psi + c * dpsi;
                psi = pb;
                dpsi = db;
            }
            let (a, b) = plane_decompose(k, hi, psi, dpsi);
            let f = C1 / b;
            let mut interior = Interior::Segments(states);
            interior.scale(f);
            Ok(LineCore { interior, lo, hi, left: (C0, f), right: (a * f, C1) })
        }
    }
}

#[derive(Clone, Debug)]
struct Piece {
    x0: f64,
    h: f64,
    psi: Vec<Complex64>,
}

impl Piece {
    fn end(&self) -> f64 {
        self.x0 + (self.psi.len() - 1) as f64 * self.h
    }

    /// Same samples seen in the mirrored coordinate -x.
    fn mirrored(mut self) -> Piece {
        self.x0 = -self.end();
        self.psi.reverse();
        self
    }
}

const MIN_NODES: usize = 16;

/// Breakpoints strictly inside (lo, hi), bracketed by the ends.
pub(crate) fn cut_list(lo: f64, hi: f64, inner: &[f64]) -> Vec<f64> {
    let tol = 1e-12 * (1.0 + hi.abs() + lo.abs());
    let mut cuts = vec![lo];
    for &b in inner {
        if b > lo + tol && b < hi - tol && b > cuts[cuts.len() - 1] + tol {
            cuts.push(b);
        }
    }
    cuts.push(hi);
    cuts
}

/// Numerov on consecutive intervals between `cuts` (increasing), in the
/// direction of increasing coordinate.  At every cut the method restarts
/// from a one-sided derivative and a Taylor step, so jumps of q or q'
/// cost nothing.  `q` is 2(E - V_eff) along the travel coordinate; it is
/// only sampled strictly inside each interval or at one-sided limits.
/// `init(h)` returns (u0, u1, f0 u0) for the first interval.
fn numerov_pieces(cuts: &[f64], h0: f64, q: &dyn Fn(f64) -> f64, init: &dyn Fn(f64) -> (Complex64, Complex64, Complex64)) -> Vec<Piece> {
    let mut pieces: Vec<Piece> = Vec::with_capacity(cuts.len() - 1);
    for (m, w) in cuts.windows(2).enumerate() {
        let (ya, yb) = (w[0], w[1]);
        let n = (((yb - ya) / h0).ceil() as usize).max(MIN_NODES);
        let h = (yb - ya) / n as f64;
        let eps = 1e-9 * h;
        let node = |j: usize| if j == 0 { ya + eps } else if j == n { yb - eps } else { ya + j as f64 * h };
        let qs: Vec<f64> = (0..=n).map(|j| q(node(j))).collect();
        let f = |j: usize| 1.0 + h * h * qs[j] / 12.0;
        let mut u = vec![C0; n + 1];
        let fu0;
        if m == 0 {
            let (u0, u1, f0) = init(h);
            u[0] = u0;
            u[1] = u1;
            fu0 = f0;
        } else {
            let prev = &pieces[m - 1];
            let pu = &prev.psi;
            let k = pu.len() - 1;
            let c = [147.0, -360.0, 450.0, -400.0, 225.0, -72.0, 10.0];
            let d: Complex64 = c.iter().enumerate().map(|(i, &ci)| pu[k - i] * ci).sum::<Complex64>() / (60.0 * prev.h);
            let y = pu[k];
            let dl = 0.25 * h;
            let (q0, q1, q2) = (qs[0], q(ya + dl), q(ya + 2.0 * dl));
            let dq = (-3.0 * q0 + 4.0 * q1 - q2) / (2.0 * dl);
            let ddq = (q0 - 2.0 * q1 + q2) / (dl * dl);
            u[0] = y;
            u[1] = y + d * h - y * (0.5 * h * h * q0) - (y * dq + d * q0) * (h * h * h / 6.0)
                + (y * (q0 * q0 - ddq) - d * (2.0 * dq)) * (h.powi(4) / 24.0);
            fu0 = u[0] * f(0);
        }
        for j in 1..n {
            let back = if j == 1 { fu0 } else { u[j - 1] * f(j - 1) };
            u[j + 1] = (u[j] * (2.0 * (1.0 - 5.0 * h * h * qs[j] / 12.0)) - back) / f(j + 1);
            if u[j + 1].norm() > 1e200 {
                for v in u[..=j + 1].iter_mut() {
                    *v *= 1e-200;
                }
                for pc in pieces.iter_mut() {
                    for v in pc.psi.iter_mut() {
                        *v *= 1e-200;
                    }
                }
            }
        }
        pieces.push(Piece { x0: ya, h, psi: u });
    }
    pieces
}

fn numerov_line_core(p: &Potential, k: f64, e: f64, lo: f64, hi: f64, dir: Direction) -> Result<LineCore, StationaryError> {
    let h0 = numerov_step(p, e, lo, hi, 0.0);
    let quarter = 0.5 * PI / k;
    let mut inner = vec![lo];
    inner.extend(p.breakpoints());
    inner.push(hi);
    let cuts = cut_list(lo - quarter, hi + quarter, &inner);
    let plane = |x: f64, sign: f64| Complex64::from_polar(1.0, sign * k * x);
    // u = A e^{ikx} + B e^{-ikx} at the two ends of a free interval
    let solve2 = |xa: f64, xb: f64, pa: Complex64, pb: Complex64| {
        let (ea, eb) = (plane(xa, 1.0), plane(xb, 1.0));
        let det = ea / eb - eb / ea;
        ((pa / eb - pb / ea) / det, (pb * ea - pa * eb) / det)
    };
    match dir {
        Direction::FromLeft => {
            let ycuts: Vec<f64> = cuts.iter().rev().map(|x| -x).collect();
            let y0 = ycuts[0];
            let q = |y: f64| 2.0 * (e - p.eval(-y));
            let init = |h: f64| {
                let f0 = 1.0 + h * h * 2.0 * e / 12.0;
                (plane(-y0, 1.0), plane(-(y0 + h), 1.0), plane(-y0, 1.0) * f0)
            };
            let pieces: Vec<Piece> = numerov_pieces(&ycuts, h0, &q, &init).into_iter().rev().map(Piece::mirrored).collect();
            let first = &pieces[0];
            let (a, b) = solve2(first.x0, first.end(), first.psi[0], first.psi[first.psi.len() - 1]);
            let fa = C1 / a;
            if !fa.norm().is_finite() {
                return Err(StationaryError::PrecisionLost(e));
            }
            let last = pieces.last().unwrap();
            let t = last.psi[last.psi.len() - 1] * fa * plane(last.end(), -1.0);
            let mut interior = Interior::Pieces(pieces);
            interior.scale(fa);
            Ok(LineCore { interior, lo, hi, left: (C1, b * fa), right: (t, C0) })
        }
        Direction::FromRight => {
            let x0 = cuts[0];
            let q = |x: f64| 2.0 * (e - p.eval(x));
            let init = |h: f64| {
                let f0 = 1.0 + h * h * 2.0 * e / 12.0;
                (plane(x0, -1.0), plane(x0 + h, -1.0), plane(x0, -1.0) * f0)
            };
            let pieces = numerov_pieces(&cuts, h0, &q, &init);
            let last = pieces.last().unwrap();
            let (a, b) = solve2(last.x0, last.end(), last.psi[0], last.psi[last.psi.len() - 1]);
            let fb = C1 / b;
            if !fb.norm().is_finite() {
                return Err(StationaryError::PrecisionLost(e));
            }
            let t = pieces[0].psi[0] * fb * plane(x0, 1.0);
            let mut interior = Interior::Pieces(pieces);
            interior.scale(fb);
            Ok(LineCore { interior, lo, hi, left: (C0, t), right: (a * fb, C1) })
        }
    }
}

/// Scattering solution psi_+ (from the left) or psi_- (from the right)
/// sampled on `grid`.
pub fn solve_full_line(p: &Potential, e: f64, grid: &SpatialGrid, dir: Direction) -> Result<StationaryState, StationaryError> {
    let core = line_core(p, e, dir)?;
    if let Some((a, b)) = p.support() {
        if grid.x_min > a || grid.x_max < b {
            return Err(StationaryError::GridTooShort { lo: grid.x_min, hi: grid.x_max, a, b });
        }
    }
    Ok(state_from_core(p, e, core, *grid, dir))
}

fn state_from_core(p: &Potential, e: f64, core: LineCore, grid: SpatialGrid, dir: Direction) -> StationaryState {
    let mut breaks = p.breakpoints();
    breaks.extend([core.lo, core.hi]);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut st = StationaryState {
        energy: e,
        k: wavenumber(e),
        direction: Some(dir),
        grid,
        values: vec![],
        asymptotics: Asymptotics::Line { lo: core.lo, hi: core.hi, left: core.left, right: core.right },
        interior: core.interior,
        breaks,
        bounded: true,
    };
    st.values = grid.points().iter().map(|&x| st.psi(x)).collect();
    st
}

/// Stationary state without a sampling grid; psi(x) is still available
/// everywhere through the matching data.
pub fn line_state(p: &Potential, e: f64, dir: Direction) -> Result<StationaryState, StationaryError> {
    let core = line_core(p, e, dir)?;
    let grid = SpatialGrid { x_min: core.lo, x_max: core.hi.max(core.lo + 1e-9), n_points: 2 };
    let mut st = state_from_core(p, e, core, grid, dir);
    st.bounded = false;
    Ok(st)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SMatrix1D {
    pub energy: f64,
    pub t: Complex64,
    pub l: Complex64,
    pub r: Complex64,
}

impl SMatrix1D {
    pub fn alpha_t(&self) -> f64 {
        self.t.arg()
    }
    pub fn alpha_l(&self) -> f64 {
        self.l.arg()
    }
    pub fn alpha_r(&self) -> f64 {
        self.r.arg()
    }
    pub fn transmission(&self) -> f64 {
        self.t.norm_sqr()
    }
    pub fn reflection(&self) -> f64 {
        self.l.norm_sqr()
    }
    /// Largest violation of the unitarity relations.
    pub fn unitarity_defect(&self) -> f64 {
        let a = (self.l.norm_sqr() + self.t.norm_sqr() - 1.0).abs();
        let b = (self.r.norm_sqr() + self.t.norm_sqr() - 1.0).abs();
        let c = (self.t.conj() * self.l + self.r.conj() * self.t).norm();
        a.max(b).max(c)
    }
    /// Outgoing amplitudes for an incoming unit wave from `dir`:
    /// (transmitted, reflected).
    pub fn channel(&self, dir: Direction) -> (Complex64, Complex64) {
        match dir {
            Direction::FromLeft => (self.t, self.l),
            Direction::FromRight => (self.t, self.r),
        }
    }
    /// Matrix over outgoing (rows) and incoming (columns) channels,
    /// ordered (+, -).
    pub fn as_array(&self) -> [[Complex64; 2]; 2] {
        [[self.t, self.r], [self.l, self.t]]
    }
}

/// Transmission from the right used for the reciprocity check.
pub fn s_matrix_parts(p: &Potential, e: f64) -> Result<(SMatrix1D, Complex64), StationaryError> {
    let plus = line_core(p, e, Direction::FromLeft)?;
    let minus = line_core(p, e, Direction::FromRight)?;
    let s = SMatrix1D { energy: e, t: plus.right.0, l: plus.left.1, r: minus.right.0 };
    Ok((s, minus.left.1))
}

pub fn s_matrix(p: &Potential, e: f64) -> Result<SMatrix1D, StationaryError> {
    let (s, t_minus) = s_matrix_parts(p, e)?;
    let defect = s.unitarity_defect().max((s.t - t_minus).norm());
    if defect > 1e-6 {
        return Err(StationaryError::Unitarity(defect));
    }
    Ok(s)
}

/// S-matrices along a sweep with continuously unwrapped phases
/// (alpha_T, alpha_L, alpha_R).
pub fn s_matrix_sweep(p: &Potential, energies: &[f64]) -> Result<(Vec<SMatrix1D>, [Vec<f64>; 3]), StationaryError> {
    let s: Vec<SMatrix1D> = energies.iter().map(|&e| s_matrix(p, e)).collect::<Result<_, _>>()?;
    let tw = numeric::unwrap(&s.iter().map(|m| m.alpha_t()).collect::<Vec<_>>(), 2.0 * PI);
    let lw = numeric::unwrap(&s.iter().map(|m| m.alpha_l()).collect::<Vec<_>>(), 2.0 * PI);
    let rw = numeric::unwrap(&s.iter().map(|m| m.alpha_r()).collect::<Vec<_>>(), 2.0 * PI);
    Ok((s, [tw, lw, rw]))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseDerivative {
    pub value: f64,
    pub error: f64,
}

/// d arg(amp)/dE by central differences at h and h/2 with Richardson
/// extrapolation.
pub fn phase_derivative<F>(mut amp: F, e: f64, h: f64) -> Result<PhaseDerivative, StationaryError>
where
    F: FnMut(f64) -> Result<Complex64, StationaryError>,
{
    let mut samples = [C0; 5];
    for (i, x) in derivative_nodes(e, h).into_iter().enumerate() {
        samples[i] = amp(x)?;
    }
    phase_derivative_from(&samples, e, h)
}

/// Energies e - h, e - h/2, e, e + h/2, e + h used by the phase derivative.
pub fn derivative_nodes(e: f64, h: f64) -> [f64; 5] {
    [e - h, e - 0.5 * h, e, e + 0.5 * h, e + h]
}

/// Phase derivative from amplitudes already sampled at `derivative_nodes`.
pub fn phase_derivative_from(samples: &[Complex64; 5], e: f64, h: f64) -> Result<PhaseDerivative, StationaryError> {
    let es = derivative_nodes(e, h);
    let mut ph = [0.0; 5];
    for (i, a) in samples.iter().enumerate() {
        if a.norm() == 0.0 || !a.norm().is_finite() {
            return Err(StationaryError::PrecisionLost(es[i]));
        }
        ph[i] = a.arg();
    }
    let ph = numeric::unwrap(&ph, 2.0 * PI);
    let jump = ph.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
    let d1 = (ph[4] - ph[0]) / (2.0 * h);
    let d2 = (ph[3] - ph[1]) / h;
    let value = (4.0 * d2 - d1) / 3.0;
    let error = (value - d2).abs();
    if jump > 0.5 * PI || error > 1e-3 * value.abs() {
        // An amplitude passing close to zero swings its phase while staying
        // smooth; Im(a'/a) from complex differences is then well resolved.
        let s = samples;
        let c1 = (s[4] - s[0]) / (2.0 * h);
        let c2 = (s[3] - s[1]) / h;
        let da = (4.0 * c2 - c1) / 3.0;
        if (da - c2).norm() <= 1e-3 * da.norm() {
            let a = s[2];
            let value = (a.conj() * da).im / a.norm_sqr();
            return Ok(PhaseDerivative { value, error: (a.conj() * (da - c2)).im.abs() / a.norm_sqr() });
        }
        if jump > 0.5 * PI {
            return Err(StationaryError::PhaseJump { energy: e, h, jump });
        }
    }
    Ok(PhaseDerivative { value, error })
}

/// Default energy step for phase derivatives.
pub fn default_step(e: f64) -> f64 {
    (1e-3 * e).clamp(1e-5, 1e-3)
}

struct RadialCore {
    interior: Interior,
    delta: f64,
    core: f64,
    edge: f64,
}

fn radial_core(p: &Potential, e: f64) -> Result<RadialCore, StationaryError> {
    check_energy(e)?;
    let l = match p.geometry {
        Geometry::Radial { l, .. } => l,
        Geometry::Line => return Err(StationaryError::Geometry("radial solver needs a radial potential")),
    };
    let k = wavenumber(e);
    let core = p.hard_core_radius().unwrap_or(0.0);
    let edge = p.support().map(|(_, b)| b.max(core)).unwrap_or(core);
    if p.support().is_none() || edge <= core {
        // free waves outside a hard core
        let delta = if core > 0.0 {
            let (j, y) = numeric::riccati_jy(l, k * core);
            fold_delta(j.atan2(y)).0
        } else {
            0.0
        };
        return Ok(RadialCore { interior: Interior::None, delta, core, edge: core });
    }
    let h0 = numerov_step(p, e, core, edge, 0.0);
    let s_match = edge + 6.0 / k;
    let quarter = 0.5 * PI / k;
    let mut inner = p.breakpoints();
    inner.extend([edge, s_match - quarter]);
    inner.sort_by(f64::total_cmp);
    let cuts = cut_list(core, s_match, &inner);
    let cent = (l * (l + 1)) as f64;
    let q = |s: f64| 2.0 * (e - p.eval(s)) - cent / (s * s);
    let init = |h: f64| {
        if core > 0.0 || l == 0 {
            (C0, Complex64::new(h, 0.0), C0)
        } else {
            let q0 = 2.0 * (e - p.eval(0.5 * h));
            let u1 = h.powi(l as i32 + 1) * (1.0 - q0 * h * h / (2.0 * (2 * l + 3) as f64));
            // limit of (1 + h^2 q / 12) u at the origin
            let fu0 = if l == 1 { -h * h / 6.0 } else { 0.0 };
            (C0, Complex64::new(u1, 0.0), Complex64::new(fu0, 0.0))
        }
    };
    let pieces = numerov_pieces(&cuts, h0, &q, &init);
    let last = pieces.last().unwrap();
    let (sa, sb) = (last.x0, last.end());
    let (ua, ub) = (last.psi[0].re, last.psi[last.psi.len() - 1].re);
    let (ja, ya) = numeric::riccati_jy(l, k * sa);
    let (jb, yb) = numeric::riccati_jy(l, k * sb);
    // u = alpha j + beta y at both nodes
    let det = ja * yb - jb * ya;
    let alpha = (ua * yb - ub * ya) / det;
    let beta = (ja * ub - jb * ua) / det;
    let (delta, sign) = fold_delta((-beta).atan2(alpha));
    let c = sign * alpha.hypot(beta);
    if !(c.abs() > 0.0) || !c.is_finite() {
        return Err(StationaryError::PrecisionLost(e));
    }
    let mut interior = Interior::Pieces(pieces);
    interior.scale(Complex64::from_polar(1.0, delta) / c);
    Ok(RadialCore { interior, delta, core, edge })
}

/// Maps delta into (-pi/2, pi/2]; returns the sign flip applied to the
/// amplitude.
fn fold_delta(d: f64) -> (f64, f64) {
    if d > 0.5 * PI {
        (d - PI, -1.0)
    } else if d <= -0.5 * PI {
        (d + PI, -1.0)
    } else {
        (d, 1.0)
    }
}

/// Regular radial solution u_l(E, s) sampled on `grid`, with its phase
/// shift.
pub fn solve_radial(p: &Potential, e: f64, grid: &SpatialGrid) -> Result<StationaryState, StationaryError> {
    let c = radial_core(p, e)?;
    if grid.x_max < c.edge {
        return Err(StationaryError::GridTooShort { lo: grid.x_min, hi: grid.x_max, a: 0.0, b: c.edge });
    }
    Ok(radial_state_from(p, e, c, *grid))
}

pub fn radial_state(p: &Potential, e: f64) -> Result<StationaryState, StationaryError> {
    let c = radial_core(p, e)?;
    let grid = SpatialGrid { x_min: 0.0, x_max: c.edge.max(1e-9), n_points: 2 };
    let mut st = radial_state_from(p, e, c, grid);
    st.bounded = false;
    Ok(st)
}

fn radial_state_from(p: &Potential, e: f64, c: RadialCore, grid: SpatialGrid) -> StationaryState {
    let mut breaks = p.breakpoints();
    breaks.extend([c.core, c.edge]);
    breaks.retain(|&b| b >= 0.0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut st = StationaryState {
        energy: e,
        k: wavenumber(e),
        direction: None,
        grid,
        values: vec![],
        asymptotics: Asymptotics::Radial { l: p.l(), delta: c.delta, core: c.core, edge: c.edge },
        interior: c.interior,
        breaks,
        bounded: true,
    };
    st.values = grid.points().iter().map(|&x| st.psi(x)).collect();
    st
}

pub fn phase_shift(p: &Potential, e: f64) -> Result<f64, StationaryError> {
    Ok(radial_core(p, e)?.delta)
}

/// e^{2 i delta}.
pub fn radial_s(p: &Potential, e: f64) -> Result<Complex64, StationaryError> {
    Ok(Complex64::from_polar(1.0, 2.0 * phase_shift(p, e)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseShiftTable {
    pub l: u32,
    pub energies: Vec<f64>,
    pub deltas: Vec<f64>,
}

/// Phase shifts along a sweep with branch jumps of pi removed.
pub fn phase_shift_table(p: &Potential, energies: &[f64]) -> Result<PhaseShiftTable, StationaryError> {
    let raw: Vec<f64> = energies.iter().map(|&e| phase_shift(p, e)).collect::<Result<_, _>>()?;
    Ok(PhaseShiftTable { l: p.l(), energies: energies.to_vec(), deltas: numeric::unwrap(&raw, PI) })
}
