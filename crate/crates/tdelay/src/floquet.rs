//! Sideband channels of a time-periodic radial potential.
//!
//! Channel mu carries the energy epsilon + mu omega: mu >= 0 is open,
//! mu < 0 closed.  Regular solutions are normalised so that, outside the
//! potential,
//!
//!   u_{mu rho}(s) = (A_{mu rho} h+(kappa_mu s) - delta_{mu rho} h-(kappa_mu s)) / 2i
//!
//! in open channels, which makes the static limit coincide with the
//! single-channel radial states (u = e^{i delta} sin(ks + delta) for l = 0).
//! Energies handed to the delay routines are total energies E of the
//! incoming channel; E = epsilon + m omega selects channel m.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::model::{PeriodicPotential, Region, SpatialGrid};
use crate::numeric;
use crate::sojourn::{self, Condition, DelayResult, DelayRow, Incoming, OnShellSystem, Reference, SojournError, CONDITION_THRESHOLD};
use crate::stationary::{self, derivative_nodes};

type C = Complex64;

const C0: C = Complex64::new(0.0, 0.0);
const I: C = Complex64::new(0.0, 1.0);

const POINTS_PER_WAVELENGTH: f64 = 800.0;
const MIN_NODES: usize = 16;
/// Largest growth e^GROWTH of the fastest closed channel between two
/// re-orthogonalisations.
const GROWTH: f64 = 4.0;
/// Evanescent buffer channels above the drive's highest harmonic.
pub const BUFFER: usize = 4;
/// Largest unitarity defect accepted by `floquet_s_matrix`.
pub const MAX_DEFECT: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FloquetError {
    #[error("quasi-energy {epsilon} outside (0, {omega})")]
    QuasiEnergy { epsilon: f64, omega: f64 },
    #[error("truncation n_max = {n_max} drops drive harmonics up to {needed}")]
    Truncation { n_max: usize, needed: usize },
    #[error("unitarity defect {defect:.3e} at n_max = {n_max}; increase n_max or refine the grid")]
    Unitarity { defect: f64, n_max: usize },
    #[error("grid [{lo}, {hi}] must start at s >= 0 and reach the edge of the potential at {edge}")]
    Grid { lo: f64, hi: f64, edge: f64 },
    #[error("outgoing channel {channel} outside the open channels 0..={n_max}")]
    Sideband { channel: i64, n_max: usize },
    #[error("matching failed at quasi-energy {0}")]
    Matching(f64),
    #[error(transparent)]
    Sojourn(#[from] SojournError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

impl From<FloquetError> for SojournError {
    fn from(e: FloquetError) -> SojournError {
        match e {
            FloquetError::Sojourn(s) => s,
            other => SojournError::Invalid(other.to_string()),
        }
    }
}

/// Incoming channel m and quasi-energy of a total energy e.
pub fn quasi_energy(e: f64, omega: f64) -> (usize, f64) {
    let m = (e / omega).floor().max(0.0);
    (m as usize, e - m * omega)
}

// ---------------------------------------------------------------------
// Coupled equations

struct Coupled<'a> {
    pp: &'a PeriodicPotential,
    eps: f64,
    n_max: usize,
    l: u32,
    cent: f64,
}

impl Coupled<'_> {
    fn dim(&self) -> usize {
        2 * self.n_max + 1
    }

    fn mu(&self, i: usize) -> i32 {
        i as i32 - self.n_max as i32
    }

    fn energy(&self, i: usize) -> f64 {
        self.eps + self.mu(i) as f64 * self.pp.omega
    }

    /// Q(s) = 2(E - V(s)) - l(l+1)/s^2, so that u'' = -Q u.
    fn q(&self, s: f64, centrifugal: bool) -> DMatrix<C> {
        let n = self.dim();
        let nm = self.n_max as i32;
        let comps: Vec<C> = (-2 * nm..=2 * nm).map(|d| self.pp.component(d, s)).collect();
        let cent = if centrifugal && self.cent > 0.0 { self.cent / (s * s) } else { 0.0 };
        DMatrix::from_fn(n, n, |i, j| {
            let d = i as i32 - j as i32;
            let mut v = comps[(d + 2 * nm) as usize] * -2.0;
            if i == j {
                v += 2.0 * self.energy(i) - cent;
            }
            v
        })
    }

    /// Largest local wavenumber squared over all channels.
    fn qmax(&self) -> f64 {
        let (vmin, vmax) = self.pp.base.range();
        let top = self.eps + self.n_max as f64 * self.pp.omega;
        let bottom = self.eps - self.n_max as f64 * self.pp.omega;
        let drive: f64 = (1..=self.pp.max_harmonic())
            .map(|n| {
                let s = self.pp.breakpoints();
                let probe = s.iter().copied().chain([0.5 * self.pp.support_radius()]).map(|x| self.pp.component(n, x).norm());
                probe.fold(0.0, f64::max)
            })
            .sum();
        2.0 * ((top - vmin).abs().max((vmax - bottom).abs()) + 2.0 * drive)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct MatPiece {
    s0: f64,
    h: f64,
    y: Vec<DMatrix<C>>,
}

impl MatPiece {
    fn end(&self) -> f64 {
        self.s0 + (self.y.len() - 1) as f64 * self.h
    }

    /// Six-point Lagrange interpolation between nodes.
    fn at(&self, s: f64) -> DMatrix<C> {
        let n = self.y.len();
        let x = (s - self.s0) / self.h;
        let j = (x.floor() as isize).clamp(0, n as isize - 1) as usize;
        let lo = j.saturating_sub(2).min(n - 6);
        let mut out = DMatrix::zeros(self.y[0].nrows(), self.y[0].ncols());
        for a in 0..6 {
            let mut w = 1.0;
            for b in 0..6 {
                if a != b {
                    w *= (x - (lo + b) as f64) / (a as f64 - b as f64);
                }
            }
            out += &self.y[lo + a] * C::new(w, 0.0);
        }
        out
    }
}

fn solve_lu(a: &DMatrix<C>, b: &DMatrix<C>) -> Option<DMatrix<C>> {
    a.clone().lu().solve(b)
}

/// Matrix Numerov on the intervals between `cuts`, restarting at each cut
/// from a one-sided derivative and a Taylor step.  The fundamental matrix
/// is re-orthogonalised every `every` steps; stored nodes follow the same
/// change of basis.  Returns the pieces and the derivative at the end.
fn propagate(c: &Coupled, cuts: &[f64], h0: f64, every: usize, core: f64) -> Result<(Vec<MatPiece>, DMatrix<C>), FloquetError> {
    let n = c.dim();
    let id = DMatrix::<C>::identity(n, n);
    let l = c.l as i32;
    let mut pieces: Vec<MatPiece> = Vec::with_capacity(cuts.len() - 1);
    let mut since = 0usize;
    for (m, w) in cuts.windows(2).enumerate() {
        let (ya, yb) = (w[0], w[1]);
        let steps = (((yb - ya) / h0).ceil() as usize).max(MIN_NODES);
        let h = (yb - ya) / steps as f64;
        let eps = 1e-9 * h;
        let node = |j: usize| if j == 0 { ya + eps } else if j == steps { yb - eps } else { ya + j as f64 * h };
        let qs: Vec<DMatrix<C>> = (0..=steps).map(|j| c.q(node(j), true)).collect();
        let hh = C::new(h * h / 12.0, 0.0);
        let a_of = |j: usize| &id + &qs[j] * hh;
        let mut u: Vec<DMatrix<C>> = Vec::with_capacity(steps + 1);
        let fu0;
        if m == 0 {
            u.push(DMatrix::zeros(n, n));
            if core > 0.0 || l == 0 {
                u.push(&id * C::new(h, 0.0));
                fu0 = DMatrix::zeros(n, n);
            } else {
                let q0 = c.q(0.5 * h, false);
                let f = h.powi(l + 1);
                u.push((&id - &q0 * C::new(h * h / (2.0 * (2 * l + 3) as f64), 0.0)) * C::new(f, 0.0));
                fu0 = if l == 1 { &id * C::new(-h * h / 6.0, 0.0) } else { DMatrix::zeros(n, n) };
            }
        } else {
            let prev = &pieces[m - 1];
            let pu = &prev.y;
            let k = pu.len() - 1;
            let cf = [147.0, -360.0, 450.0, -400.0, 225.0, -72.0, 10.0];
            let mut d = DMatrix::zeros(n, n);
            for (i, &ci) in cf.iter().enumerate() {
                d += &pu[k - i] * C::new(ci / (60.0 * prev.h), 0.0);
            }
            let y = pu[k].clone();
            let dl = 0.25 * h;
            let (q0, q1, q2) = (&qs[0], c.q(ya + dl, true), c.q(ya + 2.0 * dl, true));
            let dq = (q0 * C::new(-3.0, 0.0) + &q1 * C::new(4.0, 0.0) - &q2) * C::new(1.0 / (2.0 * dl), 0.0);
            let ddq = (q0 - &q1 * C::new(2.0, 0.0) + &q2) * C::new(1.0 / (dl * dl), 0.0);
            let r = |x: f64| C::new(x, 0.0);
            let u1 = &y + &d * r(h) - q0 * &y * r(0.5 * h * h) - (&dq * &y + q0 * &d) * r(h * h * h / 6.0)
                + ((q0 * q0 - &ddq) * &y - &dq * &d * r(2.0)) * r(h.powi(4) / 24.0);
            fu0 = a_of(0) * &y;
            u.push(y);
            u.push(u1);
        }
        for j in 1..steps {
            let back = if j == 1 { fu0.clone() } else { a_of(j - 1) * &u[j - 1] };
            let rhs = (&id - &qs[j] * C::new(5.0 * h * h / 12.0, 0.0)) * &u[j] * C::new(2.0, 0.0) - back;
            let next = solve_lu(&a_of(j + 1), &rhs).ok_or(FloquetError::Matching(c.eps))?;
            u.push(next);
            since += 1;
            if since >= every {
                since = 0;
                let mut stack = DMatrix::zeros(2 * n, n);
                stack.view_mut((0, 0), (n, n)).copy_from(&u[j]);
                stack.view_mut((n, 0), (n, n)).copy_from(&u[j + 1]);
                let r = stack.qr().r();
                let t = r.try_inverse().ok_or(FloquetError::Matching(c.eps))?;
                for v in u.iter_mut() {
                    *v = &*v * &t;
                }
                for pc in pieces.iter_mut() {
                    for v in pc.y.iter_mut() {
                        *v = &*v * &t;
                    }
                }
            }
        }
        pieces.push(MatPiece { s0: ya, h, y: u });
    }
    let last = pieces.last().unwrap();
    let k = last.y.len() - 1;
    let cf = [147.0, -360.0, 450.0, -400.0, 225.0, -72.0, 10.0];
    let mut d = DMatrix::zeros(n, n);
    for (i, &ci) in cf.iter().enumerate() {
        d += &last.y[k - i] * C::new(ci / (60.0 * last.h), 0.0);
    }
    Ok((pieces, d))
}

/// h+_l(x) and its derivative.
fn h_plus_d(l: u32, x: f64) -> (C, C) {
    let h = numeric::riccati_h_plus(l, x);
    if l == 0 {
        (h, I * h)
    } else {
        (h, numeric::riccati_h_plus(l - 1, x) - h * (l as f64 / x))
    }
}

// ---------------------------------------------------------------------
// Solutions

/// Regular solutions of the truncated coupled system at one quasi-energy.
#[derive(Clone, Debug, PartialEq)]
pub struct FloquetSolution {
    pub epsilon: f64,
    pub omega: f64,
    pub l: u32,
    pub n_max: usize,
    /// Channel labels -n_max..=n_max.
    pub channels: Vec<i32>,
    /// |kappa_mu| per channel; real wavenumber for open channels, decay
    /// constant for closed ones.
    pub kappa: Vec<f64>,
    pub grid: SpatialGrid,
    /// u_{mu rho} on the grid: rows are channels, columns incoming open channels.
    pub values: Vec<DMatrix<C>>,
    core: f64,
    edge: f64,
    pieces: Vec<MatPiece>,
    /// Open rows: A_{mu rho}; closed rows: u_{mu rho}(edge).
    amplitudes: DMatrix<C>,
}

impl FloquetSolution {
    pub fn n_open(&self) -> usize {
        self.n_max + 1
    }

    pub fn index(&self, mu: i32) -> Option<usize> {
        let i = mu + self.n_max as i32;
        (i >= 0 && i < self.channels.len() as i32).then_some(i as usize)
    }

    /// Radius beyond which every channel is free.
    pub fn edge(&self) -> f64 {
        self.edge
    }

    /// u_{mu rho}(s) for all channels mu and open rho.
    pub fn u(&self, s: f64) -> DMatrix<C> {
        let (n, no) = (self.channels.len(), self.n_open());
        if s < self.core {
            return DMatrix::zeros(n, no);
        }
        if s <= self.edge {
            let p = self.pieces.iter().find(|p| s <= p.end()).unwrap_or_else(|| self.pieces.last().unwrap());
            return p.at(s);
        }
        let mut out = DMatrix::zeros(n, no);
        for i in 0..n {
            let mu = self.channels[i];
            let k = self.kappa[i];
            if mu >= 0 {
                let hp = numeric::riccati_h_plus(self.l, k * s);
                for j in 0..no {
                    let mut v = self.amplitudes[(i, j)] * hp;
                    if j as i32 == mu {
                        v -= hp.conj();
                    }
                    out[(i, j)] = v / (2.0 * I);
                }
            } else {
                let g = numeric::riccati_k(self.l, k * s) / numeric::riccati_k(self.l, k * self.edge);
                for j in 0..no {
                    out[(i, j)] = self.amplitudes[(i, j)] * g;
                }
            }
        }
        out
    }

    /// Largest closed-channel |u| at the grid edge relative to the largest
    /// open-channel amplitude.
    pub fn closed_edge_ratio(&self) -> f64 {
        let s = self.grid.x_max.max(self.edge);
        let u = self.u(s);
        let off = self.n_max;
        let open = (0..self.n_open()).flat_map(|i| (0..self.n_open()).map(move |j| (i, j))).map(|(i, j)| self.amplitudes[(off + i, j)].norm()).fold(0.0, f64::max);
        let closed = (0..off).flat_map(|i| (0..self.n_open()).map(move |j| (i, j))).map(|(i, j)| u[(i, j)].norm()).fold(0.0, f64::max);
        closed / open.max(1.0)
    }
}

/// Radial grid from the origin past the point where the slowest closed
/// channel has decayed by e^-25.
pub fn default_grid(pp: &PeriodicPotential, epsilon: f64, n_max: usize) -> SpatialGrid {
    let edge = free_edge(pp);
    let kc = if n_max > 0 { (2.0 * (pp.omega - epsilon)).abs().sqrt() } else { f64::INFINITY };
    let k0 = (2.0 * epsilon).sqrt();
    let reach = (25.0 / kc).max(2.0 * PI / k0).min(1e4);
    let x_max = edge + reach;
    let kf = (2.0 * (epsilon + n_max as f64 * pp.omega)).sqrt();
    let n = ((x_max * kf / (2.0 * PI) * 20.0).ceil() as usize).clamp(64, 4000);
    SpatialGrid { x_min: 0.0, x_max, n_points: n }
}

fn free_edge(pp: &PeriodicPotential) -> f64 {
    let core = pp.base.hard_core_radius().unwrap_or(0.0);
    let s = pp.support_radius();
    if s > core {
        s
    } else {
        core + 1.0
    }
}

fn check_inputs(pp: &PeriodicPotential, epsilon: f64, n_max: usize) -> Result<(), FloquetError> {
    if !(epsilon > 0.0 && epsilon < pp.omega) {
        return Err(FloquetError::QuasiEnergy { epsilon, omega: pp.omega });
    }
    let needed = pp.default_truncation() - BUFFER;
    if n_max < needed {
        return Err(FloquetError::Truncation { n_max, needed });
    }
    Ok(())
}

fn solve_core(pp: &PeriodicPotential, epsilon: f64, n_max: usize) -> Result<FloquetSolution, FloquetError> {
    check_inputs(pp, epsilon, n_max)?;
    let l = pp.l();
    let c = Coupled { pp, eps: epsilon, n_max, l, cent: (l * (l + 1)) as f64 };
    let n = c.dim();
    let core = pp.base.hard_core_radius().unwrap_or(0.0);
    let edge = free_edge(pp);
    let qmax = c.qmax();
    let kf = qmax.sqrt();
    let h0 = (2.0 * PI / kf / POINTS_PER_WAVELENGTH).min((edge - core) / 400.0);
    let every = ((GROWTH / (kf * h0)).floor() as usize).max(1);
    let cuts = stationary::cut_list(core, edge, &pp.breakpoints());
    let (mut pieces, dy) = propagate(&c, &cuts, h0, every, core)?;
    let y = pieces.last().unwrap().y.last().unwrap().clone();
    let channels: Vec<i32> = (0..n).map(|i| c.mu(i)).collect();
    let kappa: Vec<f64> = (0..n).map(|i| (2.0 * c.energy(i)).abs().sqrt()).collect();
    let no = n_max + 1;
    // Conditions on the combination Y C: unit incoming wave (-1/2i) h- in
    // each open channel, no growing exponential in closed ones.
    let mut m = DMatrix::zeros(n, n);
    let mut aout = DMatrix::zeros(n, n);
    for i in 0..n {
        let k = kappa[i];
        let x = k * edge;
        if channels[i] >= 0 {
            let (hp, dhp) = h_plus_d(l, x);
            let (hm, dhm) = (hp.conj(), dhp.conj());
            let w0 = -2.0 * I * k;
            for j in 0..n {
                let (v, d) = (y[(i, j)], dy[(i, j)]);
                aout[(i, j)] = (v * dhm * k - d * hm) / w0;
                m[(i, j)] = (hp * d - dhp * k * v) / w0;
            }
        } else {
            let ratio = numeric::riccati_k_prime(l, x) / numeric::riccati_k(l, x);
            for j in 0..n {
                m[(i, j)] = dy[(i, j)] / k - y[(i, j)] * ratio;
            }
        }
    }
    let mut b = DMatrix::zeros(n, no);
    for j in 0..no {
        b[(n_max + j, j)] = I / 2.0;
    }
    let coef = solve_lu(&m, &b).ok_or(FloquetError::Matching(epsilon))?;
    if coef.iter().any(|z| !z.norm().is_finite()) {
        return Err(FloquetError::Matching(epsilon));
    }
    let at_edge = &y * &coef;
    let out = &aout * &coef;
    let mut amplitudes = DMatrix::zeros(n, no);
    for i in 0..n {
        for j in 0..no {
            amplitudes[(i, j)] = if channels[i] >= 0 { 2.0 * I * out[(i, j)] } else { at_edge[(i, j)] };
        }
    }
    for p in pieces.iter_mut() {
        for v in p.y.iter_mut() {
            *v = &*v * &coef;
        }
    }
    Ok(FloquetSolution {
        epsilon,
        omega: pp.omega,
        l,
        n_max,
        channels,
        kappa,
        grid: SpatialGrid { x_min: 0.0, x_max: edge, n_points: 0 },
        values: vec![],
        core,
        edge,
        pieces,
        amplitudes,
    })
}

/// Solves the coupled channels -n_max..=n_max at quasi-energy epsilon and
/// samples the regular solutions on `grid`.  The angular momentum is the
/// one carried by the base potential.
pub fn solve_floquet(pp: &PeriodicPotential, epsilon: f64, n_max: usize, grid: &SpatialGrid) -> Result<FloquetSolution, FloquetError> {
    let mut sol = solve_core(pp, epsilon, n_max)?;
    if grid.x_min < 0.0 || grid.x_max < sol.edge {
        return Err(FloquetError::Grid { lo: grid.x_min, hi: grid.x_max, edge: sol.edge });
    }
    sol.grid = *grid;
    sol.values = grid.points().iter().map(|&s| sol.u(s)).collect();
    Ok(sol)
}

// ---------------------------------------------------------------------
// Sideband S-matrix

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetSMatrix {
    pub epsilon: f64,
    pub omega: f64,
    pub l: u32,
    pub n_max: usize,
    /// Wavenumbers of the open channels 0..=n_max.
    pub kappa: Vec<f64>,
    /// <n'|S|n>: rows outgoing n', columns incoming n.
    pub matrix: DMatrix<C>,
    /// A_{n' n} = sqrt(kappa_n / kappa_n') <n'|S|n>.
    pub amplitudes: DMatrix<C>,
    /// Largest deviation of a row or column sum of |S|^2 from one.
    pub defect: f64,
    /// Largest probability sent into the top open channel n_max from the
    /// channels the buffer is meant to protect (0..=n_max - BUFFER).
    pub edge_leak: f64,
}

impl FloquetSMatrix {
    /// Extracts the matrix without judging its unitarity.
    pub fn from_solution(sol: &FloquetSolution) -> FloquetSMatrix {
        let no = sol.n_open();
        let off = sol.n_max;
        let kappa: Vec<f64> = (0..no).map(|i| sol.kappa[off + i]).collect();
        let amplitudes = DMatrix::from_fn(no, no, |i, j| sol.amplitudes[(off + i, j)]);
        let matrix = DMatrix::from_fn(no, no, |i, j| amplitudes[(i, j)] * (kappa[i] / kappa[j]).sqrt());
        let mut defect: f64 = 0.0;
        for j in 0..no {
            let col: f64 = matrix.column(j).iter().map(|z| z.norm_sqr()).sum();
            let row: f64 = matrix.row(j).iter().map(|z| z.norm_sqr()).sum();
            defect = defect.max((col - 1.0).abs()).max((row - 1.0).abs());
        }
        let edge_leak = if sol.n_max == 0 {
            0.0
        } else {
            let top = sol.n_max.saturating_sub(BUFFER).min(sol.n_max - 1);
            (0..=top).map(|n| matrix[(sol.n_max, n)].norm_sqr()).fold(0.0, f64::max)
        };
        FloquetSMatrix { epsilon: sol.epsilon, omega: sol.omega, l: sol.l, n_max: sol.n_max, kappa, matrix, amplitudes, defect, edge_leak }
    }

    pub fn element(&self, out: usize, inc: usize) -> C {
        self.matrix[(out, inc)]
    }

    /// sum_{n'} |<n'|S|n>|^2 for every incoming n.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.matrix.ncols()).map(|j| self.matrix.column(j).iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// sum_n |<n'|S|n>|^2 for every outgoing n'.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.matrix.nrows()).map(|i| self.matrix.row(i).iter().map(|z| z.norm_sqr()).sum()).collect()
    }

    /// Numerical defect or truncation leak, whichever is larger.
    pub fn unitarity_defect(&self) -> f64 {
        self.defect.max(self.edge_leak)
    }
}

pub fn floquet_s_matrix(sol: &FloquetSolution) -> Result<FloquetSMatrix, FloquetError> {
    let s = FloquetSMatrix::from_solution(sol);
    let d = s.unitarity_defect();
    if !(d <= MAX_DEFECT) {
        return Err(FloquetError::Unitarity { defect: d, n_max: sol.n_max });
    }
    Ok(s)
}

fn checked_s(pp: &PeriodicPotential, epsilon: f64, n_max: usize) -> Result<(FloquetSolution, FloquetSMatrix), FloquetError> {
    let sol = solve_core(pp, epsilon, n_max)?;
    let s = floquet_s_matrix(&sol)?;
    Ok((sol, s))
}

// ---------------------------------------------------------------------
// Sojourn matrices

/// Integrals over [edge, infinity) of chi |h+|^2 and chi (h+)^2.
fn open_tail(l: u32, k: f64, edge: f64, region: &Region) -> (f64, C) {
    let (r, o) = (region.r(), region.outer_radius());
    if o <= edge {
        return (0.0, C0);
    }
    let panel = 0.5 * PI / k;
    if l == 0 {
        let b = r.max(edge);
        let e2 = |x: f64| Complex64::from_polar(1.0, 2.0 * k * x);
        let mut j1 = b - edge;
        let mut j2 = (e2(b) - e2(edge)) / (2.0 * I * k);
        if o > b {
            j1 += numeric::integrate(|s| region.weight(s), b, o, &[], panel);
            j2 += numeric::integrate_c(|s| e2(s) * region.weight(s), b, o, &[], panel);
        }
        (j1, j2)
    } else {
        let j1 = numeric::integrate(|s| numeric::riccati_h_plus(l, k * s).norm_sqr() * region.weight(s), edge, o, &[r], panel);
        let j2 = numeric::integrate_c(
            |s| {
                let h = numeric::riccati_h_plus(l, k * s);
                h * h * region.weight(s)
            },
            edge,
            o,
            &[r],
            panel,
        );
        (j1, j2)
    }
}

/// Integral over [edge, infinity) of chi (k_l(kappa s) / k_l(kappa edge))^2.
fn closed_tail(l: u32, k: f64, edge: f64, region: &Region) -> f64 {
    let o = region.outer_radius().min(edge + 40.0 / k);
    if o <= edge {
        return 0.0;
    }
    let k0 = numeric::riccati_k(l, k * edge);
    numeric::integrate(|s| (numeric::riccati_k(l, k * s) / k0).powi(2) * region.weight(s), edge, o, &[region.r()], 0.25 / k)
}

/// <mu|T(B_r)|rho> = (4 / sqrt(kappa_mu kappa_rho)) sum_sigma int chi u*_{sigma mu} u_{sigma rho}
/// over the open channels.
pub fn floquet_onshell_sojourn(sol: &FloquetSolution, region: &Region) -> DMatrix<C> {
    let n = sol.channels.len();
    let no = sol.n_open();
    let mut g = DMatrix::<C>::zeros(no, no);
    // inside the potential
    let hi = sol.edge.min(region.outer_radius());
    if hi > sol.core {
        let mut breaks: Vec<f64> = sol.pieces.iter().map(|p| p.s0).collect();
        breaks.push(region.r());
        let kf = (2.0 * (sol.epsilon + sol.n_max as f64 * sol.omega)).sqrt().max(sol.kappa.iter().copied().fold(0.0, f64::max));
        let panel = 0.5 * PI / kf;
        for (s, w) in numeric::quadrature(sol.core, hi, &breaks, panel) {
            let chi = region.weight(s);
            if chi == 0.0 {
                continue;
            }
            let u = sol.u(s);
            g += u.adjoint() * &u * C::new(w * chi, 0.0);
        }
    }
    // free zone, channel by channel
    for i in 0..n {
        let k = sol.kappa[i];
        if sol.channels[i] >= 0 {
            let (j1, j2) = open_tail(sol.l, k, sol.edge, region);
            if j1 == 0.0 && j2 == C0 {
                continue;
            }
            let a: Vec<C> = (0..no).map(|j| sol.amplitudes[(i, j)] / (2.0 * I)).collect();
            let b: Vec<C> = (0..no).map(|j| if j as i32 == sol.channels[i] { -1.0 / (2.0 * I) } else { C0 }).collect();
            for p in 0..no {
                for q in 0..no {
                    g[(p, q)] += (a[p].conj() * a[q] + b[p].conj() * b[q]) * j1 + a[p].conj() * b[q] * j2.conj() + b[p].conj() * a[q] * j2;
                }
            }
        } else {
            let kk = closed_tail(sol.l, k, sol.edge, region);
            for p in 0..no {
                for q in 0..no {
                    g[(p, q)] += sol.amplitudes[(i, p)].conj() * sol.amplitudes[(i, q)] * kk;
                }
            }
        }
    }
    let off = sol.n_max;
    DMatrix::from_fn(no, no, |p, q| g[(p, q)] * (4.0 / (sol.kappa[off + p] * sol.kappa[off + q]).sqrt()))
}

/// Free on-shell sojourn time (4/kappa) int chi |j_l(kappa s)|^2 of one channel.
pub fn free_channel_sojourn(l: u32, k: f64, region: &Region) -> f64 {
    let (r, o) = (region.r(), region.outer_radius());
    let panel = 0.5 * PI / k;
    let j2 = |s: f64| numeric::riccati_jy(l, k * s).0.powi(2);
    let inner = if l == 0 { 0.5 * r - (2.0 * k * r).sin() / (4.0 * k) } else { numeric::integrate(j2, 0.0, r, &[], panel) };
    let tail = if o > r { numeric::integrate(|s| j2(s) * region.weight(s), r, o, &[], panel) } else { 0.0 };
    4.0 / k * (inner + tail)
}

// ---------------------------------------------------------------------
// Quasi-energy derivatives

/// S, dS/d epsilon and -i S^dag dS/d epsilon at one quasi-energy.
#[derive(Clone, Debug, PartialEq)]
pub struct FloquetDelayMatrix {
    pub s: FloquetSMatrix,
    pub ds: DMatrix<C>,
    /// -i hbar S^dag dS/d epsilon.
    pub tau: DMatrix<C>,
    pub step: f64,
    /// |Richardson - half-step estimate| of dS, largest element.
    pub error: f64,
}

impl FloquetDelayMatrix {
    /// Re <n|tau|n>.
    pub fn diagonal(&self, n: usize) -> f64 {
        self.tau[(n, n)].re
    }

    /// hbar d arg<sigma|S|n> / d epsilon; None for vanishing elements.
    pub fn conditional(&self, sigma: usize, n: usize) -> Option<f64> {
        let s = self.s.matrix[(sigma, n)];
        let p = s.norm_sqr();
        (p > 1e-300).then(|| (s.conj() * self.ds[(sigma, n)]).im / p)
    }

    /// (sigma, |S_{sigma n}|^2, tau_{sigma n}) for every open sigma.
    pub fn decomposition(&self, n: usize) -> Vec<(usize, f64, f64)> {
        (0..self.s.matrix.nrows()).map(|sg| (sg, self.s.matrix[(sg, n)].norm_sqr(), self.conditional(sg, n).unwrap_or(0.0))).collect()
    }
}

/// Derivative step min(1e-4, omega/1000), kept a quarter of the distance
/// from the channel thresholds.
pub fn quasi_energy_step(epsilon: f64, omega: f64) -> f64 {
    1e-4f64.min(omega / 1000.0).min(0.25 * epsilon).min(0.25 * (omega - epsilon))
}

pub fn floquet_delay_matrix(pp: &PeriodicPotential, epsilon: f64, n_max: usize) -> Result<FloquetDelayMatrix, FloquetError> {
    let (_, s) = checked_s(pp, epsilon, n_max)?;
    let h = quasi_energy_step(epsilon, pp.omega);
    let nodes = derivative_nodes(epsilon, h);
    let mut ms = Vec::with_capacity(5);
    for (i, &e) in nodes.iter().enumerate() {
        if i == 2 {
            ms.push(s.matrix.clone());
        } else {
            ms.push(FloquetSMatrix::from_solution(&solve_core(pp, e, n_max)?).matrix);
        }
    }
    let d1 = (&ms[4] - &ms[0]) / C::new(2.0 * h, 0.0);
    let d2 = (&ms[3] - &ms[1]) / C::new(h, 0.0);
    let ds = (&d2 * C::new(4.0, 0.0) - &d1) / C::new(3.0, 0.0);
    let error = (&ds - &d2).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tau = s.matrix.adjoint() * &ds * (-I);
    Ok(FloquetDelayMatrix { s, ds, tau, step: h, error })
}

fn incoming_channel(e: f64, pp: &PeriodicPotential, n_max: usize) -> Result<(usize, f64), FloquetError> {
    let (m, eps) = quasi_energy(e, pp.omega);
    if m > n_max {
        return Err(FloquetError::Sideband { channel: m as i64, n_max });
    }
    Ok((m, eps))
}

/// Multichannel Eisenbud-Wigner delay <m|tau|m>, averaged over the incoming
/// energy content.
pub fn floquet_eisenbud_wigner_delay(pp: &PeriodicPotential, inc: &Incoming, n_max: usize) -> Result<DelayResult, FloquetError> {
    let mut value = 0.0;
    let mut err = 0.0;
    for (&e, &w) in inc.energies.iter().zip(&inc.weights) {
        let (m, eps) = incoming_channel(e, pp, n_max)?;
        let d = floquet_delay_matrix(pp, eps, n_max)?;
        value += w * d.diagonal(m);
        err += w * d.error * d.s.kappa.len() as f64;
    }
    Ok(DelayResult::formula(value, err, Condition::None, 1.0))
}

/// Delay conditioned on leaving in sideband m + n: the phase derivative of
/// <m+n|S|m>, weighted by |<m+n|S|m>|^2 over the energy content.
pub fn floquet_conditional_delay(pp: &PeriodicPotential, inc: &Incoming, n_max: usize, sideband: i32) -> Result<DelayResult, FloquetError> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut err = 0.0;
    for (&e, &w) in inc.energies.iter().zip(&inc.weights) {
        let (m, eps) = incoming_channel(e, pp, n_max)?;
        let target = m as i64 + sideband as i64;
        if target > n_max as i64 {
            return Err(FloquetError::Sideband { channel: target, n_max });
        }
        if target < 0 {
            continue;
        }
        let d = floquet_delay_matrix(pp, eps, n_max)?;
        let t = target as usize;
        let p = d.s.matrix[(t, m)].norm_sqr();
        if let Some(tau) = d.conditional(t, m) {
            num += w * p * tau;
            err += w * d.error / p.sqrt().max(1e-300);
        }
        den += w * p;
    }
    if den < CONDITION_THRESHOLD {
        return Err(SojournError::ConditionNeverSatisfied(den).into());
    }
    Ok(DelayResult::formula(num / den, err, Condition::Sideband(sideband), den))
}

// ---------------------------------------------------------------------
// Local delays

struct Sample {
    w: f64,
    m: usize,
    sol: FloquetSolution,
    s: FloquetSMatrix,
}

struct Shell {
    samples: Vec<Sample>,
}

impl Shell {
    fn new(pp: &PeriodicPotential, inc: &Incoming, n_max: usize) -> Result<Shell, FloquetError> {
        if inc.energies.is_empty() {
            return Err(FloquetError::Invalid("no energies".into()));
        }
        let mut samples = Vec::with_capacity(inc.energies.len());
        for (&e, &w) in inc.energies.iter().zip(&inc.weights) {
            let (m, eps) = incoming_channel(e, pp, n_max)?;
            let (sol, s) = checked_s(pp, eps, n_max)?;
            samples.push(Sample { w, m, sol, s });
        }
        Ok(Shell { samples })
    }

    fn interaction(&self, region: &Region) -> f64 {
        self.samples.iter().map(|x| x.w * floquet_onshell_sojourn(&x.sol, region)[(x.m, x.m)].re).sum()
    }

    fn free(&self, kind: Reference, region: &Region) -> f64 {
        self.samples
            .iter()
            .map(|x| {
                let l = x.sol.l;
                let t_in = free_channel_sojourn(l, x.s.kappa[x.m], region);
                let t_out = || -> f64 { (0..x.s.kappa.len()).map(|sg| x.s.matrix[(sg, x.m)].norm_sqr() * free_channel_sojourn(l, x.s.kappa[sg], region)).sum() };
                x.w * match kind {
                    Reference::In => t_in,
                    Reference::Out => t_out(),
                    _ => 0.5 * (t_in + t_out()),
                }
            })
            .sum()
    }

    /// 1/v_m + sum_sigma |S_{sigma m}|^2 / v_sigma, averaged.
    fn predicted_slope(&self) -> f64 {
        self.samples
            .iter()
            .map(|x| {
                let out: f64 = (0..x.s.kappa.len()).map(|sg| x.s.matrix[(sg, x.m)].norm_sqr() / x.s.kappa[sg]).sum();
                x.w * (1.0 / x.s.kappa[x.m] + out)
            })
            .sum()
    }
}

/// Least-squares a + sum_sigma (b sin 2 kappa_sigma r + c cos 2 kappa_sigma r)
/// over radii behind the largest region; returns (a, residual).
fn multi_sinusoid_limit<F>(ks: &[f64], region: &Region, mut tau: F) -> (f64, f64)
where
    F: FnMut(&Region) -> f64,
{
    let big_r = region.r();
    let kmin = ks.iter().copied().fold(f64::INFINITY, f64::min);
    let mut gap = f64::INFINITY;
    for a in 0..ks.len() {
        for b in a + 1..ks.len() {
            gap = gap.min((ks[a] - ks[b]).abs());
        }
    }
    let span = (3.0 * PI / kmin).max(if gap.is_finite() { 2.0 * PI / gap } else { 0.0 }).min(0.5 * big_r);
    let cols = 1 + 2 * ks.len();
    let n = (24 * cols).max(64);
    let rs: Vec<f64> = (0..n).map(|j| big_r - span + span * j as f64 / (n - 1) as f64).collect();
    let ys: Vec<f64> = rs.iter().map(|&r| tau(&region.with_radius(r))).collect();
    let a = DMatrix::from_fn(n, cols, |i, j| {
        if j == 0 {
            1.0
        } else {
            let k = ks[(j - 1) / 2];
            if j % 2 == 1 {
                (2.0 * k * rs[i]).sin()
            } else {
                (2.0 * k * rs[i]).cos()
            }
        }
    });
    let b = nalgebra::DVector::from_column_slice(&ys);
    let c = a.clone().svd(true, true).solve(&b, 1e-12).unwrap_or_else(|_| nalgebra::DVector::zeros(cols));
    let res = (&a * &c - b).norm() / (n as f64).sqrt();
    (c[0], res)
}

/// Local delay <m|T(B_r)|m> - T_ref(B_r) over a schedule of regions, with
/// its limit.  Fixed energy with sharp regions removes the channel
/// oscillations by a fit; otherwise the table is extrapolated.
pub fn floquet_time_delay(
    pp: &PeriodicPotential,
    inc: &Incoming,
    n_max: usize,
    regions: &[Region],
    reference: Reference,
    ff_points: usize,
) -> Result<DelayResult, FloquetError> {
    if regions.is_empty() {
        return Err(FloquetError::Invalid("empty region schedule".into()));
    }
    let shell = Shell::new(pp, inc, n_max)?;
    let last = *regions.last().unwrap();
    let slope = if reference == Reference::FreeFlight {
        let r_lo = regions.iter().map(|r| r.r()).fold(0.0, f64::max);
        Some(sojourn::free_flight_slope(|reg| Ok(shell.interaction(reg)), &last, r_lo, ff_points)?.slope)
    } else {
        None
    };
    let reference_of = |reg: &Region| match slope {
        Some(sl) => reg.normalizer() * sl,
        None => shell.free(reference, reg),
    };
    let mut table = Vec::with_capacity(regions.len());
    for reg in regions {
        let ti = shell.interaction(reg);
        let tr = reference_of(reg);
        table.push(DelayRow { r: reg.r(), rho: reg.rho(), interaction: ti, reference: tr, delay: ti - tr });
    }
    let (value, residual) = if inc.is_fixed() && last.is_sharp() {
        let ks = shell.samples[0].s.kappa.clone();
        multi_sinusoid_limit(&ks, &last, |reg| shell.interaction(reg) - reference_of(reg))
    } else {
        sojourn::table_limit(&table)
    };
    Ok(DelayResult {
        value,
        reference: Some(reference),
        condition: Condition::None,
        origin: 0.0,
        fuzzy: sojourn::fuzzy_shape(regions),
        table,
        residual,
        probability: 1.0,
        oscillation: None,
        slope,
    })
}

/// Linear growth of the incoming-only local delay against the prediction
/// sum_sigma (1/v_sigma - 1/v_m) |S_{sigma m}|^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DivergenceCheck {
    pub fitted: f64,
    pub predicted: f64,
    pub relative_error: f64,
}

/// Fits d(<m|T|m> - T_in)/df over the decade [r_lo, 10 r_lo] of regions
/// shaped like `template`.
pub fn floquet_in_divergence(pp: &PeriodicPotential, inc: &Incoming, n_max: usize, template: &Region, r_lo: f64, points: usize) -> Result<DivergenceCheck, FloquetError> {
    let shell = Shell::new(pp, inc, n_max)?;
    let mut xs = vec![];
    let mut ys = vec![];
    for r in sojourn::decade(r_lo, points) {
        let reg = sojourn::scaled_region(template, r);
        xs.push(reg.normalizer());
        ys.push(shell.interaction(&reg) - shell.free(Reference::In, &reg));
    }
    let fitted = numeric::linear_fit(&xs, &ys).slope;
    let free_in: f64 = shell.samples.iter().map(|x| x.w * 2.0 / x.s.kappa[x.m]).sum();
    let predicted = shell.predicted_slope() - free_in;
    Ok(DivergenceCheck { fitted, predicted, relative_error: ((fitted - predicted) / predicted).abs() })
}

// ---------------------------------------------------------------------
// General conditional definition

/// Sideband scattering seen through `OnShellSystem`: channels are the open
/// sidebands 0..=n_max and energies are total energies of the incoming
/// channel, which must equal the `channel` argument's sideband.
pub struct FloquetSystem {
    pub potential: PeriodicPotential,
    pub n_max: usize,
}

impl OnShellSystem for FloquetSystem {
    fn channels(&self) -> usize {
        self.n_max + 1
    }

    fn s_matrix(&self, e: f64) -> Result<DMatrix<C>, SojournError> {
        let (_, eps) = incoming_channel(e, &self.potential, self.n_max)?;
        Ok(checked_s(&self.potential, eps, self.n_max)?.1.matrix)
    }

    fn sojourn_matrices(&self, e: f64, regions: &[Region]) -> Result<Vec<DMatrix<C>>, SojournError> {
        let (_, eps) = incoming_channel(e, &self.potential, self.n_max)?;
        let (sol, _) = checked_s(&self.potential, eps, self.n_max)?;
        Ok(regions.iter().map(|r| floquet_onshell_sojourn(&sol, r)).collect())
    }

    fn outgoing_mask(&self, condition: &Condition, incoming: usize) -> Result<Vec<bool>, SojournError> {
        let no = self.n_max + 1;
        match condition {
            Condition::None => Ok(vec![true; no]),
            Condition::Sideband(n) => {
                let t = incoming as i64 + *n as i64;
                if t > self.n_max as i64 {
                    return Err(FloquetError::Sideband { channel: t, n_max: self.n_max }.into());
                }
                Ok((0..no).map(|i| i as i64 == t).collect())
            }
            Condition::Channels(c) => Ok((0..no).map(|i| c.contains(&i)).collect()),
            other => Err(SojournError::Invalid(format!("condition {} does not apply to sideband scattering", other.name()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FuzzyProfile, Potential, Shape};
    use proptest::prelude::*;

    fn base() -> Potential {
        Potential::square(-1.0, 0.0, 2.0).unwrap().radial(0)
    }

    fn driven(a: f64) -> PeriodicPotential {
        let prof = Potential::square(1.0, 0.0, 2.0).unwrap();
        PeriodicPotential::new(base(), 1.2, vec![(1, C::new(a, 0.0), prof)]).unwrap()
    }

    #[test]
    fn static_limit_phases() {
        let pp = PeriodicPotential::static_only(base(), 1.2).unwrap();
        let eps = 0.5;
        let sol = solve_core(&pp, eps, 3).unwrap();
        let s = floquet_s_matrix(&sol).unwrap();
        for n in 0..=3usize {
            let e = eps + n as f64 * 1.2;
            let want = stationary::radial_s(&base(), e).unwrap();
            assert!((s.matrix[(n, n)] - want).norm() < 1e-8, "n={n} {} vs {}", s.matrix[(n, n)], want);
            for m in 0..=3usize {
                if m != n {
                    assert!(s.matrix[(m, n)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn static_limit_higher_l_and_sojourn() {
        let b = Potential::gaussian(-1.5, 0.0, 1.0).unwrap().radial(1);
        let pp = PeriodicPotential::static_only(b.clone(), 1.0).unwrap();
        let eps = 0.4;
        let sol = solve_core(&pp, eps, 2).unwrap();
        let s = FloquetSMatrix::from_solution(&sol);
        let want = stationary::radial_s(&b, eps).unwrap();
        assert!((s.matrix[(0, 0)] - want).norm() < 1e-8, "{} vs {}", s.matrix[(0, 0)], want);
        let st = stationary::radial_state(&b, eps).unwrap();
        for reg in [Region::sharp(3.0), Region::sharp(30.0), Region::fuzzy(FuzzyProfile::new(20.0, 10.0, Shape::HalfCosine).unwrap())] {
            let t = floquet_onshell_sojourn(&sol, &reg)[(0, 0)].re;
            let want = sojourn::onshell_interaction_sojourn(&st, &reg).unwrap().value;
            assert!(((t - want) / want).abs() < 1e-6, "{t} vs {want}");
        }
    }

    #[test]
    fn driven_unitarity_and_decay() {
        let pp = driven(0.3);
        let n_max = pp.default_truncation();
        let grid = default_grid(&pp, 0.5, n_max);
        let sol = solve_floquet(&pp, 0.5, n_max, &grid).unwrap();
        let s = floquet_s_matrix(&sol).unwrap();
        assert!(s.defect < 1e-6, "defect {}", s.defect);
        for v in s.column_sums().into_iter().chain(s.row_sums()) {
            assert!((v - 1.0).abs() < 1e-6);
        }
        assert!(s.matrix[(1, 0)].norm() > 1e-3);
        assert!(sol.closed_edge_ratio() < 1e-8, "{}", sol.closed_edge_ratio());
        for v in &sol.values[..1] {
            assert!(v.iter().all(|z| z.norm() < 1e-12));
        }
    }

    #[test]
    fn inside_matches_outside_at_edge() {
        let pp = driven(0.4);
        let sol = solve_core(&pp, 0.7, 5).unwrap();
        let e = sol.edge();
        let a = sol.u(e - 1e-9);
        let b = sol.u(e + 1e-9);
        assert!((a - b).norm() < 1e-7);
    }

    #[test]
    fn truncation_leak_shrinks() {
        let pp = driven(0.8);
        let leaks: Vec<f64> = [1usize, 2, 3].iter().map(|&n| FloquetSMatrix::from_solution(&solve_core(&pp, 0.5, n).unwrap()).unitarity_defect()).collect();
        assert!(leaks[0] > leaks[1] && leaks[1] > leaks[2], "{leaks:?}");
    }

    #[test]
    fn weak_drive_first_order() {
        let amps = [1e-3, 2e-3, 4e-3, 8e-3];
        let xs: Vec<f64> = amps.iter().map(|a: &f64| a.ln()).collect();
        let ys: Vec<f64> = amps
            .iter()
            .map(|&a| FloquetSMatrix::from_solution(&solve_core(&driven(a), 0.5, 5).unwrap()).matrix[(1, 0)].norm().ln())
            .collect();
        let fit = numeric::linear_fit(&xs, &ys);
        assert!((fit.slope - 1.0).abs() < 1e-2, "slope {}", fit.slope);
    }

    #[test]
    fn decomposition_identity() {
        let pp = driven(0.3);
        let d = floquet_delay_matrix(&pp, 0.5, 5).unwrap();
        let sum: f64 = d.decomposition(0).iter().map(|(_, p, t)| p * t).sum();
        assert!((sum - d.diagonal(0)).abs() < 1e-12 * (1.0 + sum.abs()));
        let total: f64 = (-1..=5).map(|n| floquet_conditional_delay(&pp, &Incoming::fixed(0.5, crate::Direction::FromLeft), 5, n).map(|r| r.value * r.probability).unwrap_or(0.0)).sum();
        assert!((total - d.diagonal(0)).abs() < 1e-10, "{total} vs {}", d.diagonal(0));
    }

    #[test]
    fn static_delay_is_phase_derivative() {
        let pp = PeriodicPotential::static_only(base(), 1.2).unwrap();
        let d = floquet_delay_matrix(&pp, 0.5, 2).unwrap();
        for n in 0..=2usize {
            let want = sojourn::radial_delay(&base(), 0.5 + 1.2 * n as f64, None).unwrap().value;
            assert!((d.diagonal(n) - want).abs() < 1e-6, "{} vs {want}", d.diagonal(n));
        }
        let c = floquet_conditional_delay(&pp, &Incoming::fixed(0.5, crate::Direction::FromLeft), 2, 0).unwrap();
        assert!((c.value - d.diagonal(0)).abs() < 1e-9);
    }

    #[test]
    fn sideband_guards() {
        let pp = driven(0.3);
        let inc = Incoming::fixed(0.5, crate::Direction::FromLeft);
        assert!(matches!(floquet_conditional_delay(&pp, &inc, 5, 6), Err(FloquetError::Sideband { .. })));
        assert!(matches!(solve_core(&pp, 0.0, 5), Err(FloquetError::QuasiEnergy { .. })));
        assert!(matches!(solve_core(&pp, 0.5, 0), Err(FloquetError::Truncation { .. })));
        let strong = driven(3.0);
        let r = floquet_s_matrix(&solve_core(&strong, 0.5, 1).unwrap());
        assert!(matches!(r, Err(FloquetError::Unitarity { .. })));
    }

    #[test]
    fn incoming_reference_diverges_symmetric_converges() {
        let pp = driven(0.3);
        let inc = Incoming::fixed(0.5, crate::Direction::FromLeft);
        let tmpl = Region::fuzzy(FuzzyProfile::new(100.0, 50.0, Shape::HalfCosine).unwrap());
        let div = floquet_in_divergence(&pp, &inc, 5, &tmpl, 100.0, 8).unwrap();
        assert!(div.relative_error < 0.02, "{div:?}");
        let regions = sojourn::fuzzy_schedule(&[200.0, 300.0, 400.0], 0.5, Shape::CosSquared, 0.0).unwrap();
        let sym = floquet_time_delay(&pp, &inc, 5, &regions, Reference::Symmetric, 12).unwrap();
        let ew = floquet_delay_matrix(&pp, 0.5, 5).unwrap().diagonal(0);
        assert!((sym.value - ew).abs() < 1e-3, "{} vs {ew}", sym.value);
    }

    #[test]
    fn off_diagonal_sojourn_bounded() {
        let pp = driven(0.3);
        let sol = solve_core(&pp, 0.5, 5).unwrap();
        let a = floquet_onshell_sojourn(&sol, &Region::sharp(100.0));
        let b = floquet_onshell_sojourn(&sol, &Region::sharp(1000.0));
        assert!((b.clone() - b.adjoint()).norm() < 1e-8 * b.norm());
        assert!(b[(1, 0)].norm() < 12.0 * a[(1, 0)].norm() + 10.0);
        assert!(b[(0, 0)].re > 5.0 * a[(0, 0)].re);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn unitary_for_random_drives(a in 0.0f64..0.5, eps in 0.05f64..1.15) {
            let sol = solve_core(&driven(a), eps, 5).unwrap();
            let s = FloquetSMatrix::from_solution(&sol);
            prop_assert!(s.defect < 1e-6);
            prop_assert_eq!(s.epsilon, eps);
        }
    }
}
