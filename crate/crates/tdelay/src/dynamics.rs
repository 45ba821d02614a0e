//! Wave-packet propagation on a periodic grid, direct sojourn times and
//! the idealized clocks.
//!
//! Propagation is second-order split-operator: half kinetic step in
//! momentum space, potential step at the midpoint time, half kinetic step.
//! Consecutive half steps are merged, and region probabilities are sampled
//! on the half-step states, which carry the right |psi|^2 to second order.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

use crate::model::{velocity, Direction, Geometry, Potential, Region, SpatialGrid};
use crate::numeric;
use crate::sojourn::{Incoming, SojournError};
use crate::stationary::{self, StationaryError};

type C = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Stationary(#[from] StationaryError),
    #[error(transparent)]
    Sojourn(#[from] SojournError),
    #[error("norm drifted by {0:.3e} with a real potential")]
    NormDrift(f64),
    #[error("time step {dt} exceeds dx^2/pi = {limit}")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("window too short: region probability {start:.3e} at the start, {end:.3e} at the end")]
    WindowTooShort { start: f64, end: f64 },
    #[error("precession angle {0:.3} exceeds pi within the run; use a smaller coupling")]
    PrecessionTooLarge(f64),
    #[error("packet reached the grid boundary (lost probability {0:.3e}); enlarge the grid")]
    GridTooSmall(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> DynamicsError {
    DynamicsError::Invalid(msg.into())
}

/// Discrete Fourier pair and wavenumbers of a periodic grid.
#[derive(Clone)]
struct Fourier {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
    scratch: Vec<C>,
}

impl Fourier {
    fn new(grid: &SpatialGrid) -> Fourier {
        let n = grid.n_points;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let dk = 2.0 * PI / (n as f64 * grid.dx());
        let k = (0..n).map(|j| if j < n.div_ceil(2) { j as f64 * dk } else { (j as f64 - n as f64) * dk }).collect();
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Fourier { fwd, inv, k, scratch: vec![C::new(0.0, 0.0); len] }
    }

    fn forward(&mut self, v: &mut [C]) {
        self.fwd.process_with_scratch(v, &mut self.scratch);
    }

    /// Inverse transform including the 1/n factor.
    fn inverse(&mut self, v: &mut [C]) {
        self.inv.process_with_scratch(v, &mut self.scratch);
        let s = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|z| *z *= s);
    }
}

/// Wave function sampled on a periodic grid of period n dx.
#[derive(Clone, Debug, PartialEq)]
pub struct WavePacket {
    pub grid: SpatialGrid,
    pub values: Vec<C>,
    /// Second spinor component, when the packet carries spin.
    pub spinor: Option<Vec<C>>,
}

impl WavePacket {
    /// Packet with momentum amplitude `amp(k)` on the grid wavenumbers,
    /// normalized to one.
    pub fn from_momentum<F: Fn(f64) -> C>(grid: &SpatialGrid, amp: F) -> Result<WavePacket, DynamicsError> {
        let mut f = Fourier::new(grid);
        let x0 = grid.x_min;
        // the DFT phase reference sits at x_min
        let mut v: Vec<C> = f.k.iter().map(|&k| amp(k) * C::from_polar(1.0, k * x0)).collect();
        f.inverse(&mut v);
        let mut p = WavePacket { grid: *grid, values: v, spinor: None };
        let n = p.norm();
        if !(n > 0.0) {
            return Err(invalid("packet has no momentum content on this grid"));
        }
        p.values.iter_mut().for_each(|z| *z /= n);
        Ok(p)
    }

    /// Gaussian in momentum with |phi(k)|^2 of standard deviation sigma_k,
    /// centred at x0, with components of |k| below k_min removed.
    pub fn gaussian(grid: &SpatialGrid, x0: f64, k0: f64, sigma_k: f64, k_min: f64) -> Result<WavePacket, DynamicsError> {
        if !(sigma_k > 0.0 && k0 != 0.0) {
            return Err(invalid("need sigma_k > 0 and k0 != 0"));
        }
        let s = k0.signum();
        WavePacket::from_momentum(grid, |k| {
            if s * k < k_min.max(0.0) || s * k <= 0.0 {
                C::new(0.0, 0.0)
            } else {
                C::from_polar((-(k - k0).powi(2) / (4.0 * sigma_k * sigma_k)).exp(), -k * x0)
            }
        })
    }

    pub fn norm(&self) -> f64 {
        let dx = self.grid.dx();
        (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx).sqrt()
    }

    pub fn mean_position(&self) -> f64 {
        let dx = self.grid.dx();
        let s: f64 = self.values.iter().enumerate().map(|(i, z)| self.grid.x(i) * z.norm_sqr()).sum();
        s * dx / self.norm().powi(2)
    }

    /// (k, |c_k|^2) for every grid wavenumber; weights sum to one.
    pub fn momentum_distribution(&self) -> Vec<(f64, f64)> {
        let mut f = Fourier::new(&self.grid);
        let mut v = self.values.clone();
        f.forward(&mut v);
        let tot: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        f.k.iter().zip(&v).map(|(&k, z)| (k, z.norm_sqr() / tot)).collect()
    }

    pub fn mean_momentum(&self) -> f64 {
        self.momentum_distribution().iter().map(|(k, w)| k * w).sum()
    }

    /// On-shell energy content |phi(E)|^2 of the packet.
    pub fn incoming(&self) -> Result<Incoming, DynamicsError> {
        let dist = self.momentum_distribution();
        let kbar: f64 = dist.iter().map(|(k, w)| k * w).sum();
        let direction = if kbar >= 0.0 { Direction::FromLeft } else { Direction::FromRight };
        let max = dist.iter().map(|d| d.1).fold(0.0, f64::max);
        let keep: Vec<(f64, f64)> = dist.into_iter().filter(|&(k, w)| w > 1e-14 * max && k * kbar > 0.0).collect();
        let tot: f64 = keep.iter().map(|d| d.1).sum();
        Ok(Incoming { energies: keep.iter().map(|d| 0.5 * d.0 * d.0).collect(), weights: keep.iter().map(|d| d.1 / tot).collect(), direction })
    }

    /// Probability inside the region, with sharp edges resolved per cell.
    pub fn region_probability(&self, region: &Region) -> f64 {
        let w = cell_weights(&self.grid, region);
        weighted(&self.values, &w) * self.grid.dx()
    }

    /// <T + V> with V the real static potential.
    pub fn energy(&self, p: &Potential) -> f64 {
        let dx = self.grid.dx();
        let v = cell_potential(&self.grid, p);
        let pot: f64 = self.values.iter().zip(&v).map(|(z, v)| z.norm_sqr() * v).sum::<f64>() * dx;
        let kin: f64 = self.momentum_distribution().iter().map(|(k, w)| 0.5 * k * k * w).sum::<f64>() * self.norm().powi(2);
        kin + pot
    }

    /// Exact free evolution by time t (negative t runs backwards).
    pub fn free_evolved(&self, t: f64) -> WavePacket {
        let mut f = Fourier::new(&self.grid);
        let mut v = self.values.clone();
        f.forward(&mut v);
        for (z, &k) in v.iter_mut().zip(&f.k) {
            *z *= C::from_polar(1.0, -0.5 * k * k * t);
        }
        f.inverse(&mut v);
        WavePacket { grid: self.grid, values: v, spinor: None }
    }
}

fn weighted(v: &[C], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(z, w)| z.norm_sqr() * w).sum()
}

/// Membership averaged over each grid cell: exact overlap for sharp
/// regions, midpoint value for fuzzy ones.
fn cell_weights(grid: &SpatialGrid, region: &Region) -> Vec<f64> {
    let dx = grid.dx();
    (0..grid.n_points)
        .map(|i| {
            let x = grid.x(i);
            if region.is_sharp() {
                let (a, b) = (region.center - region.r(), region.center + region.r());
                ((x + 0.5 * dx).min(b) - (x - 0.5 * dx).max(a)).max(0.0) / dx
            } else {
                region.weight(x)
            }
        })
        .collect()
}

/// Potential averaged over each grid cell, so that steps between grid
/// points keep their width.
fn cell_potential(grid: &SpatialGrid, p: &Potential) -> Vec<f64> {
    let dx = grid.dx();
    let breaks = p.breakpoints();
    let support = p.support();
    (0..grid.n_points)
        .map(|i| {
            let x = grid.x(i);
            let (a, b) = (x - 0.5 * dx, x + 0.5 * dx);
            match support {
                Some((lo, hi)) if b > lo && a < hi => numeric::integrate(|s| p.eval(s), a, b, &breaks, dx) / dx,
                _ => 0.0,
            }
        })
        .collect()
}

/// Extra term added to H for clocks and absorption tests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Perturbation {
    None,
    /// + lambda chi_region.
    Static(f64, Region),
    /// - i lambda chi_region.
    Absorbing(f64, Region),
    /// + lambda (t - t0) chi_region.
    Ramp(f64, Region, f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationConfig {
    pub dt: f64,
    /// Width of the imaginary quadratic ramp at each grid edge.
    pub absorber_width: f64,
    /// Ramp height at the grid edge.
    pub absorber_strength: f64,
    /// Region probability regarded as zero.
    pub threshold: f64,
    /// Consecutive quiet steps needed before stopping.
    pub quiet_steps: usize,
    pub max_steps: usize,
}

impl PropagationConfig {
    pub fn for_grid(grid: &SpatialGrid) -> PropagationConfig {
        let dx = grid.dx();
        PropagationConfig {
            dt: 0.9 * dx * dx / PI,
            absorber_width: 0.05 * (grid.x_max - grid.x_min),
            absorber_strength: 0.1,
            threshold: 1e-8,
            quiet_steps: 100,
            max_steps: 2_000_000,
        }
    }
}

/// Split-operator propagator for one component.
struct Propagator {
    fourier: Fourier,
    /// Half-step state K(dt/2) psi_n in position space.
    phi: Vec<C>,
    kin: Vec<C>,
    kin_half_inv: Vec<C>,
    /// e^{-i V dt} without the ramp.
    vstep: Vec<C>,
    /// lambda chi for the ramp, if any.
    ramp: Option<Vec<f64>>,
    ramp_t0: f64,
    /// Loss per step in the absorbing layers: 1 - |e^{-i V_abs dt}|^2.
    edge_loss: Vec<f64>,
    edge_mask: Vec<bool>,
    absorbed: f64,
    dt: f64,
    step: usize,
    dx: f64,
}

impl Propagator {
    fn new(p: &Potential, packet: &WavePacket, values: &[C], pert: Perturbation, cfg: &PropagationConfig) -> Result<Propagator, DynamicsError> {
        let grid = packet.grid;
        let dx = grid.dx();
        let limit = dx * dx / PI;
        if cfg.dt > limit * (1.0 + 1e-12) {
            return Err(DynamicsError::StepTooLarge { dt: cfg.dt, limit });
        }
        let mut fourier = Fourier::new(&grid);
        let v = cell_potential(&grid, p);
        let (x_lo, x_hi) = (grid.x_min + cfg.absorber_width, grid.x_max - cfg.absorber_width);
        let mut vstep = Vec::with_capacity(grid.n_points);
        let mut edge_loss = Vec::with_capacity(grid.n_points);
        let mut edge_mask = Vec::with_capacity(grid.n_points);
        let mut ramp = None;
        let extra = match pert {
            Perturbation::None => None,
            Perturbation::Static(_, r) | Perturbation::Absorbing(_, r) | Perturbation::Ramp(_, r, _) => Some(cell_weights(&grid, &r)),
        };
        for i in 0..grid.n_points {
            let x = grid.x(i);
            let d = if x < x_lo { x_lo - x } else if x > x_hi { x - x_hi } else { 0.0 };
            let eta = if cfg.absorber_width > 0.0 { cfg.absorber_strength * (d / cfg.absorber_width).powi(2) } else { 0.0 };
            let mut vc = C::new(v[i], -eta);
            if let Some(w) = &extra {
                match pert {
                    Perturbation::Static(l, _) => vc += l * w[i],
                    Perturbation::Absorbing(l, _) => vc -= C::new(0.0, l * w[i]),
                    _ => {}
                }
            }
            vstep.push((-C::i() * vc * cfg.dt).exp());
            edge_loss.push(1.0 - (-2.0 * eta * cfg.dt).exp());
            edge_mask.push(eta > 0.0);
        }
        let mut ramp_t0 = 0.0;
        if let (Perturbation::Ramp(l, _, t0), Some(w)) = (pert, &extra) {
            ramp = Some(w.iter().map(|w| l * w).collect());
            ramp_t0 = t0;
        }
        let kin = fourier.k.iter().map(|&k| C::from_polar(1.0, -0.5 * k * k * cfg.dt)).collect();
        let kin_half: Vec<C> = fourier.k.iter().map(|&k| C::from_polar(1.0, -0.25 * k * k * cfg.dt)).collect();
        let kin_half_inv = kin_half.iter().map(|z| z.conj()).collect();
        let mut phi = values.to_vec();
        fourier.forward(&mut phi);
        phi.iter_mut().zip(&kin_half).for_each(|(z, h)| *z *= h);
        fourier.inverse(&mut phi);
        Ok(Propagator { fourier, phi, kin, kin_half_inv, vstep, ramp, ramp_t0, edge_loss, edge_mask, absorbed: 0.0, dt: cfg.dt, step: 0, dx })
    }

    fn advance(&mut self) {
        let t_mid = (self.step as f64 + 0.5) * self.dt;
        let mut lost = 0.0;
        for i in 0..self.phi.len() {
            if self.edge_mask[i] {
                lost += self.phi[i].norm_sqr() * self.edge_loss[i];
            }
            let mut f = self.vstep[i];
            if let Some(r) = &self.ramp {
                if r[i] != 0.0 {
                    f *= C::from_polar(1.0, -r[i] * (t_mid - self.ramp_t0) * self.dt);
                }
            }
            self.phi[i] *= f;
        }
        self.absorbed += lost * self.dx;
        self.fourier.forward(&mut self.phi);
        self.phi.iter_mut().zip(&self.kin).for_each(|(z, k)| *z *= k);
        self.fourier.inverse(&mut self.phi);
        self.step += 1;
    }

    /// Time label of the half-step state.
    fn sample_time(&self) -> f64 {
        (self.step as f64 + 0.5) * self.dt
    }

    /// psi_n recovered from the half-step state.
    fn state(&mut self) -> Vec<C> {
        let mut v = self.phi.clone();
        self.fourier.forward(&mut v);
        v.iter_mut().zip(&self.kin_half_inv).for_each(|(z, h)| *z *= h);
        self.fourier.inverse(&mut v);
        v
    }

    fn norm_sqr(&self) -> f64 {
        self.phi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.dx
    }
}

/// Snapshots (t, psi_t) every `stride` steps, starting with t = 0.
pub fn propagate(p: &Potential, packet: &WavePacket, pert: Perturbation, cfg: &PropagationConfig, n_steps: usize, stride: usize) -> Result<Vec<(f64, WavePacket)>, DynamicsError> {
    let mut prop = Propagator::new(p, packet, &packet.values, pert, cfg)?;
    let n0 = packet.norm().powi(2);
    let real = !matches!(pert, Perturbation::Absorbing(..));
    let stride = stride.max(1);
    let mut out = vec![(0.0, packet.clone())];
    for s in 1..=n_steps {
        prop.advance();
        if real && s % 100 == 0 {
            check_drift(&prop, n0)?;
        }
        if s % stride == 0 || s == n_steps {
            out.push((s as f64 * cfg.dt, WavePacket { grid: packet.grid, values: prop.state(), spinor: None }));
        }
    }
    if real {
        check_drift(&prop, n0)?;
    }
    Ok(out)
}

fn check_drift(prop: &Propagator, n0: f64) -> Result<(), DynamicsError> {
    let drift = (prop.norm_sqr() + prop.absorbed - n0).abs();
    if drift > 1e-6 {
        return Err(DynamicsError::NormDrift(drift));
    }
    Ok(())
}

/// Region probabilities sampled along a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilitySeries {
    pub regions: Vec<Region>,
    pub times: Vec<f64>,
    /// probs[j][i]: region j at times[i].
    pub probs: Vec<Vec<f64>>,
    /// Probability removed by the boundary layers.
    pub absorbed: f64,
    pub final_norm: f64,
    /// True when the run started and ended with every region empty.
    pub complete: bool,
}

/// Propagates until every region has been quiet for `quiet_steps`
/// steps. Regions already occupied at t = 0 get their t < 0 history from
/// free backward evolution.
pub fn record_region_probabilities(p: &Potential, packet: &WavePacket, regions: &[Region], cfg: &PropagationConfig) -> Result<ProbabilitySeries, DynamicsError> {
    if regions.is_empty() {
        return Err(invalid("no regions"));
    }
    let weights: Vec<Vec<f64>> = regions.iter().map(|r| cell_weights(&packet.grid, r)).collect();
    let dx = packet.grid.dx();
    let measure = |v: &[C]| -> Vec<f64> { weights.iter().map(|w| weighted(v, w) * dx).collect() };
    let mut times = vec![];
    let mut probs: Vec<Vec<f64>> = vec![vec![]; regions.len()];
    let p0 = measure(&packet.values);
    if p0.iter().any(|&x| x >= cfg.threshold) {
        let mut back = vec![];
        let mut quiet = 0;
        let mut j = 1;
        while quiet < cfg.quiet_steps {
            let t = -(j as f64) * cfg.dt;
            let m = measure(&packet.free_evolved(t).values);
            quiet = if m.iter().all(|&x| x < cfg.threshold) { quiet + 1 } else { 0 };
            back.push((t, m));
            j += 1;
            if j > cfg.max_steps {
                return Err(DynamicsError::WindowTooShort { start: p0.iter().copied().fold(0.0, f64::max), end: 0.0 });
            }
        }
        for (t, m) in back.into_iter().rev() {
            times.push(t);
            m.iter().zip(probs.iter_mut()).for_each(|(x, col)| col.push(*x));
        }
    }
    times.push(0.0);
    p0.iter().zip(probs.iter_mut()).for_each(|(x, col)| col.push(*x));
    let mut prop = Propagator::new(p, packet, &packet.values, Perturbation::None, cfg)?;
    let n0 = packet.norm().powi(2);
    let mut quiet = 0;
    let mut entered = p0.iter().any(|&x| x >= cfg.threshold);
    while quiet < cfg.quiet_steps {
        if prop.step >= cfg.max_steps {
            let last = probs.iter().map(|c| *c.last().unwrap()).fold(0.0, f64::max);
            return Err(DynamicsError::WindowTooShort { start: 0.0, end: last });
        }
        let m = measure(&prop.phi);
        let hot = m.iter().any(|&x| x >= cfg.threshold);
        entered |= hot;
        quiet = if entered && !hot { quiet + 1 } else { 0 };
        times.push(prop.sample_time());
        m.iter().zip(probs.iter_mut()).for_each(|(x, col)| col.push(*x));
        prop.advance();
        if prop.step % 200 == 0 {
            check_drift(&prop, n0)?;
        }
    }
    check_drift(&prop, n0)?;
    Ok(ProbabilitySeries { regions: regions.to_vec(), times, probs, absorbed: prop.absorbed, final_norm: prop.norm_sqr(), complete: true })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DirectSojourn {
    pub value: f64,
    /// Estimated contribution after the last sample, already included.
    pub tail: f64,
    pub start_probability: f64,
    pub end_probability: f64,
}

/// Trapezoidal time integral of the region probability. With no window
/// the whole series is used and must start and end with the region empty.
pub fn direct_sojourn(series: &ProbabilitySeries, region: usize, window: Option<(f64, f64)>) -> Result<DirectSojourn, DynamicsError> {
    let probs = series.probs.get(region).ok_or_else(|| invalid("region index out of range"))?;
    let ts = &series.times;
    let n = ts.len();
    if n < 2 {
        return Err(invalid("series too short"));
    }
    let (t0, t1) = window.unwrap_or((ts[0], ts[n - 1]));
    let interp = |t: f64| -> f64 {
        let i = ts.partition_point(|&x| x <= t).clamp(1, n - 1);
        let f = (t - ts[i - 1]) / (ts[i] - ts[i - 1]);
        probs[i - 1] + f * (probs[i] - probs[i - 1])
    };
    let start = interp(t0);
    let end = interp(t1);
    if window.is_none() && (start >= 1e-8 || end >= 1e-8) {
        return Err(DynamicsError::WindowTooShort { start, end });
    }
    if t0 < ts[0] - 1e-12 || t1 > ts[n - 1] + 1e-12 || t1 <= t0 {
        return Err(invalid("window outside the recorded series"));
    }
    let mut pts: Vec<(f64, f64)> = vec![(t0, start)];
    pts.extend(ts.iter().zip(probs).filter(|(t, _)| **t > t0 && **t < t1).map(|(t, p)| (*t, *p)));
    pts.push((t1, end));
    let mut value: f64 = pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum();
    // exponential-decay tail past the end of an unwindowed run
    let mut tail = 0.0;
    if window.is_none() && n >= 3 {
        let (pa, pb) = (probs[n - 2], probs[n - 1]);
        if pb > 0.0 && pa > pb {
            let rate = (pa / pb).ln() / (ts[n - 1] - ts[n - 2]);
            tail = pb / rate;
        }
        value += tail;
    }
    Ok(DirectSojourn { value, tail, start_probability: start, end_probability: end })
}

/// Grid, packet and step for a Gaussian packet aimed at the potential,
/// sized so that every region up to `r_max` is entered and left well
/// inside the grid.
pub fn launch(p: &Potential, k0: f64, sigma_k: f64, r_max: f64, direction: Direction) -> Result<(WavePacket, PropagationConfig), DynamicsError> {
    launch_with_dx(p, k0, sigma_k, r_max, direction, None)
}

/// As `launch`, with an explicit grid spacing.
pub fn launch_with_dx(p: &Potential, k0: f64, sigma_k: f64, r_max: f64, direction: Direction, dx: Option<f64>) -> Result<(WavePacket, PropagationConfig), DynamicsError> {
    let v0 = k0.abs();
    let v_min = v0 - 6.5 * sigma_k;
    if !(sigma_k > 0.0 && v_min > 0.0) {
        return Err(invalid("momentum spread must stay well above zero"));
    }
    let sx = 0.5 / sigma_k;
    let reach = r_max.max(p.support_radius());
    let dist = reach + 6.5 * sx;
    let width = |t: f64| (sx * sx + (sigma_k * t).powi(2)).sqrt();
    let mut t_est = 2.0 * dist / v0;
    for _ in 0..3 {
        t_est = 1.3 * (dist + reach + 7.0 * width(t_est)) / v0;
    }
    let v_max = v0 + 6.5 * sigma_k;
    let absorber = 40.0;
    let half = (dist + 7.0 * sx).max(v_max * t_est - dist + 7.0 * width(t_est)) + absorber + 10.0;
    let (vmin, _) = p.range();
    let k_top = (v0 + 8.0 * sigma_k).max((v0 * v0 + 2.0 * (-vmin).max(0.0)).sqrt());
    let dx = dx.unwrap_or((0.25f64).min(PI / (4.0 * k_top)));
    let n = ((2.0 * half / dx).ceil() as usize).next_power_of_two();
    let grid = SpatialGrid::new(-0.5 * n as f64 * dx, (0.5 * n as f64 - 1.0) * dx, n).map_err(|e| invalid(e.to_string()))?;
    let x0 = match direction {
        Direction::FromLeft => -dist,
        Direction::FromRight => dist,
    };
    let k = match direction {
        Direction::FromLeft => v0,
        Direction::FromRight => -v0,
    };
    let packet = WavePacket::gaussian(&grid, x0, k, sigma_k, 0.25 * v0)?;
    let mut cfg = PropagationConfig::for_grid(&grid);
    cfg.absorber_width = absorber;
    Ok((packet, cfg))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockKind {
    Larmor,
    Dissipative,
    Energy,
}

impl ClockKind {
    pub fn name(self) -> &'static str {
        match self {
            ClockKind::Larmor => "larmor",
            ClockKind::Dissipative => "dissipative",
            ClockKind::Energy => "energy",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClockRun {
    pub kind: ClockKind,
    pub couplings: Vec<f64>,
    pub readings: Vec<f64>,
    /// Zero-coupling value from a quadratic fit.
    pub extrapolated: f64,
    pub error: f64,
    /// Set when some coupling is outside the leading-order regime.
    pub flagged: bool,
}

fn extrapolate(kind: ClockKind, couplings: &[f64], readings: Vec<f64>, flagged: bool) -> Result<ClockRun, DynamicsError> {
    if couplings.len() < 3 {
        return Err(invalid("extrapolation needs at least three couplings"));
    }
    if readings.iter().any(|r| !r.is_finite()) {
        return Err(invalid("non-finite clock reading"));
    }
    let (c, rms) = numeric::polyfit(couplings, &readings, 2);
    let mut error = rms;
    if flagged {
        let hi = readings.iter().copied().fold(f64::MIN, f64::max);
        let lo = readings.iter().copied().fold(f64::MAX, f64::min);
        error = error.max(hi - lo);
    }
    Ok(ClockRun { kind, couplings: couplings.to_vec(), readings, extrapolated: c[0], error, flagged })
}

fn check_couplings(c: &[f64]) -> Result<(), DynamicsError> {
    if c.len() < 3 || c.iter().any(|&x| !(x > 0.0)) {
        return Err(invalid("need at least three positive couplings"));
    }
    Ok(())
}

/// Runs propagators in lockstep until every one has left the region.
fn run_until_quiet(props: &mut [Propagator], region_w: &[f64], cfg: &PropagationConfig, mut each: impl FnMut(&[Propagator]) -> Result<(), DynamicsError>) -> Result<(), DynamicsError> {
    let mut quiet = 0;
    let mut entered = false;
    while quiet < cfg.quiet_steps {
        if props[0].step >= cfg.max_steps {
            return Err(DynamicsError::WindowTooShort { start: 0.0, end: weighted(&props[0].phi, region_w) * props[0].dx });
        }
        let hot = props.iter().any(|p| weighted(&p.phi, region_w) * p.dx >= cfg.threshold);
        entered |= hot;
        quiet = if entered && !hot { quiet + 1 } else { 0 };
        props.iter_mut().for_each(|p| p.advance());
        each(props)?;
    }
    Ok(())
}

fn check_contained(props: &[Propagator]) -> Result<(), DynamicsError> {
    let lost = props.iter().map(|p| p.absorbed).fold(0.0, f64::max);
    if lost > 1e-8 {
        return Err(DynamicsError::GridTooSmall(lost));
    }
    Ok(())
}

/// Spin precession in a weak field confined to the region: the
/// components see V +- (omega/2) chi, and the reading is minus the
/// accumulated phase of <S_+> over omega.
pub fn larmor_clock(p: &Potential, packet: &WavePacket, region: &Region, couplings: &[f64], cfg: &PropagationConfig) -> Result<ClockRun, DynamicsError> {
    check_couplings(couplings)?;
    let w = cell_weights(&packet.grid, region);
    let mut readings = Vec::with_capacity(couplings.len());
    let mut flagged = false;
    for &om in couplings {
        let mut props = [
            Propagator::new(p, packet, &packet.values, Perturbation::Static(0.5 * om, *region), cfg)?,
            Propagator::new(p, packet, &packet.values, Perturbation::Static(-0.5 * om, *region), cfg)?,
        ];
        let mut prev = 0.0;
        let mut phase = 0.0;
        let mut k = 0;
        run_until_quiet(&mut props, &w, cfg, |ps| {
            k += 1;
            if k % 20 == 0 {
                let ov: C = ps[1].phi.iter().zip(&ps[0].phi).map(|(a, b)| a.conj() * b).sum::<C>() * ps[0].dx;
                let a = ov.arg();
                let mut d = a - prev;
                d -= 2.0 * PI * (d / (2.0 * PI)).round();
                phase += d;
                prev = a;
                if phase.abs() > PI {
                    return Err(DynamicsError::PrecessionTooLarge(phase.abs()));
                }
            }
            Ok(())
        })?;
        check_contained(&props)?;
        let ov: C = props[1].phi.iter().zip(&props[0].phi).map(|(a, b)| a.conj() * b).sum::<C>() * props[0].dx;
        let mut d = ov.arg() - prev;
        d -= 2.0 * PI * (d / (2.0 * PI)).round();
        phase += d;
        if phase.abs() > PI {
            return Err(DynamicsError::PrecessionTooLarge(phase.abs()));
        }
        // spin-flip probability to leading order
        flagged |= 0.5 * (1.0 - ov.norm()) > 1e-3;
        readings.push(-phase / om);
    }
    extrapolate(ClockKind::Larmor, couplings, readings, flagged)
}

/// Absorption -i lambda chi; the reading is -ln(survival) / (2 lambda).
pub fn dissipative_clock(p: &Potential, packet: &WavePacket, region: &Region, couplings: &[f64], cfg: &PropagationConfig) -> Result<ClockRun, DynamicsError> {
    check_couplings(couplings)?;
    let w = cell_weights(&packet.grid, region);
    let n0 = packet.norm().powi(2);
    let mut readings = Vec::with_capacity(couplings.len());
    let mut flagged = false;
    for &lam in couplings {
        let mut props = [Propagator::new(p, packet, &packet.values, Perturbation::Absorbing(lam, *region), cfg)?];
        run_until_quiet(&mut props, &w, cfg, |_| Ok(()))?;
        check_contained(&props)?;
        let survive = (props[0].norm_sqr() + props[0].absorbed) / n0;
        flagged |= survive < 0.5;
        readings.push(-survive.ln() / (2.0 * lam));
    }
    extrapolate(ClockKind::Dissipative, couplings, readings, flagged)
}

/// Drift of <H> under V + lambda (t - t_c) chi, over lambda, relative to
/// the lambda = 0 run on the same grid. t_c is the classical arrival time
/// of the packet centre at the region centre; it only moves the ramp, not
/// the leading-order reading.
pub fn energy_clock(p: &Potential, packet: &WavePacket, region: &Region, couplings: &[f64], cfg: &PropagationConfig) -> Result<ClockRun, DynamicsError> {
    check_couplings(couplings)?;
    let (base, readings) = energy_drifts(p, packet, region, couplings, cfg)?;
    let flagged = base.abs() > 1e-6;
    let readings = readings.into_iter().zip(couplings).map(|(d, l)| (d - base) / l).collect();
    extrapolate(ClockKind::Energy, couplings, readings, flagged)
}

/// Energy drift with lambda = 0 and for each coupling.
pub fn energy_drifts(p: &Potential, packet: &WavePacket, region: &Region, couplings: &[f64], cfg: &PropagationConfig) -> Result<(f64, Vec<f64>), DynamicsError> {
    let w = cell_weights(&packet.grid, region);
    let e0 = packet.energy(p);
    let t_c = (region.center - packet.mean_position()) / packet.mean_momentum();
    let drift = |lam: f64| -> Result<f64, DynamicsError> {
        let pert = if lam == 0.0 { Perturbation::None } else { Perturbation::Ramp(lam, *region, t_c) };
        let mut props = [Propagator::new(p, packet, &packet.values, pert, cfg)?];
        run_until_quiet(&mut props, &w, cfg, |_| Ok(()))?;
        check_contained(&props)?;
        let end = WavePacket { grid: packet.grid, values: props[0].state(), spinor: None };
        Ok(end.energy(p) - e0)
    };
    let base = drift(0.0)?;
    let rest = couplings.iter().map(|&l| drift(l)).collect::<Result<Vec<_>, _>>()?;
    Ok((base, rest))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearResponse {
    /// Zero-coupling limit of Re <i S^dag dS/d lambda>.
    pub value: f64,
    pub couplings: Vec<f64>,
    pub estimates: Vec<f64>,
}

fn response_at(p: &Potential, region: &Region, e: f64, dir: Direction, lam: f64) -> Result<f64, DynamicsError> {
    let plus = p.with_region_coupling(lam, region).map_err(|e| invalid(e.to_string()))?;
    let minus = p.with_region_coupling(-lam, region).map_err(|e| invalid(e.to_string()))?;
    if matches!(p.geometry, Geometry::Radial { .. }) {
        let s0 = stationary::radial_s(p, e)?;
        let d = (stationary::radial_s(&plus, e)? - stationary::radial_s(&minus, e)?) / (2.0 * lam);
        return Ok((C::i() * s0.conj() * d).re);
    }
    let s0 = stationary::s_matrix(p, e)?.channel(dir);
    let sp = stationary::s_matrix(&plus, e)?.channel(dir);
    let sm = stationary::s_matrix(&minus, e)?.channel(dir);
    let dt = (sp.0 - sm.0) / (2.0 * lam);
    let dr = (sp.1 - sm.1) / (2.0 * lam);
    Ok((C::i() * (s0.0.conj() * dt + s0.1.conj() * dr)).re)
}

/// i hbar <phi| S^dag dS/d lambda |phi> for V + lambda chi_region, from
/// central differences at each coupling extrapolated linearly in lambda^2.
pub fn linear_response_check(p: &Potential, inc: &Incoming, region: &Region, couplings: &[f64]) -> Result<LinearResponse, DynamicsError> {
    if couplings.len() < 2 || couplings.iter().any(|&l| !(l > 0.0)) {
        return Err(invalid("need at least two positive couplings"));
    }
    let mut estimates = Vec::with_capacity(couplings.len());
    for &lam in couplings {
        let vals = inc.energies.iter().map(|&e| response_at(p, region, e, inc.direction, lam)).collect::<Result<Vec<_>, _>>()?;
        estimates.push(inc.weights.iter().zip(&vals).map(|(w, v)| w * v).sum());
    }
    let l2: Vec<f64> = couplings.iter().map(|l| l * l).collect();
    let value = numeric::linear_fit(&l2, &estimates).intercept;
    Ok(LinearResponse { value, couplings: couplings.to_vec(), estimates })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositiveTimeFit {
    pub radii: Vec<f64>,
    pub sojourns: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Integral of (1/v) |phi(E)|^2.
    pub mean_inverse_velocity: f64,
}

/// Free-evolution sojourn in B_r restricted to t >= 0 (or all t with
/// `full_time`) for each radius, and a straight-line fit against r.
pub fn positive_time_sojourn(packet: &WavePacket, radii: &[f64], full_time: bool) -> Result<PositiveTimeFit, DynamicsError> {
    if radii.len() < 2 {
        return Err(invalid("need at least two radii"));
    }
    let inc = packet.incoming()?;
    let inv_v: f64 = inc.energies.iter().zip(&inc.weights).map(|(&e, w)| w / velocity(e)).sum();
    let v_max = inc.energies.iter().map(|&e| velocity(e)).fold(0.0, f64::max);
    let dist = packet.momentum_distribution();
    let kbar: f64 = dist.iter().map(|(k, w)| k * w).sum();
    let sk = dist.iter().map(|(k, w)| w * (k - kbar).powi(2)).sum::<f64>().sqrt().max(1e-6);
    let dt = (0.5 / sk) / (20.0 * v_max);
    let regions: Vec<Region> = radii.iter().map(|&r| Region::sharp(r)).collect();
    let weights: Vec<Vec<f64>> = regions.iter().map(|r| cell_weights(&packet.grid, r)).collect();
    let dx = packet.grid.dx();
    let edge: Vec<f64> = (0..packet.grid.n_points)
        .map(|i| {
            let x = packet.grid.x(i);
            let band = 0.05 * (packet.grid.x_max - packet.grid.x_min);
            if x < packet.grid.x_min + band || x > packet.grid.x_max - band {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mut f = Fourier::new(&packet.grid);
    let mut spec = packet.values.clone();
    f.forward(&mut spec);
    let mut sample = |t: f64| -> Result<Vec<f64>, DynamicsError> {
        let mut v: Vec<C> = spec.iter().zip(&f.k).map(|(z, &k)| z * C::from_polar(1.0, -0.5 * k * k * t)).collect();
        f.inverse(&mut v);
        let wall = weighted(&v, &edge) * dx;
        if wall > 1e-10 {
            return Err(DynamicsError::GridTooSmall(wall));
        }
        Ok(weights.iter().map(|w| weighted(&v, w) * dx).collect())
    };
    let mut integrate_dir = |sign: f64| -> Result<Vec<f64>, DynamicsError> {
        let mut acc = vec![0.0; radii.len()];
        let mut prev = sample(0.0)?;
        let mut quiet = 0;
        let mut j = 1;
        while quiet < 100 {
            let cur = sample(sign * j as f64 * dt)?;
            for (a, (x, y)) in acc.iter_mut().zip(prev.iter().zip(&cur)) {
                *a += 0.5 * dt * (x + y);
            }
            quiet = if cur.iter().all(|&x| x < 1e-12) { quiet + 1 } else { 0 };
            prev = cur;
            j += 1;
            if j > 10_000_000 {
                return Err(DynamicsError::WindowTooShort { start: 0.0, end: prev.iter().copied().fold(0.0, f64::max) });
            }
        }
        Ok(acc)
    };
    let mut sojourns = integrate_dir(1.0)?;
    if full_time {
        let back = integrate_dir(-1.0)?;
        sojourns.iter_mut().zip(back).for_each(|(a, b)| *a += b);
    }
    let fit = numeric::linear_fit(radii, &sojourns);
    Ok(PositiveTimeFit { radii: radii.to_vec(), sojourns, slope: fit.slope, intercept: fit.intercept, mean_inverse_velocity: inv_v })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sojourn;

    fn free_packet(k0: f64, x0: f64) -> WavePacket {
        let grid = SpatialGrid::new(-400.0, 400.0 - 0.2, 4000).unwrap();
        WavePacket::gaussian(&grid, x0, k0, 0.05, 0.25 * k0).unwrap()
    }

    #[test]
    fn free_motion_follows_ehrenfest() {
        let pk = free_packet(2.0, -100.0);
        assert!((pk.norm() - 1.0).abs() < 1e-12);
        let mut cfg = PropagationConfig::for_grid(&pk.grid);
        cfg.absorber_width = 0.0;
        let v = pk.mean_momentum();
        assert!((v - 2.0).abs() < 1e-6);
        let snaps = propagate(&Potential::free(), &pk, Perturbation::None, &cfg, 2000, 500).unwrap();
        let x0 = pk.mean_position();
        for (t, s) in &snaps {
            assert!((s.mean_position() - x0 - v * t).abs() < 1e-6, "t={t}");
            assert!((s.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn step_limit_enforced() {
        let pk = free_packet(1.0, 0.0);
        let mut cfg = PropagationConfig::for_grid(&pk.grid);
        cfg.dt *= 2.0;
        assert!(matches!(propagate(&Potential::free(), &pk, Perturbation::None, &cfg, 1, 1), Err(DynamicsError::StepTooLarge { .. })));
    }

    #[test]
    fn absorbing_norm_decreases() {
        let pk = free_packet(1.0, -40.0);
        let cfg = PropagationConfig::for_grid(&pk.grid);
        let snaps = propagate(&Potential::free(), &pk, Perturbation::Absorbing(0.05, Region::sharp(10.0)), &cfg, 6000, 300).unwrap();
        let norms: Vec<f64> = snaps.iter().map(|s| s.1.norm()).collect();
        assert!(norms.windows(2).skip(3).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn barrier_split_weights() {
        // steps sit between grid points; at dx = 0.25 the split is good to ~0.1% here
        let p = Potential::square(1.0, -0.5, 0.5).unwrap();
        let (pk, cfg) = launch(&p, 1.0, 0.05, 1.0, Direction::FromLeft).unwrap();
        let inc = pk.incoming().unwrap();
        let t2: f64 = inc.energies.iter().zip(&inc.weights).map(|(&e, w)| w * stationary::s_matrix(&p, e).unwrap().transmission()).sum();
        let n = (160.0 / cfg.dt) as usize;
        let snaps = propagate(&p, &pk, Perturbation::None, &cfg, n, n).unwrap();
        let last = &snaps.last().unwrap().1;
        let dx = last.grid.dx();
        let right: f64 = last.values.iter().enumerate().filter(|(i, _)| last.grid.x(*i) > 0.5).map(|(_, z)| z.norm_sqr()).sum::<f64>() * dx;
        let left: f64 = last.values.iter().enumerate().filter(|(i, _)| last.grid.x(*i) < -0.5).map(|(_, z)| z.norm_sqr()).sum::<f64>() * dx;
        assert!((right - t2).abs() < 0.01 * t2, "{right} vs {t2}");
        assert!((left - (1.0 - t2)).abs() < 0.01 * (1.0 - t2), "{left}");
    }

    #[test]
    fn free_direct_sojourn_and_positivity() {
        let p = Potential::free();
        let (pk, cfg) = launch(&p, 1.0, 0.02, 10.0, Direction::FromLeft).unwrap();
        let regs = [Region::sharp(10.0)];
        let s = record_region_probabilities(&p, &pk, &regs, &cfg).unwrap();
        let d = direct_sojourn(&s, 0, None).unwrap();
        assert!((d.value - 20.0).abs() < 0.02 * 20.0, "{d:?}");
        // shifting the time labels leaves the integral unchanged
        let mut shifted = s.clone();
        shifted.times.iter_mut().for_each(|t| *t += 17.25);
        assert!((direct_sojourn(&shifted, 0, None).unwrap().value - d.value).abs() < 1e-9 * d.value);
        let short = direct_sojourn(&s, 0, Some((0.0, 0.1))).unwrap();
        assert!(short.value > 0.0);
        let bad = ProbabilitySeries { times: s.times[..s.times.len() / 2].to_vec(), probs: vec![s.probs[0][..s.times.len() / 2].to_vec()], ..s.clone() };
        assert!(matches!(direct_sojourn(&bad, 0, None), Err(DynamicsError::WindowTooShort { .. })));
    }

    #[test]
    fn far_packet_tiny_window_matches_gaussian_tail() {
        let grid = SpatialGrid::new(-300.0, 300.0 - 0.05, 12000).unwrap();
        let (sk, x0, k0) = (0.05, -100.0, 1.0);
        let pk = WavePacket::gaussian(&grid, x0, k0, sk, 0.0).unwrap();
        let mut cfg = PropagationConfig::for_grid(&grid);
        cfg.dt = 0.01;
        let region = Region::sharp(1.0);
        let mut ps = vec![];
        let mut ts = vec![];
        for j in 0..=10 {
            let t = j as f64 * cfg.dt;
            ts.push(t);
            ps.push(pk.free_evolved(t).region_probability(&region));
        }
        let s = ProbabilitySeries { regions: vec![region], times: ts, probs: vec![ps], absorbed: 0.0, final_norm: 1.0, complete: false };
        let d = direct_sojourn(&s, 0, Some((0.0, 0.1))).unwrap();
        assert!(d.value > 0.0);
        // free Gaussian: |psi_t|^2 is normal with mean x0 + k0 t, variance sx^2 + (sk t)^2
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
        assert!((d.value - want).abs() < 1e-3 * want, "{} vs {}", d.value, want);
    }

    #[test]
    fn barrier_direct_sojourn_matches_onshell() {
        let p = Potential::square(1.0, -0.5, 0.5).unwrap();
        let (pk, cfg) = launch(&p, 1.0, 0.05, 5.0, Direction::FromLeft).unwrap();
        let regs = [Region::sharp(5.0)];
        let s = record_region_probabilities(&p, &pk, &regs, &cfg).unwrap();
        let d = direct_sojourn(&s, 0, None).unwrap().value;
        let inc = pk.incoming().unwrap();
        let mut want = 0.0;
        for (&e, w) in inc.energies.iter().zip(&inc.weights) {
            let st = stationary::line_state(&p, e, Direction::FromLeft).unwrap();
            want += w * sojourn::onshell_sojourn_in(&p, &st, &regs[0]).unwrap().value;
        }
        assert!((d - want).abs() < 0.02 * want, "{d} vs {want}");
    }

    #[test]
    fn clocks_agree_for_free_packet() {
        let p = Potential::free();
        let (pk, cfg) = launch(&p, 1.0, 0.05, 10.0, Direction::FromLeft).unwrap();
        let reg = Region::sharp(10.0);
        let s = record_region_probabilities(&p, &pk, &[reg], &cfg).unwrap();
        let d = direct_sojourn(&s, 0, None).unwrap().value;
        let c = [2.5e-4, 5e-4, 1e-3, 2.5e-3];
        let lar = larmor_clock(&p, &pk, &reg, &c, &cfg).unwrap();
        let dis = dissipative_clock(&p, &pk, &reg, &c, &cfg).unwrap();
        let en = energy_clock(&p, &pk, &reg, &c, &cfg).unwrap();
        for run in [&lar, &dis, &en] {
            assert!((run.extrapolated - d).abs() < 0.01 * d, "{:?} vs {d}", run);
        }
        let big = larmor_clock(&p, &pk, &reg, &[0.5, 1.0, 2.0], &cfg);
        assert!(matches!(big, Err(DynamicsError::PrecessionTooLarge(_))));
    }

    #[test]
    fn heavy_absorption_is_flagged() {
        let p = Potential::free();
        let (pk, cfg) = launch(&p, 1.0, 0.1, 5.0, Direction::FromLeft).unwrap();
        let run = dissipative_clock(&p, &pk, &Region::sharp(5.0), &[0.02, 0.05, 0.1], &cfg).unwrap();
        assert!(run.flagged);
        assert!(run.error > 0.1);
    }

    #[test]
    fn zero_ramp_has_no_drift() {
        let p = Potential::free();
        let (pk, cfg) = launch(&p, 1.0, 0.1, 5.0, Direction::FromLeft).unwrap();
        let (base, _) = energy_drifts(&p, &pk, &Region::sharp(5.0), &[], &cfg).unwrap();
        assert!(base.abs() < 1e-10, "{base}");
    }

    #[test]
    fn linear_response_free_and_barrier() {
        let reg = Region::sharp(5.0);
        let lr = linear_response_check(&Potential::free(), &Incoming::fixed(0.5, Direction::FromLeft), &reg, &[1e-3, 2e-3, 4e-3]).unwrap();
        assert!((lr.value - 10.0).abs() < 1e-6, "{}", lr.value);
        let p = Potential::square(1.0, -0.5, 0.5).unwrap();
        for e in [0.3, 0.8, 1.7] {
            let lr = linear_response_check(&p, &Incoming::fixed(e, Direction::FromLeft), &reg, &[1e-3, 2e-3, 4e-3]).unwrap();
            let st = stationary::line_state(&p, e, Direction::FromLeft).unwrap();
            let want = sojourn::onshell_sojourn_in(&p, &st, &reg).unwrap().value;
            assert!((lr.value - want).abs() < 1e-4, "E={e}: {} vs {}", lr.value, want);
        }
    }

    #[test]
    fn positive_time_slope_and_shift() {
        let grid = SpatialGrid::new(-500.0, 500.0 - 0.25, 4000).unwrap();
        let radii = [40.0, 60.0, 80.0, 100.0];
        let a = positive_time_sojourn(&WavePacket::gaussian(&grid, 0.0, 2.0, 0.05, 0.5).unwrap(), &radii, false).unwrap();
        assert!((a.slope - a.mean_inverse_velocity).abs() < 1e-3 * a.mean_inverse_velocity, "{a:?}");
        assert!((a.slope - 0.5).abs() < 2e-3);
        let b = positive_time_sojourn(&WavePacket::gaussian(&grid, -5.0, 2.0, 0.05, 0.5).unwrap(), &radii, false).unwrap();
        assert!((b.intercept - a.intercept - 5.0 * a.mean_inverse_velocity).abs() < 1e-2, "{} {}", a.intercept, b.intercept);
        let full = positive_time_sojourn(&WavePacket::gaussian(&grid, -5.0, 2.0, 0.05, 0.5).unwrap(), &radii, true).unwrap();
        assert!((full.slope - 2.0 * full.mean_inverse_velocity).abs() < 1e-3);
        assert!(full.intercept.abs() < 1e-2, "{}", full.intercept);
    }
}
