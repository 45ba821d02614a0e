//! Quadrature, interpolation, fits and Riccati-Bessel functions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::ops::{AddAssign, Mul};
use std::sync::OnceLock;

/// Composite Simpson weights for n uniform samples spaced by h. An even
/// count closes with a 3/8 panel.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => return w,
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
            return w;
        }
        3 => {
            w[0] = h / 3.0;
            w[1] = 4.0 * h / 3.0;
            w[2] = h / 3.0;
            return w;
        }
        _ => {}
    }
    let simpson_end = if n % 2 == 1 { n - 1 } else { n - 4 };
    let mut i = 0;
    while i + 2 <= simpson_end {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
        i += 2;
    }
    if n % 2 == 0 {
        let j = n - 4;
        for (o, c) in [(0, 3.0), (1, 9.0), (2, 9.0), (3, 3.0)] {
            w[j + o] += c * h / 8.0;
        }
    }
    w
}

pub fn simpson(values: &[f64], h: f64) -> f64 {
    simpson_weights(values.len(), h).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// Lagrange interpolation of uniformly spaced samples using the
/// `half` nearest nodes on each side.
pub fn lagrange_uniform(values: &[Complex64], x0: f64, h: f64, x: f64, half: usize) -> Complex64 {
    let n = values.len();
    let m = (2 * half).min(n);
    let t = (x - x0) / h;
    let centre = t.floor() as isize;
    let start = (centre - half as isize + 1).clamp(0, (n - m) as isize) as usize;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in start..start + m {
        let mut c = 1.0;
        for i in start..start + m {
            if i != j {
                c *= (t - i as f64) / (j as f64 - i as f64);
            }
        }
        acc += values[j] * c;
    }
    acc
}

const GL_ORDER: usize = 10;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    })
}

/// Integral of f over [a, b] by Gauss-Legendre panels no wider than
/// `max_panel`, with panel edges forced at every breakpoint inside.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], max_panel: f64) -> f64 {
    integrate_gen(f, a, b, breaks, max_panel)
}

pub fn integrate_c<F: FnMut(f64) -> Complex64>(f: F, a: f64, b: f64, breaks: &[f64], max_panel: f64) -> Complex64 {
    integrate_gen(f, a, b, breaks, max_panel)
}

/// Gauss-Legendre nodes and weights of the panels `integrate` would use.
pub fn quadrature(a: f64, b: f64, breaks: &[f64], max_panel: f64) -> Vec<(f64, f64)> {
    let mut out = vec![];
    if !(b > a) {
        return out;
    }
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    edges.extend(inner);
    edges.push(b);
    for w in edges.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let m = (len / max_panel).ceil().max(1.0) as usize;
        let h = len / m as f64;
        for j in 0..m {
            let mid = w[0] + (j as f64 + 0.5) * h;
            for &(x, wt) in gauss_legendre() {
                out.push((mid + 0.5 * h * x, 0.5 * h * wt));
            }
        }
    }
    out
}

pub fn integrate_gen<T, F>(mut f: F, a: f64, b: f64, breaks: &[f64], max_panel: f64) -> T
where
    T: Copy + Default + AddAssign + Mul<f64, Output = T>,
    F: FnMut(f64) -> T,
{
    let mut total = T::default();
    if !(b > a) {
        return total;
    }
    let mut edges = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    edges.extend(inner);
    edges.push(b);
    let nodes = gauss_legendre();
    for w in edges.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let m = (len / max_panel).ceil().max(1.0) as usize;
        let h = len / m as f64;
        for j in 0..m {
            let mid = w[0] + (j as f64 + 0.5) * h;
            let mut s = T::default();
            for &(x, wt) in nodes {
                s += f(mid + 0.5 * h * x) * wt;
            }
            total += s * (0.5 * h);
        }
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    LineFit { slope, intercept, residual }
}

/// Least-squares polynomial fit; returns coefficients (lowest order first)
/// and the rms residual.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> (Vec<f64>, f64) {
    let n = xs.len();
    let m = degree + 1;
    let a = DMatrix::from_fn(n, m, |i, j| xs[i].powi(j as i32));
    let b = DVector::from_column_slice(ys);
    let svd = a.clone().svd(true, true);
    let c = svd.solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(m));
    let res = &a * &c - b;
    (c.iter().copied().collect(), (res.norm_squared() / n as f64).sqrt())
}

/// Removes 2 pi (or `period`) jumps between successive samples.
pub fn unwrap(phases: &[f64], period: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(phases.len());
    let mut offset = 0.0;
    for (i, &p) in phases.iter().enumerate() {
        if i > 0 {
            let prev = phases[i - 1] + offset;
            let mut cur = p + offset;
            while cur - prev > 0.5 * period {
                cur -= period;
                offset -= period;
            }
            while cur - prev < -0.5 * period {
                cur += period;
                offset += period;
            }
        }
        out.push(p + offset);
    }
    out
}

/// Levenberg-Marquardt for a small residual vector.
pub fn levenberg_marquardt<F>(f: F, p0: &[f64], iters: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut p = p0.to_vec();
    let mut r = f(&p);
    let mut cost: f64 = r.iter().map(|x| x * x).sum();
    let mut mu = 1e-3;
    for _ in 0..iters {
        let m = r.len();
        let n = p.len();
        let mut jac = DMatrix::zeros(m, n);
        for j in 0..n {
            let h = 1e-7 * p[j].abs().max(1e-6);
            let mut q = p.clone();
            q[j] += h;
            let rq = f(&q);
            for i in 0..m {
                jac[(i, j)] = (rq[i] - r[i]) / h;
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += mu * (1.0 + jtj[(d, d)]);
            }
            let step = match a.lu().solve(&(-&g)) {
                Some(s) => s,
                None => break,
            };
            let q: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rq = f(&q);
            let cq: f64 = rq.iter().map(|x| x * x).sum();
            if cq.is_finite() && cq < cost {
                p = q;
                r = rq;
                let rel = (cost - cq) / cost.max(1e-300);
                cost = cq;
                mu = (mu * 0.3).max(1e-12);
                improved = rel > 1e-15;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

fn hankel_coeff(l: u32, m: u32) -> f64 {
    // (l+m)! / (m! (l-m)!)
    let mut c = 1.0;
    for i in (l - m + 1)..=(l + m) {
        c *= i as f64;
    }
    for i in 1..=m {
        c /= i as f64;
    }
    c
}

/// Outgoing Riccati-Hankel function h+_l(x) ~ exp(i(x - l pi/2)), equal to
/// -y_l(x) + i j_l(x) in the Riccati normalisation used here.
pub fn riccati_h_plus(l: u32, x: f64) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    let z = Complex64::new(0.0, 1.0 / (2.0 * x));
    let mut zm = Complex64::new(1.0, 0.0);
    for m in 0..=l {
        s += zm * hankel_coeff(l, m);
        zm *= z;
    }
    let phase = Complex64::from_polar(1.0, x - 0.5 * PI * l as f64);
    phase * s
}

/// Regular and irregular Riccati-Bessel functions (j, y) with
/// j ~ sin(x - l pi/2) and y ~ -cos(x - l pi/2).
pub fn riccati_jy(l: u32, x: f64) -> (f64, f64) {
    if l == 0 {
        return (x.sin(), -x.cos());
    }
    let h = riccati_h_plus(l, x);
    let y = -h.re;
    let j = if x < (l as f64 + 1.0) * 1.5 { riccati_j_series(l, x) } else { h.im };
    (j, y)
}

fn riccati_j_series(l: u32, x: f64) -> f64 {
    // x^(l+1) sum_m (-x^2/2)^m / (m! (2l+2m+1)!!)
    let mut df = 1.0;
    for i in 0..=l {
        df *= (2 * i + 1) as f64;
    }
    let mut term = x.powi(l as i32 + 1) / df;
    let mut sum = term;
    for m in 1..200 {
        term *= -0.5 * x * x / (m as f64 * (2 * l + 2 * m + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Decaying solution of the free closed-channel equation, ~ exp(-x).
pub fn riccati_k(l: u32, x: f64) -> f64 {
    let mut s = 0.0;
    let mut p = 1.0;
    for m in 0..=l {
        s += hankel_coeff(l, m) * p;
        p /= 2.0 * x;
    }
    (-x).exp() * s
}

/// d/dx of riccati_k.
pub fn riccati_k_prime(l: u32, x: f64) -> f64 {
    let mut s = 0.0;
    let mut ds = 0.0;
    for m in 0..=l {
        let c = hankel_coeff(l, m) * (2.0 * x).powi(-(m as i32));
        s += c;
        ds += -(m as f64) / x * c;
    }
    (-x).exp() * (ds - s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_for_cubics() {
        for n in [5usize, 6, 9, 12] {
            let h = 2.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 4.0).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn gauss_panels() {
        let v = integrate(|x| x.sin().powi(2), 0.0, 10.0, &[3.3], 0.7);
        assert!((v - (5.0 - (20.0f64).sin() / 4.0)).abs() < 1e-13);
        let c = integrate_c(|x| Complex64::from_polar(1.0, 2.0 * x), 0.0, 1.0, &[], 0.3);
        let exact = (Complex64::from_polar(1.0, 2.0) - 1.0) / Complex64::new(0.0, 2.0);
        assert!((c - exact).norm() < 1e-14);
    }

    #[test]
    fn riccati_l1_closed_form() {
        for &x in &[0.3, 1.0, 2.5, 7.0, 30.0] {
            let (j, y) = riccati_jy(1, x);
            let jx = x.sin() / x - x.cos();
            let yx = -x.cos() / x - x.sin();
            assert!((j - jx).abs() < 1e-13 * (1.0 + jx.abs()), "x={x}");
            assert!((y - yx).abs() < 1e-13 * (1.0 + yx.abs()), "x={x}");
        }
    }

    #[test]
    fn riccati_wronskian() {
        for l in 0..5 {
            for &x in &[0.8, 3.0, 11.0] {
                let h = 1e-5;
                let (j, y) = riccati_jy(l, x);
                let (jp, _) = riccati_jy(l, x + h);
                let (jm, _) = riccati_jy(l, x - h);
                let (_, yp) = riccati_jy(l, x + h);
                let (_, ym) = riccati_jy(l, x - h);
                let w = j * (yp - ym) / (2.0 * h) - y * (jp - jm) / (2.0 * h);
                assert!((w - 1.0).abs() < 1e-6, "l={l} x={x} w={w}");
            }
        }
    }

    #[test]
    fn riccati_k_solves_equation() {
        for l in 0..4u32 {
            let x = 2.0;
            let h = 1e-4;
            let d2 = (riccati_k(l, x + h) - 2.0 * riccati_k(l, x) + riccati_k(l, x - h)) / (h * h);
            let rhs = (1.0 + (l * (l + 1)) as f64 / (x * x)) * riccati_k(l, x);
            assert!((d2 - rhs).abs() < 1e-5 * rhs.abs(), "l={l}");
            let dp = (riccati_k(l, x + h) - riccati_k(l, x - h)) / (2.0 * h);
            assert!((dp - riccati_k_prime(l, x)).abs() < 1e-7);
        }
    }

    #[test]
    fn unwrap_removes_jumps() {
        let raw: Vec<f64> = (0..50).map(|i| ((i as f64 * 0.4) + PI).rem_euclid(2.0 * PI) - PI).collect();
        let u = unwrap(&raw, 2.0 * PI);
        for w in u.windows(2) {
            assert!((w[1] - w[0] - 0.4).abs() < 1e-12);
        }
    }

    #[test]
    fn lm_fits_lorentzian() {
        let xs: Vec<f64> = (0..60).map(|i| 0.8 + 0.4 * i as f64 / 59.0).collect();
        let model = |p: &[f64], x: f64| p[1] * p[1] / ((x - p[0]).powi(2) + p[1] * p[1]);
        let ys: Vec<f64> = xs.iter().map(|&x| model(&[1.02, 0.03], x)).collect();
        let (p, cost) = levenberg_marquardt(|p| xs.iter().zip(&ys).map(|(&x, &y)| model(p, x) - y).collect(), &[1.0, 0.05], 200);
        assert!(cost < 1e-20);
        assert!((p[0] - 1.02).abs() < 1e-8 && (p[1].abs() - 0.03).abs() < 1e-8);
    }

    #[test]
    fn line_and_poly_fits() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let f = linear_fit(&xs, &[3.0, 5.0, 7.0, 9.0]);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        let (c, r) = polyfit(&xs, &[1.0, 4.0, 9.0, 16.0], 2);
        assert!(c[0].abs() < 1e-10 && c[1].abs() < 1e-10 && (c[2] - 1.0).abs() < 1e-10 && r < 1e-10);
    }
}
