//! Units, potentials, energy profiles, membership functions and grids.
//!
//! Everything is in natural units with hbar = m = 1, so k = v = sqrt(2E).

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

use crate::numeric;

/// Smallest energy allowed in an incoming profile unless overridden.
pub const DEFAULT_E_MIN: f64 = 0.05;

pub fn wavenumber(e: f64) -> f64 {
    (2.0 * e).sqrt()
}

pub fn velocity(e: f64) -> f64 {
    (2.0 * e).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("table line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("profile reaches E = {e_low:.6} below E_min = {e_min}")]
    BelowEmin { e_low: f64, e_min: f64 },
    #[error("fourier components violate V_-n = conj(V_n) at n = {0}")]
    NotHermitian(i32),
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ModelError {
    ModelError::Invalid { name, reason: reason.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    FromLeft,
    FromRight,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Geometry {
    Line,
    /// Half line s >= 0 with angular momentum l. An optional hard core
    /// enforces u(a) = 0.
    Radial { l: u32, hard_core: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// g(u) = cos^2(pi u / 2) on [0, 1].
    CosSquared,
    /// g(u) = cos(pi u / 2) on [0, 1]; kinked at u = 1.
    HalfCosine,
    /// g(0) = 1 and zero elsewhere.
    Degenerate,
}

impl Shape {
    pub fn g(self, u: f64) -> f64 {
        if u <= 0.0 {
            return 1.0;
        }
        match self {
            Shape::CosSquared if u < 1.0 => (0.5 * PI * u).cos().powi(2),
            Shape::HalfCosine if u < 1.0 => (0.5 * PI * u).cos(),
            _ => 0.0,
        }
    }

    pub fn dg(self, u: f64) -> f64 {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        match self {
            Shape::CosSquared => -0.5 * PI * (PI * u).sin(),
            Shape::HalfCosine => -0.5 * PI * (0.5 * PI * u).sin(),
            Shape::Degenerate => 0.0,
        }
    }

    pub fn integral(self) -> f64 {
        match self {
            Shape::CosSquared => 0.5,
            Shape::HalfCosine => 2.0 / PI,
            Shape::Degenerate => 0.0,
        }
    }

    /// |g''(0+)|
    pub fn curvature_at_zero(self) -> f64 {
        match self {
            Shape::CosSquared => 0.5 * PI * PI,
            Shape::HalfCosine => 0.25 * PI * PI,
            Shape::Degenerate => 0.0,
        }
    }

    /// Integral of |g''| over (0, 1).
    pub fn curvature_integral(self) -> f64 {
        match self {
            Shape::CosSquared => PI,
            Shape::HalfCosine => 0.5 * PI,
            Shape::Degenerate => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::CosSquared => "cos2",
            Shape::HalfCosine => "halfcos",
            Shape::Degenerate => "degenerate",
        }
    }

    pub fn parse(s: &str) -> Option<Shape> {
        match s {
            "cos2" => Some(Shape::CosSquared),
            "halfcos" => Some(Shape::HalfCosine),
            "degenerate" => Some(Shape::Degenerate),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FuzzyProfile {
    pub r: f64,
    pub rho: f64,
    pub shape: Shape,
}

impl FuzzyProfile {
    pub fn new(r: f64, rho: f64, shape: Shape) -> Result<Self, ModelError> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(invalid("r", format!("must be >= 0, got {r}")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid("rho", format!("must be > 0, got {rho}")));
        }
        Ok(FuzzyProfile { r, rho, shape })
    }

    pub fn membership(&self, x: f64) -> f64 {
        let d = x.abs();
        if d <= self.r {
            1.0
        } else {
            self.shape.g((d - self.r) / self.rho)
        }
    }

    /// f(r, rho) = r + rho * integral of g.
    pub fn normalizer(&self) -> f64 {
        self.r + self.rho * self.shape.integral()
    }

    pub fn outer_radius(&self) -> f64 {
        match self.shape {
            Shape::Degenerate => self.r,
            _ => self.r + self.rho,
        }
    }

    /// Upper bound on the fixed-energy oscillating residual.
    pub fn oscillation_bound(&self, e: f64) -> f64 {
        let k = wavenumber(e);
        (self.shape.curvature_at_zero() + self.shape.curvature_integral()) / (k * self.rho * 4.0 * e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionKind {
    Sharp { r: f64 },
    Fuzzy(FuzzyProfile),
}

/// Ball (interval on the line, [0, r] on the half line) with optional
/// fuzzy boundary, centred at `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub center: f64,
    pub kind: RegionKind,
}

impl Region {
    pub fn sharp(r: f64) -> Region {
        Region { center: 0.0, kind: RegionKind::Sharp { r } }
    }

    pub fn fuzzy(p: FuzzyProfile) -> Region {
        Region { center: 0.0, kind: RegionKind::Fuzzy(p) }
    }

    pub fn centered(mut self, c: f64) -> Region {
        self.center = c;
        self
    }

    pub fn r(&self) -> f64 {
        match self.kind {
            RegionKind::Sharp { r } => r,
            RegionKind::Fuzzy(p) => p.r,
        }
    }

    pub fn rho(&self) -> f64 {
        match self.kind {
            RegionKind::Sharp { .. } => 0.0,
            RegionKind::Fuzzy(p) => p.rho,
        }
    }

    pub fn is_sharp(&self) -> bool {
        matches!(self.kind, RegionKind::Sharp { .. })
    }

    pub fn weight(&self, x: f64) -> f64 {
        let d = x - self.center;
        match self.kind {
            RegionKind::Sharp { r } => {
                if d.abs() <= r {
                    1.0
                } else {
                    0.0
                }
            }
            RegionKind::Fuzzy(p) => p.membership(d),
        }
    }

    pub fn normalizer(&self) -> f64 {
        match self.kind {
            RegionKind::Sharp { r } => r,
            RegionKind::Fuzzy(p) => p.normalizer(),
        }
    }

    pub fn outer_radius(&self) -> f64 {
        match self.kind {
            RegionKind::Sharp { r } => r,
            RegionKind::Fuzzy(p) => p.outer_radius(),
        }
    }

    /// Points where the weight or its derivatives are not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let c = self.center;
        let (r, o) = (self.r(), self.outer_radius());
        let mut v = vec![c - o, c - r, c + r, c + o];
        v.dedup();
        v
    }

    /// Same region with the radius (and rho on the same ratio) scaled.
    pub fn with_radius(&self, r: f64) -> Region {
        let kind = match self.kind {
            RegionKind::Sharp { .. } => RegionKind::Sharp { r },
            RegionKind::Fuzzy(p) => RegionKind::Fuzzy(FuzzyProfile { r, ..p }),
        };
        Region { center: self.center, kind }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Segments(Vec<Segment>),
    /// height * exp(-(x-center)^2 / (2 width^2)), cut to zero beyond
    /// cutoff widths.
    Gaussian { height: f64, center: f64, width: f64, cutoff: f64 },
    /// Linear interpolation between tabulated samples, zero outside.
    Table { xs: Vec<f64>, vs: Vec<f64> },
    /// height times a fuzzy membership centred at `center`.
    Membership { height: f64, profile: FuzzyProfile, center: f64 },
}

impl Term {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Term::Segments(segs) => segs
                .iter()
                .filter(|s| x >= s.a && x <= s.b)
                .map(|s| s.v)
                .next()
                .unwrap_or(0.0),
            Term::Gaussian { height, center, width, cutoff } => {
                let u = (x - center) / width;
                if u.abs() > *cutoff {
                    0.0
                } else {
                    height * (-0.5 * u * u).exp()
                }
            }
            Term::Table { xs, vs } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&xi| xi <= x).clamp(1, n - 1);
                let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                vs[i - 1] * (1.0 - t) + vs[i] * t
            }
            Term::Membership { height, profile, center } => height * profile.membership(x - center),
        }
    }

    fn slope(&self, x: f64) -> f64 {
        match self {
            Term::Segments(_) => 0.0,
            Term::Gaussian { height, center, width, cutoff } => {
                let u = (x - center) / width;
                if u.abs() > *cutoff {
                    0.0
                } else {
                    -height * u / width * (-0.5 * u * u).exp()
                }
            }
            Term::Table { xs, vs } => {
                let n = xs.len();
                if x < xs[0] || x > xs[n - 1] {
                    return 0.0;
                }
                let i = xs.partition_point(|&xi| xi <= x).clamp(1, n - 1);
                (vs[i] - vs[i - 1]) / (xs[i] - xs[i - 1])
            }
            Term::Membership { height, profile, center } => {
                let d = x - center;
                if d.abs() <= profile.r {
                    0.0
                } else {
                    height * profile.shape.dg((d.abs() - profile.r) / profile.rho) / profile.rho * d.signum()
                }
            }
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Term::Segments(segs) => {
                let nz: Vec<_> = segs.iter().filter(|s| s.v != 0.0).collect();
                if nz.is_empty() {
                    None
                } else {
                    Some((
                        nz.iter().map(|s| s.a).fold(f64::INFINITY, f64::min),
                        nz.iter().map(|s| s.b).fold(f64::NEG_INFINITY, f64::max),
                    ))
                }
            }
            Term::Gaussian { height, center, width, cutoff } => {
                if *height == 0.0 {
                    None
                } else {
                    Some((center - cutoff * width, center + cutoff * width))
                }
            }
            Term::Table { xs, vs } => {
                if vs.iter().all(|&v| v == 0.0) {
                    None
                } else {
                    Some((xs[0], xs[xs.len() - 1]))
                }
            }
            Term::Membership { height, profile, center } => {
                if *height == 0.0 {
                    None
                } else {
                    let o = profile.outer_radius();
                    Some((center - o, center + o))
                }
            }
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Term::Segments(segs) => {
                for s in segs {
                    out.push(s.a);
                    out.push(s.b);
                }
            }
            Term::Gaussian { .. } => {
                if let Some((a, b)) = self.support() {
                    out.push(a);
                    out.push(b);
                }
            }
            Term::Table { xs, .. } => out.extend_from_slice(xs),
            Term::Membership { profile, center, .. } => {
                let (r, o) = (profile.r, profile.outer_radius());
                out.extend_from_slice(&[center - o, center - r, center + r, center + o]);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    pub geometry: Geometry,
    terms: Vec<Term>,
}

impl Potential {
    pub fn free() -> Potential {
        Potential { geometry: Geometry::Line, terms: vec![] }
    }

    pub fn from_terms(geometry: Geometry, terms: Vec<Term>) -> Result<Potential, ModelError> {
        for t in &terms {
            validate_term(t)?;
        }
        if let Geometry::Radial { hard_core: Some(a), .. } = geometry {
            if !(a > 0.0) {
                return Err(invalid("hard_core", "radius must be positive"));
            }
        }
        Ok(Potential { geometry, terms })
    }

    pub fn piecewise(segments: Vec<Segment>) -> Result<Potential, ModelError> {
        Potential::from_terms(Geometry::Line, vec![Term::Segments(segments)])
    }

    /// Constant v0 on [a, b].
    pub fn square(v0: f64, a: f64, b: f64) -> Result<Potential, ModelError> {
        Potential::piecewise(vec![Segment { a, b, v: v0 }])
    }

    /// Two barriers of equal height and width around a central gap.
    pub fn double_barrier(height: f64, width: f64, gap: f64) -> Result<Potential, ModelError> {
        let h = 0.5 * gap;
        Potential::piecewise(vec![
            Segment { a: -h - width, b: -h, v: height },
            Segment { a: h, b: h + width, v: height },
        ])
    }

    pub fn gaussian(height: f64, center: f64, width: f64) -> Result<Potential, ModelError> {
        Potential::from_terms(
            Geometry::Line,
            vec![Term::Gaussian { height, center, width, cutoff: 8.0 }],
        )
    }

    pub fn tabulated(xs: Vec<f64>, vs: Vec<f64>) -> Result<Potential, ModelError> {
        Potential::from_terms(Geometry::Line, vec![Term::Table { xs, vs }])
    }

    /// Parses two-column decimal text (x, V) with '#' comments.
    pub fn parse_table(text: &str) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let (mut xs, mut vs) = (vec![], vec![]);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()).collect();
            if cols.len() != 2 {
                return Err(ModelError::Table { line: i + 1, reason: format!("expected 2 columns, got {}", cols.len()) });
            }
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| ModelError::Table { line: i + 1, reason: format!("not a number: {s}") })
            };
            xs.push(parse(cols[0])?);
            vs.push(parse(cols[1])?);
        }
        Ok((xs, vs))
    }

    pub fn radial(self, l: u32) -> Potential {
        let hard_core = match self.geometry {
            Geometry::Radial { hard_core, .. } => hard_core,
            Geometry::Line => None,
        };
        Potential { geometry: Geometry::Radial { l, hard_core }, ..self }
    }

    pub fn hard_core(a: f64, l: u32) -> Result<Potential, ModelError> {
        Potential::from_terms(Geometry::Radial { l, hard_core: Some(a) }, vec![])
    }

    pub fn with_term(&self, t: Term) -> Result<Potential, ModelError> {
        validate_term(&t)?;
        let mut p = self.clone();
        p.terms.push(t);
        Ok(p)
    }

    /// V + lambda * chi_region.
    pub fn with_region_coupling(&self, lambda: f64, region: &Region) -> Result<Potential, ModelError> {
        let t = match region.kind {
            RegionKind::Sharp { r } => Term::Segments(vec![Segment { a: region.center - r, b: region.center + r, v: lambda }]),
            RegionKind::Fuzzy(profile) => Term::Membership { height: lambda, profile, center: region.center },
        };
        self.with_term(t)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn slope(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.slope(x)).sum()
    }

    pub fn l(&self) -> u32 {
        match self.geometry {
            Geometry::Radial { l, .. } => l,
            Geometry::Line => 0,
        }
    }

    pub fn hard_core_radius(&self) -> Option<f64> {
        match self.geometry {
            Geometry::Radial { hard_core, .. } => hard_core,
            Geometry::Line => None,
        }
    }

    /// Interval outside of which V vanishes identically.
    pub fn support(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in &self.terms {
            if let Some((a, b)) = t.support() {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        if lo.is_finite() {
            Some((lo, hi))
        } else {
            None
        }
    }

    pub fn support_radius(&self) -> f64 {
        let core = self.hard_core_radius().unwrap_or(0.0);
        match self.support() {
            Some((a, b)) => a.abs().max(b.abs()).max(core),
            None => core,
        }
    }

    pub fn is_free(&self) -> bool {
        self.support().is_none() && self.hard_core_radius().is_none()
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = vec![];
        for t in &self.terms {
            t.breakpoints(&mut v);
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Merged piecewise-constant description, or None when some term is
    /// not piecewise constant.
    pub fn segments(&self) -> Option<Vec<Segment>> {
        if !self.terms.iter().all(|t| matches!(t, Term::Segments(_))) {
            return None;
        }
        let (lo, hi) = match self.support() {
            Some(s) => s,
            None => return Some(vec![]),
        };
        let cuts: Vec<f64> = self.breakpoints().into_iter().filter(|&x| x >= lo && x <= hi).collect();
        let mut out: Vec<Segment> = vec![];
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let v = self.eval(0.5 * (w[0] + w[1]));
            match out.last_mut() {
                Some(s) if s.v == v && s.b == w[0] => s.b = w[1],
                _ => out.push(Segment { a: w[0], b: w[1], v }),
            }
        }
        Some(out)
    }

    /// Rough range of V over its support, by sampling.
    pub fn range(&self) -> (f64, f64) {
        let (lo, hi) = match self.support() {
            Some(s) => s,
            None => return (0.0, 0.0),
        };
        let mut pts = self.breakpoints();
        let n = 2000;
        for i in 0..=n {
            pts.push(lo + (hi - lo) * i as f64 / n as f64);
        }
        let mut vmin: f64 = 0.0;
        let mut vmax: f64 = 0.0;
        for &x in &pts {
            for y in [x - 1e-12, x, x + 1e-12] {
                let v = self.eval(y);
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
        (vmin, vmax)
    }

    /// True when V(-x) = V(x) on the support.
    pub fn is_parity_symmetric(&self) -> bool {
        let (lo, hi) = match self.support() {
            Some(s) => s,
            None => return true,
        };
        if (lo + hi).abs() > 1e-12 {
            return false;
        }
        (0..=997).all(|i| {
            let x = hi * (i as f64 + 0.5) / 998.0;
            (self.eval(x) - self.eval(-x)).abs() < 1e-12
        })
    }
}

fn validate_term(t: &Term) -> Result<(), ModelError> {
    match t {
        Term::Segments(segs) => {
            for s in segs {
                if !(s.b > s.a) || !s.v.is_finite() {
                    return Err(invalid("segments", format!("bad segment [{}, {}] V={}", s.a, s.b, s.v)));
                }
            }
            let mut sorted = segs.clone();
            sorted.sort_by(|x, y| x.a.total_cmp(&y.a));
            if sorted.windows(2).any(|w| w[1].a < w[0].b) {
                return Err(invalid("segments", "segments overlap"));
            }
        }
        Term::Gaussian { width, cutoff, height, .. } => {
            if !(*width > 0.0) || !(*cutoff > 0.0) || !height.is_finite() {
                return Err(invalid("gaussian", "width and cutoff must be positive"));
            }
        }
        Term::Table { xs, vs } => {
            if xs.len() < 2 || xs.len() != vs.len() {
                return Err(invalid("table", "need at least two (x, V) rows"));
            }
            if xs.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(invalid("table", "x column must be strictly increasing"));
            }
        }
        Term::Membership { height, .. } => {
            if !height.is_finite() {
                return Err(invalid("membership", "height must be finite"));
            }
        }
    }
    Ok(())
}

/// V(s, t) = sum_n V_n(s) exp(-i n omega t) on the half line. V_0 is the
/// static part `base`; each V_n (n != 0) is a complex amplitude times a
/// real radial profile.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicPotential {
    pub base: Potential,
    pub omega: f64,
    harmonics: BTreeMap<i32, (Complex64, Potential)>,
}

impl PeriodicPotential {
    /// Builds the drive from its n > 0 components; negative ones follow by
    /// conjugation.
    pub fn new(base: Potential, omega: f64, positive: Vec<(i32, Complex64, Potential)>) -> Result<Self, ModelError> {
        let mut all = vec![];
        for (n, a, prof) in positive {
            if n <= 0 {
                return Err(invalid("fourier", "give only n > 0 components"));
            }
            all.push((-n, a.conj(), prof.clone()));
            all.push((n, a, prof));
        }
        PeriodicPotential::from_components(base, omega, all)
    }

    pub fn from_components(base: Potential, omega: f64, comps: Vec<(i32, Complex64, Potential)>) -> Result<Self, ModelError> {
        if !matches!(base.geometry, Geometry::Radial { .. }) {
            return Err(invalid("base", "periodic potentials are radial"));
        }
        if !(omega > 0.0) {
            return Err(invalid("omega", "must be positive"));
        }
        let mut harmonics = BTreeMap::new();
        for (n, a, prof) in comps {
            if n == 0 {
                return Err(invalid("fourier", "n = 0 is the base potential"));
            }
            harmonics.insert(n, (a, prof));
        }
        for (&n, (a, prof)) in &harmonics {
            match harmonics.get(&-n) {
                Some((b, q)) if (*b - a.conj()).norm() <= 1e-14 * (1.0 + a.norm()) && q == prof => {}
                _ => return Err(ModelError::NotHermitian(n)),
            }
        }
        Ok(PeriodicPotential { base, omega, harmonics })
    }

    pub fn static_only(base: Potential, omega: f64) -> Result<Self, ModelError> {
        PeriodicPotential::from_components(base, omega, vec![])
    }

    pub fn l(&self) -> u32 {
        self.base.l()
    }

    /// V_n(s).
    pub fn component(&self, n: i32, s: f64) -> Complex64 {
        if n == 0 {
            return Complex64::new(self.base.eval(s), 0.0);
        }
        match self.harmonics.get(&n) {
            Some((a, prof)) => a * prof.eval(s),
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn max_harmonic(&self) -> i32 {
        self.harmonics.keys().map(|n| n.abs()).max().unwrap_or(0)
    }

    /// Largest |n| whose component is above 1e-12, plus four buffer channels.
    pub fn default_truncation(&self) -> usize {
        let m = self
            .harmonics
            .iter()
            .filter(|(_, (a, prof))| a.norm() * prof.range().0.abs().max(prof.range().1.abs()) > 1e-12)
            .map(|(n, _)| n.unsigned_abs() as usize)
            .max()
            .unwrap_or(0);
        m + 4
    }

    pub fn support_radius(&self) -> f64 {
        self.harmonics.values().map(|(_, p)| p.support_radius()).fold(self.base.support_radius(), f64::max)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = self.base.breakpoints();
        for (_, p) in self.harmonics.values() {
            v.extend(p.breakpoints());
        }
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// V(s, t); real for a hermitian drive.
    pub fn eval(&self, s: f64, t: f64) -> Complex64 {
        let mut v = self.component(0, s);
        for &n in self.harmonics.keys() {
            v += self.component(n, s) * Complex64::from_polar(1.0, -(n as f64) * self.omega * t);
        }
        v
    }

    pub fn scaled_drive(&self, factor: f64) -> PeriodicPotential {
        let mut p = self.clone();
        for (a, _) in p.harmonics.values_mut() {
            *a *= factor;
        }
        p
    }
}

/// Incoming energy distribution phi(E) on a uniform energy grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyProfile {
    energies: Vec<f64>,
    amplitudes: Vec<Complex64>,
    weights: Vec<f64>,
    pub direction: Direction,
    /// Position where the matching free packet is centred at t = 0.
    pub x0: f64,
}

impl EnergyProfile {
    pub fn from_samples(energies: Vec<f64>, amplitudes: Vec<Complex64>, direction: Direction, e_min: f64) -> Result<Self, ModelError> {
        let n = energies.len();
        if n < 3 || n != amplitudes.len() {
            return Err(invalid("profile", "need at least 3 samples"));
        }
        let de = (energies[n - 1] - energies[0]) / (n - 1) as f64;
        if !(de > 0.0) || energies.windows(2).any(|w| ((w[1] - w[0]) - de).abs() > 1e-9 * de.max(1.0)) {
            return Err(invalid("profile", "energies must be uniform and increasing"));
        }
        if energies[0] < e_min || e_min <= 0.0 {
            return Err(ModelError::BelowEmin { e_low: energies[0], e_min });
        }
        let weights = numeric::simpson_weights(n, de);
        let norm: f64 = weights.iter().zip(&amplitudes).map(|(w, a)| w * a.norm_sqr()).sum();
        if !(norm > 0.0) {
            return Err(invalid("profile", "zero norm"));
        }
        let s = norm.sqrt();
        let amplitudes = amplitudes.into_iter().map(|a| a / s).collect();
        Ok(EnergyProfile { energies, amplitudes, weights, direction, x0: 0.0 })
    }

    /// Gaussian in energy, |phi|^2 ~ exp(-(E-E0)^2 / (2 sigma^2)), cut
    /// at `n_sigma` widths.
    pub fn gaussian(e0: f64, sigma: f64, n_sigma: f64, n: usize, direction: Direction, e_min: f64) -> Result<Self, ModelError> {
        if !(sigma > 0.0) {
            return Err(invalid("sigma", "must be positive"));
        }
        let n = n | 1;
        let (lo, hi) = (e0 - n_sigma * sigma, e0 + n_sigma * sigma);
        let es: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let amps = es.iter().map(|&e| Complex64::new((-(e - e0).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0)).collect();
        EnergyProfile::from_samples(es, amps, direction, e_min)
    }

    /// Energy profile of a free Gaussian packet with momentum amplitude
    /// ~ exp(-(k-k0)^2/(4 sigma_k^2)) centred at x0 at t = 0. For a
    /// packet from the left k > 0; from the right the packet moves with -k.
    pub fn from_momentum_gaussian(k0: f64, sigma_k: f64, x0: f64, n: usize, direction: Direction, e_min: f64) -> Result<Self, ModelError> {
        if !(k0 > 0.0 && sigma_k > 0.0) {
            return Err(invalid("k0", "k0 and sigma_k must be positive"));
        }
        let n = n | 1;
        let span = 8.0 * sigma_k;
        let (klo, khi) = (k0 - span, k0 + span);
        if klo <= 0.0 {
            return Err(ModelError::BelowEmin { e_low: 0.0, e_min });
        }
        let (elo, ehi) = (0.5 * klo * klo, 0.5 * khi * khi);
        let es: Vec<f64> = (0..n).map(|i| elo + (ehi - elo) * i as f64 / (n - 1) as f64).collect();
        let sign = if direction == Direction::FromLeft { 1.0 } else { -1.0 };
        let amps = es
            .iter()
            .map(|&e| {
                let k = wavenumber(e);
                let g = (-(k - k0).powi(2) / (4.0 * sigma_k * sigma_k)).exp() / k.sqrt();
                Complex64::from_polar(g, -sign * k * x0)
            })
            .collect();
        let mut p = EnergyProfile::from_samples(es, amps, direction, e_min)?;
        p.x0 = x0;
        Ok(p)
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.average(|_| 1.0)
    }

    /// Integral of f(E) |phi(E)|^2 dE.
    pub fn average(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.energies
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.weights)
            .map(|((&e, a), w)| w * a.norm_sqr() * f(e))
            .sum()
    }

    /// |phi(E_i)|^2 times the quadrature weight.
    pub fn density_weights(&self) -> Vec<f64> {
        self.amplitudes.iter().zip(&self.weights).map(|(a, w)| a.norm_sqr() * w).collect()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.energies[0], self.energies[self.energies.len() - 1])
    }

    /// Cubic interpolation of the amplitude onto n uniform samples over the
    /// same range. No renormalization is applied.
    pub fn resample(&self, n: usize) -> Result<EnergyProfile, ModelError> {
        let n = n.max(3) | 1;
        let (lo, hi) = self.range();
        let de = (hi - lo) / (self.len() - 1) as f64;
        let es: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let amps: Vec<Complex64> = es.iter().map(|&e| numeric::lagrange_uniform(&self.amplitudes, lo, de, e, 4)).collect();
        let weights = numeric::simpson_weights(n, (hi - lo) / (n - 1) as f64);
        Ok(EnergyProfile { energies: es, amplitudes: amps, weights, direction: self.direction, x0: self.x0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self, ModelError> {
        if !(x_max > x_min) || n_points < 2 {
            return Err(invalid("grid", "need x_max > x_min and at least two points"));
        }
        Ok(SpatialGrid { x_min, x_max, n_points })
    }

    /// Symmetric grid covering the support plus four de Broglie
    /// wavelengths at e_min on each side.
    pub fn covering(p: &Potential, e_min: f64, points_per_wavelength: usize) -> SpatialGrid {
        let lam = 2.0 * PI / wavenumber(e_min);
        let half = p.support_radius() + 4.0 * lam;
        let lo = if matches!(p.geometry, Geometry::Radial { .. }) { 0.0 } else { -half };
        let n = (((half - lo) / lam) * points_per_wavelength as f64).ceil() as usize + 1;
        SpatialGrid { x_min: lo, x_max: half, n_points: n.max(2) }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + self.dx() * i as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min - 1e-12 && x <= self.x_max + 1e-12
    }
}
