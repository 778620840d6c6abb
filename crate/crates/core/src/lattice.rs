//! Perforation lattice: hole shapes, the regime ratio, regime
//! classification, source checks and rasterised masks.
//!
//! Holes sit at `ε(x₀ + k)` for `k ∈ ℤ^d` and are copies of the model hole
//! scaled by `a_ε`. The torus is `[-mε/2, mε/2)^d`, discretised with `n`
//! cells per lattice period.

use std::f64::consts::PI;

use crate::error::{HomError, Result};
use crate::numerics::{Grid, MacDomain, ScalarField};

/// Geometry of the model hole `T` in its own (unit-cell) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum HoleShape {
    Ball { radius: f64 },
    /// `Σ |y_i / s_i|^p ≤ 1`.
    Superellipse { semi_axes: [f64; 3], exponent: f64 },
}

/// Model hole with the radii `δ₁ ≤ r_in(T)` and `r_out(T) ≤ δ₂ < 1/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct HoleModel {
    shape: HoleShape,
    delta1: f64,
    delta2: f64,
}

fn superellipse_radius(semi: &[f64; 3], p: f64, u: [f64; 3], d: usize) -> f64 {
    let s: f64 = (0..d).map(|i| (u[i] / semi[i]).abs().powf(p)).sum();
    s.powf(-1.0 / p)
}

/// Unit directions sampling the sphere, for in/out radius estimates.
fn sample_directions(d: usize) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    if d == 2 {
        for k in 0..720 {
            let t = 2.0 * PI * k as f64 / 720.0;
            out.push([t.cos(), t.sin(), 0.0]);
        }
    } else {
        for i in 0..90 {
            let th = PI * (i as f64 + 0.5) / 90.0;
            for k in 0..180 {
                let ph = 2.0 * PI * k as f64 / 180.0;
                out.push([th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
            }
        }
        // Axis and diagonal directions, where the extremes sit.
        let r = 1.0 / 3f64.sqrt();
        out.extend([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [r, r, r]]);
    }
    out
}

impl HoleModel {
    pub fn new(shape: HoleShape, delta1: f64, delta2: f64) -> Result<Self> {
        match &shape {
            HoleShape::Ball { radius } if !(*radius > 0.0) => {
                return Err(HomError::Config(format!("ball radius must be positive, got {radius}")))
            }
            HoleShape::Superellipse { semi_axes, exponent } => {
                if semi_axes.iter().any(|s| !(*s > 0.0)) {
                    return Err(HomError::Config("superellipse semi-axes must be positive".into()));
                }
                if !(*exponent >= 1.0) {
                    return Err(HomError::Config(format!("superellipse exponent must be >= 1, got {exponent}")));
                }
            }
            _ => {}
        }
        let model = Self { shape, delta1, delta2 };
        for d in [2, 3] {
            let (rin, rout) = (model.inner_radius(d), model.outer_radius(d));
            if !(delta1 > 0.0 && delta1 <= rin * (1.0 + 1e-12) && rout <= delta2 * (1.0 + 1e-12) && delta2 < 0.5) {
                return Err(HomError::Config(format!(
                    "need 0 < delta1 <= r_in and r_out <= delta2 < 1/2 (d={d}: delta1={delta1}, r_in={rin:.4}, r_out={rout:.4}, delta2={delta2})"
                )));
            }
        }
        Ok(model)
    }

    /// Ball of radius 0.25 with `δ₁ = 0.2`, `δ₂ = 0.3`.
    pub fn default_ball() -> Self {
        Self::new(HoleShape::Ball { radius: 0.25 }, 0.2, 0.3).expect("default hole is valid")
    }

    /// Ball of radius `r` with `δ₁ = 0.8 r` and `δ₂ = min(1.2 r, 0.49)`.
    pub fn ball(r: f64) -> Result<Self> {
        Self::new(HoleShape::Ball { radius: r }, 0.8 * r, (1.2 * r).min(0.49))
    }

    pub fn shape(&self) -> &HoleShape {
        &self.shape
    }

    pub fn delta1(&self) -> f64 {
        self.delta1
    }

    pub fn delta2(&self) -> f64 {
        self.delta2
    }

    /// Whether `y` (model coordinates) lies in `T`.
    #[inline]
    pub fn contains(&self, y: [f64; 3], d: usize) -> bool {
        match &self.shape {
            HoleShape::Ball { radius } => {
                let r2: f64 = (0..d).map(|i| y[i] * y[i]).sum();
                r2 < radius * radius
            }
            HoleShape::Superellipse { semi_axes, exponent } => {
                let s: f64 = (0..d).map(|i| (y[i] / semi_axes[i]).abs().powf(*exponent)).sum();
                s < 1.0
            }
        }
    }

    pub fn inner_radius(&self, d: usize) -> f64 {
        match &self.shape {
            HoleShape::Ball { radius } => *radius,
            HoleShape::Superellipse { semi_axes, exponent } => sample_directions(d)
                .into_iter()
                .map(|u| superellipse_radius(semi_axes, *exponent, u, d))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn outer_radius(&self, d: usize) -> f64 {
        match &self.shape {
            HoleShape::Ball { radius } => *radius,
            HoleShape::Superellipse { semi_axes, exponent } => {
                let sampled = sample_directions(d)
                    .into_iter()
                    .map(|u| superellipse_radius(semi_axes, *exponent, u, d))
                    .fold(0.0, f64::max);
                // For p >= 2 the farthest points are the axis tips.
                let tips = semi_axes[..d].iter().cloned().fold(0.0, f64::max);
                sampled.max(tips)
            }
        }
    }

    /// Exact volume of `T`.
    pub fn volume(&self, d: usize) -> f64 {
        match &self.shape {
            HoleShape::Ball { radius } => match d {
                2 => PI * radius * radius,
                _ => 4.0 / 3.0 * PI * radius.powi(3),
            },
            HoleShape::Superellipse { semi_axes, exponent } => {
                let p = *exponent;
                let g = gamma(1.0 + 1.0 / p);
                let prod: f64 = semi_axes[..d].iter().product();
                2f64.powi(d as i32) * prod * g.powi(d as i32) / gamma(1.0 + d as f64 / p)
            }
        }
    }
}

/// Lanczos approximation of the gamma function (|rel. error| < 1e-13 for x > 0).
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// `σ_ε = (ε^d / a^{d-2})^{1/2}` for `d = 3`, `ε |log(a/ε)|^{1/2}` for `d = 2`.
pub fn sigma_eps(d: usize, eps: f64, a_eps: f64) -> Result<f64> {
    if d != 2 && d != 3 {
        return Err(HomError::Dimension(d));
    }
    if !(eps > 0.0 && eps <= 1.0 && a_eps > 0.0 && a_eps <= eps) {
        return Err(HomError::Domain(format!("need 0 < a_eps <= eps <= 1, got eps={eps}, a_eps={a_eps}")));
    }
    if d == 2 {
        if a_eps == eps {
            return Err(HomError::DegenerateRatio);
        }
        Ok(eps * (a_eps / eps).ln().abs().sqrt())
    } else {
        Ok((eps.powi(3) / a_eps).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    Supercritical,
    Critical { sigma_star: f64 },
    Subcritical,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Supercritical => "supercritical",
            Regime::Critical { .. } => "critical",
            Regime::Subcritical => "subcritical",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Critical { sigma_star } => write!(f, "critical(sigma*={sigma_star})"),
            r => f.write_str(r.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegimeReport {
    /// `σ_ε` at each probe, in probe order.
    pub sigma_eps: Vec<f64>,
    pub label: Regime,
    /// Least-squares slope of `log σ_ε` against `log ε`.
    pub fitted_exponent: f64,
}

/// Relative spread below which `σ_ε` is treated as constant.
pub const CRITICAL_VARIATION: f64 = 1e-6;

/// Classifies the regime of the schedule `ε ↦ a_ε` from its trend over the
/// strictly decreasing probes.
pub fn classify_regime(d: usize, schedule: &dyn Fn(f64) -> f64, probe_eps: &[f64]) -> Result<RegimeReport> {
    if probe_eps.len() < 4 {
        return Err(HomError::InsufficientLadder { required: 4, got: probe_eps.len() });
    }
    if probe_eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(HomError::Config("probe list must be strictly decreasing".into()));
    }
    let sig: Vec<f64> = probe_eps
        .iter()
        .map(|&e| sigma_eps(d, e, schedule(e)))
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = probe_eps.iter().map(|e| e.ln()).collect();
    let ly: Vec<f64> = sig.iter().map(|s| s.ln()).collect();
    let fitted_exponent = crate::stats::linear_fit(&lx, &ly).slope;
    let max = sig.iter().cloned().fold(f64::MIN, f64::max);
    let min = sig.iter().cloned().fold(f64::MAX, f64::min);
    let label = if (max - min) / max < CRITICAL_VARIATION {
        Regime::Critical { sigma_star: sig.iter().sum::<f64>() / sig.len() as f64 }
    } else if sig.windows(2).all(|w| w[1] < w[0]) {
        Regime::Supercritical
    } else if sig.windows(2).all(|w| w[1] > w[0]) {
        Regime::Subcritical
    } else {
        return Err(HomError::Ambiguous(format!("sigma_eps is not monotone over the probes: {sig:?}")));
    };
    Ok(RegimeReport { sigma_eps: sig, label, fitted_exponent })
}

/// Full description of a perforated torus and its grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PerforationConfig {
    pub d: usize,
    pub eps: f64,
    pub a_eps: f64,
    /// Hole offset inside the unit cell `(-1/2, 1/2)^d`.
    pub x0: [f64; 3],
    pub hole: HoleModel,
    /// Lattice periods per torus side (`m`).
    pub torus_cells: usize,
    /// Grid cells per lattice period (`n`).
    pub cells_per_eps: usize,
    /// Minimum hole diameter, in grid cells, accepted by [`build_masks`].
    pub min_hole_span: f64,
}

/// Default resolution floor: the hole must span 8 grid cells per axis.
pub const DEFAULT_MIN_HOLE_SPAN: f64 = 8.0;

impl PerforationConfig {
    pub fn new(d: usize, eps: f64, a_eps: f64, torus_cells: usize, cells_per_eps: usize) -> Result<Self> {
        let c = Self {
            d,
            eps,
            a_eps,
            x0: [0.0; 3],
            hole: HoleModel::default_ball(),
            torus_cells,
            cells_per_eps,
            min_hole_span: DEFAULT_MIN_HOLE_SPAN,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_hole(mut self, hole: HoleModel) -> Result<Self> {
        self.hole = hole;
        self.validate()?;
        Ok(self)
    }

    pub fn with_x0(mut self, x0: [f64; 3]) -> Result<Self> {
        self.x0 = x0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_min_hole_span(mut self, span: f64) -> Self {
        self.min_hole_span = span;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d != 2 && self.d != 3 {
            return Err(HomError::Dimension(self.d));
        }
        if !(self.a_eps > 0.0 && self.a_eps <= self.eps && self.eps <= 1.0) {
            return Err(HomError::Config(format!(
                "need 0 < a_eps <= eps <= 1, got eps={}, a_eps={}",
                self.eps, self.a_eps
            )));
        }
        if self.torus_cells < 4 || self.torus_cells % 2 != 0 {
            return Err(HomError::Config(format!("torus_cells must be even and >= 4, got {}", self.torus_cells)));
        }
        if self.cells_per_eps < 8 {
            return Err(HomError::Config(format!("cells_per_eps must be >= 8, got {}", self.cells_per_eps)));
        }
        if self.x0[..self.d].iter().any(|x| !(x.abs() < 0.5)) {
            return Err(HomError::Config("x0 must lie in (-1/2, 1/2)^d".into()));
        }
        Ok(())
    }

    /// Hole ratio `η = a_ε / ε`.
    pub fn eta(&self) -> f64 {
        self.a_eps / self.eps
    }

    pub fn sigma(&self) -> Result<f64> {
        sigma_eps(self.d, self.eps, self.a_eps)
    }

    pub fn grid_len(&self) -> usize {
        self.torus_cells * self.cells_per_eps
    }

    pub fn side(&self) -> f64 {
        self.torus_cells as f64 * self.eps
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.grid_len(), self.side())
    }

    pub fn h(&self) -> f64 {
        self.eps / self.cells_per_eps as f64
    }

    /// Hole diameter measured in grid cells.
    pub fn hole_span(&self) -> f64 {
        2.0 * self.a_eps * self.hole.outer_radius(self.d) / self.h()
    }

    /// Errors when the hole is thinner than the configured floor.
    pub fn check_resolution(&self) -> Result<()> {
        let span = self.hole_span();
        if span < self.min_hole_span {
            return Err(HomError::Resolution { cells: span, required: self.min_hole_span });
        }
        Ok(())
    }

    /// Whether `x0` sits on the cell grid, as tiling a cell solution needs.
    pub fn x0_on_grid(&self) -> bool {
        let n = self.cells_per_eps as f64;
        self.x0[..self.d].iter().all(|x| ((x * n) - (x * n).round()).abs() < 1e-9)
    }
}

/// Offset of grid index `j` (torus grid) inside its lattice period, in
/// units of `ε`, relative to the period centre: `(l - n/2)/n` with the local
/// index `l = (j - N/2 + n/2) mod n`.
#[inline]
pub fn local_offset(j: usize, n_total: usize, n: usize) -> f64 {
    let l = (j + n_total + n / 2 - n_total / 2) % n;
    (l as f64 - (n / 2) as f64) / n as f64
}

/// Wraps `y` into `[-1/2, 1/2)`.
#[inline]
pub fn wrap_half(y: f64) -> f64 {
    y - (y + 0.5).floor()
}

/// Position relative to the nearest hole centre, in units of `ε`, for a
/// point given by its per-axis period offsets.
#[inline]
pub fn relative_to_hole(offsets: [f64; 3], x0: [f64; 3], d: usize) -> [f64; 3] {
    let mut y = [0.0; 3];
    for a in 0..d {
        y[a] = wrap_half(offsets[a] - x0[a]);
    }
    y
}

/// Cell-centred solid indicator of `η T` on a periodic grid with `n` cells
/// per lattice period; every period sees the identical pattern.
pub fn rasterize(grid: &Grid, n: usize, eta: f64, x0: [f64; 3], hole: &HoleModel) -> Vec<bool> {
    let d = grid.dim();
    let nt = grid.n();
    let offs: Vec<f64> = (0..nt).map(|j| local_offset(j, nt, n)).collect();
    (0..grid.len())
        .map(|i| {
            let c = grid.coords(i);
            let mut o = [0.0; 3];
            for a in 0..d {
                o[a] = offs[c[a]];
            }
            let y = relative_to_hole(o, x0, d);
            let mut z = [0.0; 3];
            for a in 0..d {
                z[a] = y[a] / eta;
            }
            hole.contains(z, d)
        })
        .collect()
}

/// Rasterised masks of a perforated torus.
#[derive(Clone, Debug)]
pub struct Masks {
    pub grid: Grid,
    /// Solid cell indicator.
    pub solid: Vec<bool>,
    /// Per-axis solid face indicator (a face is solid iff an adjacent cell is).
    pub solid_faces: Vec<Vec<bool>>,
}

impl Masks {
    /// Masks with no solid cells, for hole-free reference solves.
    pub fn hole_free(grid: Grid) -> Self {
        let len = grid.len();
        Self { grid, solid: vec![false; len], solid_faces: vec![vec![false; len]; grid.dim()] }
    }

    pub fn fluid(&self) -> Vec<bool> {
        self.solid.iter().map(|s| !s).collect()
    }

    pub fn domain(&self) -> MacDomain {
        MacDomain::from_solid(self.grid, &self.solid)
    }

    pub fn solid_count(&self) -> usize {
        self.solid.iter().filter(|&&s| s).count()
    }

    /// Solid volume fraction.
    pub fn solid_fraction(&self) -> f64 {
        self.solid_count() as f64 / self.solid.len() as f64
    }

    /// Flat byte array: 1 for solid, 0 for fluid.
    pub fn solid_bytes(&self) -> Vec<u8> {
        self.solid.iter().map(|&s| s as u8).collect()
    }
}

/// Rasterises the holes of `config`, checking the resolution floor.
pub fn build_masks(config: &PerforationConfig) -> Result<Masks> {
    config.validate()?;
    config.check_resolution()?;
    let grid = config.grid()?;
    let solid = rasterize(&grid, config.cells_per_eps, config.eta(), config.x0, &config.hole);
    if !solid.iter().any(|&s| s) {
        return Err(HomError::Resolution { cells: config.hole_span(), required: config.min_hole_span });
    }
    let dom = MacDomain::from_solid(grid, &solid);
    let solid_faces = dom.face_active().iter().map(|m| m.iter().map(|a| !a).collect()).collect();
    Ok(Masks { grid, solid, solid_faces })
}

/// Outcome of [`validate_source`].
#[derive(Clone, Debug, PartialEq)]
pub struct SourceVerdict {
    pub valid: bool,
    pub failures: Vec<String>,
}

/// Checks a source against the admissibility conditions of its regime.
///
/// Every regime needs finite values. In two dimensions the subcritical regime
/// additionally needs compact support away from the torus boundary and zero
/// mean, `|∫f| ≤ 1e-12 ‖f‖₁`, per component.
pub fn validate_source(components: &[&ScalarField], regime: Regime, d: usize) -> SourceVerdict {
    let mut failures = Vec::new();
    for (k, f) in components.iter().enumerate() {
        if !f.is_finite() {
            failures.push(format!("component {k} has non-finite values"));
            continue;
        }
        if d == 2 && regime == Regime::Subcritical {
            let g = f.grid();
            let n = g.n();
            let touches = (0..g.len()).any(|i| {
                f.data[i] != 0.0 && g.coords(i)[..g.dim()].iter().any(|&c| c == 0 || c == n - 1)
            });
            if touches {
                failures.push(format!("component {k} is not compactly supported inside the torus"));
            }
            let l1 = f.norm_l1();
            let mean = f.integral();
            if mean.abs() > 1e-12 * l1 {
                failures.push(format!("component {k} has nonzero mean {mean:.3e}"));
            }
        }
    }
    SourceVerdict { valid: failures.is_empty(), failures }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigma_examples() {
        assert_relative_eq!(sigma_eps(3, 0.1, 0.001).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(sigma_eps(3, 0.1, 0.01).unwrap(), 0.316_227_766_016_838, max_relative = 1e-12);
        let a = 0.1 * (-100f64).exp();
        assert_relative_eq!(sigma_eps(2, 0.1, a).unwrap(), 1.0, max_relative = 1e-12);
        assert!(matches!(sigma_eps(2, 0.1, 0.1), Err(HomError::DegenerateRatio)));
        assert!(matches!(sigma_eps(4, 0.1, 0.01), Err(HomError::Dimension(4))));
    }

    #[test]
    fn regimes_from_schedules() {
        let probes = [0.2, 0.1, 0.05, 0.025];
        let r = classify_regime(3, &|e: f64| e.powi(3), &probes).unwrap();
        assert!(matches!(r.label, Regime::Critical { sigma_star } if (sigma_star - 1.0).abs() < 1e-12));
        let r = classify_regime(3, &|e: f64| e * e, &probes).unwrap();
        assert_eq!(r.label, Regime::Supercritical);
        assert!((r.fitted_exponent - 0.5).abs() < 1e-12);
        let r = classify_regime(3, &|e: f64| e.powi(4), &probes).unwrap();
        assert_eq!(r.label, Regime::Subcritical);
        let r = classify_regime(2, &|e: f64| e * (-4.0 / (e * e)).exp(), &[0.5, 0.4, 0.3, 0.2]).unwrap();
        assert!(matches!(r.label, Regime::Critical { sigma_star } if (sigma_star - 2.0).abs() < 1e-9));
    }

    #[test]
    fn ambiguous_trend_is_reported() {
        let probes = [0.2, 0.1, 0.05, 0.025];
        let sched = |e: f64| if (e - 0.05).abs() < 1e-12 { e.powi(4) } else { e * e };
        assert!(matches!(classify_regime(3, &sched, &probes), Err(HomError::Ambiguous(_))));
    }

    #[test]
    fn ball_area_fraction_within_two_over_n() {
        let cfg = PerforationConfig::new(2, 0.25, 0.25, 4, 64).unwrap();
        let m = build_masks(&cfg).unwrap();
        let exact = PI / 16.0;
        assert!((m.solid_fraction() - exact).abs() / exact < 2.0 / 64.0);
    }

    #[test]
    fn masks_are_point_symmetric() {
        let cfg = PerforationConfig::new(3, 0.25, 0.2, 4, 16).unwrap().with_min_hole_span(1.0);
        let m = build_masks(&cfg).unwrap();
        let g = m.grid;
        let n = g.n();
        for i in 0..g.len() {
            let c = g.coords(i);
            let r = g.index([(n - c[0]) % n, (n - c[1]) % n, (n - c[2]) % n]);
            assert_eq!(m.solid[i], m.solid[r]);
        }
    }

    #[test]
    fn under_resolved_hole_is_rejected() {
        let cfg = PerforationConfig::new(3, 0.25, 0.01, 4, 16).unwrap();
        assert!(matches!(build_masks(&cfg), Err(HomError::Resolution { .. })));
    }

    #[test]
    fn superellipse_radii_and_volume() {
        let h = HoleModel::new(
            HoleShape::Superellipse { semi_axes: [0.3, 0.2, 0.2], exponent: 2.0 },
            0.2,
            0.3,
        )
        .unwrap();
        assert_relative_eq!(h.inner_radius(2), 0.2, max_relative = 1e-6);
        assert_relative_eq!(h.outer_radius(3), 0.3, max_relative = 1e-6);
        // p = 2 is an ellipse: area π a b.
        assert_relative_eq!(h.volume(2), PI * 0.3 * 0.2, max_relative = 1e-12);
        assert_relative_eq!(h.volume(3), 4.0 / 3.0 * PI * 0.3 * 0.2 * 0.2, max_relative = 1e-12);
    }

    #[test]
    fn hole_model_rejects_bad_radii() {
        assert!(HoleModel::new(HoleShape::Ball { radius: 0.25 }, 0.3, 0.4).is_err());
        assert!(HoleModel::new(HoleShape::Ball { radius: 0.25 }, 0.2, 0.5).is_err());
    }

    #[test]
    fn source_checks() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let one = ScalarField::from_fn(g, |_| 1.0);
        assert!(!validate_source(&[&one], Regime::Subcritical, 2).valid);
        assert!(validate_source(&[&one], Regime::Supercritical, 2).valid);
        let mut dip = ScalarField::zeros(g);
        dip.data[g.index([5, 5, 0])] = 1.0;
        dip.data[g.index([9, 9, 0])] = -1.0;
        assert!(validate_source(&[&dip], Regime::Subcritical, 2).valid);
    }

    #[test]
    fn local_offsets_repeat_every_period() {
        let (nt, n) = (64, 16);
        for j in 0..nt {
            assert_eq!(local_offset(j, nt, n), local_offset((j + n) % nt, nt, n));
        }
        assert_eq!(local_offset(nt / 2, nt, n), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn sigma_equals_eps_over_c_eta(d in 2usize..=3, log_eps in -3.0f64..-0.3, log_eta in -6.0f64..-0.05) {
            let eps = 10f64.powf(log_eps);
            let a = eps * 10f64.powf(log_eta);
            let s = sigma_eps(d, eps, a).unwrap();
            let other = eps / crate::cell::c_eta(d, a / eps).unwrap();
            proptest::prop_assert!((s - other).abs() <= 1e-12 * other);
        }

        #[test]
        fn masks_repeat_every_period(m in 2usize..=4, n in 12usize..=24, eta in 0.3f64..0.9) {
            let c = PerforationConfig::new(2, 0.25, 0.25 * eta, 2 * m, n).unwrap().with_min_hole_span(1.0);
            let masks = build_masks(&c).unwrap();
            let g = masks.grid;
            for i in 0..g.len() {
                proptest::prop_assert_eq!(masks.solid[i], masks.solid[g.shift(i, 0, n as isize)]);
                proptest::prop_assert_eq!(masks.solid[i], masks.solid[g.shift(i, 1, n as isize)]);
            }
        }
    }
}
