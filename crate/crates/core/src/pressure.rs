//! Velocity restriction onto the perforated domain, the dual pressure
//! extension, and the smooth low/high frequency pressure split.
//!
//! Around each hole `k` the restriction works on the ball `B_k` of radius
//! `δ₂ ε`. Its fluid cells are the *annulus cells* `A_k`, its solid cells
//! the *hole cells* `T_k`. With `ū` the field `u` with hole faces zeroed,
//! `R(u) = ū + e` where `e` lives on faces between two annulus cells and
//! solves the local Stokes problem
//!
//! ```text
//! -Δe + ∇π = -Δ(u 1_hole)            on annulus faces
//!    div e = div(u 1_hole) + c_k      on A_k,   c_k = Σ_{T_k} div u / #A_k
//! ```
//!
//! so that `R(u) = u` when `u` already vanishes on the holes and
//! `div R(u) = 0` when `div u = 0`. Filling each hole with the mean of the
//! pressure over its annulus is the exact discrete adjoint of `R`.

use crate::error::{HomError, Result};
use crate::lattice::{local_offset, relative_to_hole, Masks, PerforationConfig, Regime};
use crate::numerics::grid::dot;
use crate::numerics::stencil::{div_raw, lap_raw};
use crate::numerics::saddle::estimate_friction;
use crate::numerics::{solve_saddle, FftPlan, Grid, MacDomain, SaddleOptions, ScalarField, StaggeredField};
use crate::stats::{loglog_fit, max_min_ratio};
use rustfft::num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestrictOptions {
    /// Radial thickness of the annulus, in grid cells, below which the
    /// restriction refuses to run.
    pub min_annulus_cells: f64,
    /// Relative tolerance of the local saddle solves.
    pub tol: f64,
}

impl Default for RestrictOptions {
    fn default() -> Self {
        Self { min_annulus_cells: 8.0, tol: 1e-10 }
    }
}

impl RestrictOptions {
    pub fn with_min_annulus_cells(mut self, cells: f64) -> Self {
        self.min_annulus_cells = cells;
        self
    }
}

/// Precomputed local geometry shared by all holes of one configuration.
#[derive(Debug)]
pub struct Restrictor {
    config: PerforationConfig,
    masks: Masks,
    opts: RestrictOptions,
    local: MacDomain,
    /// Torus index of local box cell 0 for the hole in lattice period 0.
    base: [usize; 3],
    /// Local indices of annulus and hole cells.
    annulus: Vec<usize>,
    hole: Vec<usize>,
    schur_shift: f64,
}

/// Output of [`Restrictor::restrict`].
#[derive(Clone, Debug)]
pub struct RestrictionResult {
    pub field: StaggeredField,
    /// Relative divergence residual of each local solve.
    pub local_residuals: Vec<f64>,
    /// `‖∇R(u)‖ / (‖∇u‖ + σ⁻¹‖u‖)`.
    pub gradient_ratio: f64,
    pub grad_norm: f64,
    pub l2_norm: f64,
}

impl RestrictionResult {
    pub fn max_local_residual(&self) -> f64 {
        self.local_residuals.iter().cloned().fold(0.0, f64::max)
    }
}

fn smooth_size_at_least(n: usize) -> usize {
    let smooth = |mut k: usize| {
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        k == 1
    };
    (n.max(4)..).find(|&k| smooth(k) && k % 2 == 0).expect("smooth sizes are unbounded")
}

/// Full periodic `‖∇u‖` of a face field.
pub fn face_grad_norm(u: &StaggeredField) -> f64 {
    let grid = *u.grid();
    let mut tmp = vec![0.0; grid.len()];
    let mut s = 0.0;
    for a in 0..grid.dim() {
        lap_raw(&grid, &u.comps[a], &mut tmp);
        s -= dot(&u.comps[a], &tmp);
    }
    (s.max(0.0) * grid.cell_volume()).sqrt()
}

impl Restrictor {
    pub fn new(config: &PerforationConfig, masks: &Masks, opts: RestrictOptions) -> Result<Self> {
        let grid = config.grid()?;
        grid.check_same(&masks.grid)?;
        let d = config.d;
        let n = config.cells_per_eps;
        let nt = grid.n();
        let delta2 = config.hole.delta2();
        let thickness = (delta2 - config.eta() * config.hole.outer_radius(d)) * n as f64;
        if thickness < opts.min_annulus_cells - 1e-9 {
            return Err(HomError::Resolution { cells: thickness, required: opts.min_annulus_cells });
        }
        let reach = (delta2 * n as f64).ceil() as usize;
        let nb = smooth_size_at_least(2 * reach + 4);
        let lgrid = Grid::new(d, nb, nb as f64 * config.h())?;

        let mut base = [0usize; 3];
        for a in 0..d {
            let centre = (nt / 2) as isize + (config.x0[a] * n as f64).round() as isize;
            base[a] = (centre - (nb / 2) as isize).rem_euclid(nt as isize) as usize;
        }
        let offs: Vec<f64> = (0..nt).map(|j| local_offset(j, nt, n)).collect();
        let mut active = vec![false; lgrid.len()];
        let (mut annulus, mut hole) = (Vec::new(), Vec::new());
        for li in 0..lgrid.len() {
            let lc = lgrid.coords(li);
            let mut tc = [0usize; 3];
            let mut o = [0.0; 3];
            for a in 0..d {
                tc[a] = (base[a] + lc[a]) % nt;
                o[a] = offs[tc[a]];
            }
            let y = relative_to_hole(o, config.x0, d);
            let r = (0..d).map(|a| y[a] * y[a]).sum::<f64>().sqrt();
            if r > delta2 {
                continue;
            }
            if masks.solid[grid.index(tc)] {
                hole.push(li);
            } else {
                active[li] = true;
                annulus.push(li);
            }
        }
        if hole.is_empty() {
            return Err(HomError::Resolution { cells: config.hole_span(), required: config.min_hole_span });
        }
        // Every fluid neighbour of a hole cell must belong to the annulus.
        for &t in &hole {
            for a in 0..d {
                for s in [-1isize, 1] {
                    let nb_idx = lgrid.shift(t, a, s);
                    let is_hole = hole.binary_search(&nb_idx).is_ok();
                    if !is_hole && !active[nb_idx] {
                        return Err(HomError::LocalSolveFailure {
                            hole: 0,
                            reason: "annulus does not enclose the hole".into(),
                        });
                    }
                }
            }
        }
        let faces = crate::numerics::stencil::face_masks_from_cells(&lgrid, &active);
        let local = MacDomain::new(lgrid, active, faces);
        let schur_shift = estimate_friction(&lgrid, &local.face_active()[0], 1e-3, 50 * nb)?;
        Ok(Self { config: config.clone(), masks: masks.clone(), opts, local, base, annulus, hole, schur_shift })
    }

    pub fn config(&self) -> &PerforationConfig {
        &self.config
    }

    pub fn masks(&self) -> &Masks {
        &self.masks
    }

    /// Side of the local periodic box, in cells.
    pub fn box_cells(&self) -> usize {
        self.local.grid().n()
    }

    pub fn annulus_cells(&self) -> usize {
        self.annulus.len()
    }

    fn holes(&self) -> Vec<[usize; 3]> {
        let m = self.config.torus_cells;
        let d = self.config.d;
        let count = m.pow(d as u32);
        (0..count)
            .map(|k| {
                let mut kk = [0usize; 3];
                let mut r = k;
                for a in (0..d).rev() {
                    kk[a] = r % m;
                    r /= m;
                }
                kk
            })
            .collect()
    }

    /// Torus index of every local box cell for hole `k`.
    fn window(&self, k: [usize; 3]) -> Vec<usize> {
        let lgrid = self.local.grid();
        let grid = self.masks.grid;
        let nt = grid.n();
        let n = self.config.cells_per_eps;
        (0..lgrid.len())
            .map(|li| {
                let lc = lgrid.coords(li);
                let mut tc = [0usize; 3];
                for a in 0..grid.dim() {
                    tc[a] = (self.base[a] + k[a] * n + lc[a]) % nt;
                }
                grid.index(tc)
            })
            .collect()
    }

    pub fn restrict(&self, u: &StaggeredField) -> Result<RestrictionResult> {
        let grid = self.masks.grid;
        grid.check_same(u.grid())?;
        let d = grid.dim();
        let lgrid = *self.local.grid();
        let llen = lgrid.len();

        let mut out = u.clone();
        out.zero_faces(&self.masks.solid_faces);
        let mut du = vec![0.0; grid.len()];
        div_raw(&grid, &u.comps, &mut du);

        let mut opts = SaddleOptions::for_grid(&lgrid);
        opts.tol = self.opts.tol;
        opts.schur_shift = Some(self.schur_shift);

        let mut residuals = Vec::new();
        let mut uh = vec![vec![0.0; llen]; d];
        let mut g = vec![vec![0.0; llen]; d];
        let mut t = vec![0.0; llen];
        for (kidx, k) in self.holes().into_iter().enumerate() {
            let win = self.window(k);
            let mut any = false;
            for a in 0..d {
                for li in 0..llen {
                    let ti = win[li];
                    uh[a][li] = if self.masks.solid_faces[a][ti] { u.comps[a][ti] } else { 0.0 };
                    any |= uh[a][li] != 0.0;
                }
            }
            if !any {
                residuals.push(0.0);
                continue;
            }
            let ck = self.hole.iter().map(|&li| du[win[li]]).sum::<f64>() / self.annulus.len() as f64;
            for a in 0..d {
                lap_raw(&lgrid, &uh[a], &mut g[a]);
                g[a].iter_mut().for_each(|x| *x = -*x);
            }
            div_raw(&lgrid, &uh, &mut t);
            for li in 0..llen {
                t[li] = if self.local.cell_active()[li] { t[li] + ck } else { 0.0 };
            }
            let sol = solve_saddle(&self.local, &g, Some(&t), &opts)
                .map_err(|e| HomError::LocalSolveFailure { hole: kidx, reason: e.to_string() })?;
            residuals.push(sol.stats.div_residual);
            for a in 0..d {
                let fa = &self.local.face_active()[a];
                for li in 0..llen {
                    if fa[li] {
                        out.comps[a][win[li]] += sol.v[a][li];
                    }
                }
            }
        }
        let sigma = self.config.sigma()?;
        let grad_norm = face_grad_norm(&out);
        let denom = face_grad_norm(u) + u.norm_l2() / sigma;
        let gradient_ratio = if denom > 0.0 { grad_norm / denom } else { 0.0 };
        Ok(RestrictionResult { l2_norm: out.norm_l2(), field: out, local_residuals: residuals, gradient_ratio, grad_norm })
    }

    /// `p` on the fluid, and on each hole the mean of `p` over its annulus.
    pub fn extend_pressure(&self, p: &ScalarField) -> Result<ScalarField> {
        self.masks.grid.check_same(p.grid())?;
        let mut out = p.clone();
        for k in self.holes() {
            let win = self.window(k);
            let mean = self.annulus.iter().map(|&li| p.data[win[li]]).sum::<f64>() / self.annulus.len() as f64;
            for &li in &self.hole {
                out.data[win[li]] = mean;
            }
        }
        Ok(out)
    }

    /// `|⟨∇p̃, φ⟩ - ⟨∇p, R(φ)⟩| / (‖p‖ (‖φ‖ + ‖∇φ‖))` with `p̃` the extension.
    pub fn duality_defect(&self, p: &ScalarField, phi: &StaggeredField) -> Result<f64> {
        let ext = self.extend_pressure(p)?;
        let lhs = crate::numerics::grad(&ext).inner(phi);
        let r = self.restrict(phi)?.field;
        let mut gp = crate::numerics::grad(p);
        gp.zero_faces(&self.masks.solid_faces);
        let rhs = gp.inner(&r);
        let scale = p.norm_l2() * (phi.norm_l2() + face_grad_norm(phi));
        Ok(if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 })
    }
}

/// One-shot restriction with default options.
pub fn restrict(u: &StaggeredField, config: &PerforationConfig, masks: &Masks) -> Result<RestrictionResult> {
    Restrictor::new(config, masks, RestrictOptions::default())?.restrict(u)
}

/// One-shot pressure extension with default options.
pub fn extend_pressure(p: &ScalarField, config: &PerforationConfig, masks: &Masks) -> Result<ScalarField> {
    Restrictor::new(config, masks, RestrictOptions::default())?.extend_pressure(p)
}

/// Smooth cutoff: 1 on `t ≤ 1`, 0 on `t ≥ 2`, quintic smoothstep between.
pub fn cutoff(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let x = 2.0 - t;
        x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

/// Scale `s` of the split: 1 in the critical regime, `σ` otherwise.
pub fn split_scale(regime: Regime, sigma: f64) -> f64 {
    match regime {
        Regime::Critical { .. } => 1.0,
        _ => sigma,
    }
}

/// `p = p1 + p2` with `p1` carrying the wave numbers `|k| ≲ 1/s`.
#[derive(Clone, Debug)]
pub struct PressureSplit {
    pub scale: f64,
    pub p1: ScalarField,
    pub p2: ScalarField,
    /// `‖∇p1‖` (equal to `sobolev[0]`).
    pub grad_p1: f64,
    pub p2_norm: f64,
    /// `‖∇p1‖_{W^{m,2}}` for `m = 0..=3`, computed spectrally.
    pub sobolev: [f64; 4],
    /// `‖p - p1 - p2‖_∞ / ‖p‖_∞`.
    pub partition_error: f64,
    /// Share of `p1`'s spectral mass beyond `|k| = 2/s`.
    pub p1_leak: f64,
    /// Share of `p2`'s spectral mass below `|k| = 1/s`.
    pub p2_leak: f64,
}

pub fn freq_split(p: &ScalarField, scale: f64) -> Result<PressureSplit> {
    if !(scale > 0.0) {
        return Err(HomError::Config(format!("split scale must be positive, got {scale}")));
    }
    let grid = *p.grid();
    let plan = FftPlan::new(grid)?;
    let coeffs = plan.forward_real(&p.data);
    let weight = grid.cell_volume() / grid.len() as f64;
    let mut c1 = coeffs.clone();
    let mut c2 = coeffs.clone();
    let mut sob = [0.0; 4];
    let mut k2s = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let k = plan.wavevector(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let chi = cutoff(scale * k2.sqrt());
        c1[idx] *= chi;
        c2[idx] *= 1.0 - chi;
        let e = k2 * c1[idx].norm_sqr() * weight;
        let mut w = 1.0;
        for s in sob.iter_mut() {
            *s += w * e;
            w *= 1.0 + k2;
        }
        k2s.push(k2);
    }
    let sobolev = sob.map(f64::sqrt);
    let p1 = ScalarField::from_vec(grid, plan.inverse_real(c1))?;
    let p2 = ScalarField::from_vec(grid, plan.inverse_real(c2))?;

    let pmax = p.max_abs();
    let partition_error = if pmax > 0.0 {
        p.data.iter().zip(&p1.data).zip(&p2.data).map(|((a, b), c)| (a - b - c).abs()).fold(0.0, f64::max) / pmax
    } else {
        0.0
    };
    let total: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum();
    let leak = |f: &ScalarField, outside: &dyn Fn(f64) -> bool| -> f64 {
        if total == 0.0 {
            return 0.0;
        }
        let c: Vec<Complex64> = plan.forward_real(&f.data);
        c.iter().zip(&k2s).filter(|(_, &k2)| outside(scale * k2.sqrt())).map(|(c, _)| c.norm_sqr()).sum::<f64>() / total
    };
    let p1_leak = leak(&p1, &|t| t >= 2.0);
    let p2_leak = leak(&p2, &|t| t <= 1.0);
    Ok(PressureSplit {
        scale,
        grad_p1: sobolev[0],
        p2_norm: p2.norm_l2(),
        sobolev,
        partition_error,
        p1_leak: p1_leak.sqrt(),
        p2_leak: p2_leak.sqrt(),
        p1,
        p2,
    })
}

/// Ladder verdict for the pressure bounds of one regime.
#[derive(Clone, Debug)]
pub struct PressureBoundsReport {
    pub regime: Regime,
    pub sigmas: Vec<f64>,
    pub grad_p1: Vec<f64>,
    pub p2_norm: Vec<f64>,
    /// Fitted slope of the quantity expected to scale (if any).
    pub slope: Option<f64>,
    /// `max/min` of the quantities expected to stay bounded.
    pub bounded_ratios: Vec<f64>,
    pub pass: bool,
    pub detail: String,
}

/// Tolerance on fitted slopes.
pub const SLOPE_TOL: f64 = 0.3;
/// Bound on `max/min` for quantities that should stay of order one.
pub const BOUNDED_RATIO: f64 = 3.0;
/// Bound on `max/min` for the critical Sobolev norms.
pub const SOBOLEV_RATIO: f64 = 5.0;

/// Checks, across a ladder of `(σ, split)` pairs:
/// supercritical `‖∇p1‖ = O(1)` and `‖p2‖ ∝ σ`;
/// subcritical `‖∇p1‖ ∝ σ⁻¹` and `‖p2‖ = O(1)`;
/// critical `‖∇p1‖_{W^{m,2}} = O(1)` for `m ≤ 3` and `‖p2‖ = O(1)`.
pub fn pressure_bounds_report(regime: Regime, ladder: &[(f64, PressureSplit)]) -> Result<PressureBoundsReport> {
    if ladder.len() < 3 {
        return Err(HomError::InsufficientLadder { required: 3, got: ladder.len() });
    }
    let sigmas: Vec<f64> = ladder.iter().map(|(s, _)| *s).collect();
    let g: Vec<f64> = ladder.iter().map(|(_, p)| p.grad_p1).collect();
    let q: Vec<f64> = ladder.iter().map(|(_, p)| p.p2_norm).collect();
    let all_zero = g.iter().chain(&q).all(|&x| x == 0.0);
    let mut rep = PressureBoundsReport {
        regime,
        sigmas: sigmas.clone(),
        grad_p1: g.clone(),
        p2_norm: q.clone(),
        slope: None,
        bounded_ratios: Vec::new(),
        pass: true,
        detail: String::new(),
    };
    if all_zero {
        rep.detail = "pressure vanishes on every rung".into();
        return Ok(rep);
    }
    match regime {
        Regime::Supercritical => {
            let r = max_min_ratio(&g);
            let s = loglog_fit(&sigmas, &q).slope;
            rep.bounded_ratios.push(r);
            rep.slope = Some(s);
            rep.pass = r <= BOUNDED_RATIO && (s - 1.0).abs() <= SLOPE_TOL;
            rep.detail = format!("max/min |grad p1| = {r:.3}, slope of |p2| vs sigma = {s:.3}");
        }
        Regime::Subcritical => {
            let inv: Vec<f64> = sigmas.iter().map(|s| 1.0 / s).collect();
            let s = loglog_fit(&inv, &g).slope;
            let r = max_min_ratio(&q);
            rep.bounded_ratios.push(r);
            rep.slope = Some(s);
            rep.pass = (s - 1.0).abs() <= SLOPE_TOL && r <= BOUNDED_RATIO;
            rep.detail = format!("slope of |grad p1| vs 1/sigma = {s:.3}, max/min |p2| = {r:.3}");
        }
        Regime::Critical { .. } => {
            for m in 0..4 {
                let v: Vec<f64> = ladder.iter().map(|(_, p)| p.sobolev[m]).collect();
                rep.bounded_ratios.push(max_min_ratio(&v));
            }
            let rs = rep.bounded_ratios.iter().cloned().fold(0.0, f64::max);
            let r2 = max_min_ratio(&q);
            rep.bounded_ratios.push(r2);
            rep.pass = rs <= SOBOLEV_RATIO && r2 <= BOUNDED_RATIO;
            rep.detail = format!("max_m max/min |grad p1|_(W^m,2) = {rs:.3}, max/min |p2| = {r2:.3}");
        }
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_masks;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize) -> (PerforationConfig, Masks) {
        let c = PerforationConfig::new(d, 0.25, 0.125, 4, 32).unwrap().with_min_hole_span(4.0);
        let m = build_masks(&c).unwrap();
        (c, m)
    }

    fn random_face(grid: Grid, seed: u64) -> StaggeredField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = StaggeredField::zeros(grid);
        for c in u.comps.iter_mut() {
            c.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        u
    }

    #[test]
    fn cutoff_is_a_smooth_partition() {
        assert_eq!(cutoff(0.3), 1.0);
        assert_eq!(cutoff(2.5), 0.0);
        assert!((cutoff(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        assert!(((cutoff(1.0 + h) - 1.0) / h).abs() < 1e-6);
        assert!((cutoff(2.0 - h) / h).abs() < 1e-6);
    }

    #[test]
    fn restriction_fixes_fields_vanishing_on_holes() {
        let (c, m) = setup(2);
        let r = Restrictor::new(&c, &m, RestrictOptions::default().with_min_annulus_cells(2.0)).unwrap();
        let mut u = random_face(m.grid, 1);
        u.zero_faces(&m.solid_faces);
        let ru = r.restrict(&u).unwrap();
        assert_eq!(ru.field.comps, u.comps);
    }

    #[test]
    fn restriction_preserves_zero_divergence_and_kills_holes() {
        let (c, m) = setup(2);
        let r = Restrictor::new(&c, &m, RestrictOptions::default().with_min_annulus_cells(2.0)).unwrap();
        // Divergence-free field: discrete curl of a random stream function.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi: Vec<f64> = (0..m.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = m.grid;
        let h = grid.h();
        let mut u = StaggeredField::zeros(grid);
        for i in 0..grid.len() {
            u.comps[0][i] = (psi[grid.shift(i, 1, 1)] - psi[i]) / h;
            u.comps[1][i] = -(psi[grid.shift(i, 0, 1)] - psi[i]) / h;
        }
        let dv = crate::numerics::div(&u);
        assert!(dv.max_abs() < 1e-9);
        let ru = r.restrict(&u).unwrap();
        let dr = crate::numerics::div(&ru.field);
        assert!(dr.norm_l2() <= 1e-8 * face_grad_norm(&u), "{}", dr.norm_l2());
        for a in 0..2 {
            for i in 0..grid.len() {
                if m.solid_faces[a][i] {
                    assert_eq!(ru.field.comps[a][i], 0.0);
                }
            }
        }
    }

    #[test]
    fn extension_is_dual_to_restriction() {
        let (c, m) = setup(2);
        let r = Restrictor::new(&c, &m, RestrictOptions::default().with_min_annulus_cells(2.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ScalarField::zeros(m.grid);
        for (x, s) in p.data.iter_mut().zip(&m.solid) {
            *x = if *s { 0.0 } else { rng.gen_range(-1.0..1.0) };
        }
        let phi = random_face(m.grid, 6);
        let defect = r.duality_defect(&p, &phi).unwrap();
        assert!(defect < 1e-8, "{defect}");
    }

    #[test]
    fn thin_annulus_is_rejected() {
        let (c, m) = setup(2);
        assert!(matches!(Restrictor::new(&c, &m, RestrictOptions::default()), Err(HomError::Resolution { .. })));
    }

    #[test]
    fn split_partitions_and_band_limits() {
        let g = Grid::new(2, 64, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let p = ScalarField::from_vec(g, data).unwrap();
        let s = freq_split(&p, 0.1).unwrap();
        assert!(s.partition_error <= 1e-12);
        assert!(s.p1_leak <= 1e-13 && s.p2_leak <= 1e-13);
        assert!(s.sobolev.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn single_mode_goes_to_one_side() {
        let g = Grid::new(2, 32, 2.0 * std::f64::consts::PI).unwrap();
        let low = ScalarField::from_fn(g, |x| x[0].sin());
        let s = freq_split(&low, 0.5).unwrap();
        assert!(s.p2.max_abs() < 1e-13);
        assert!((s.grad_p1 - low.norm_l2()).abs() < 1e-10 * low.norm_l2());
        let high = ScalarField::from_fn(g, |x| (5.0 * x[1]).cos());
        let s = freq_split(&high, 0.5).unwrap();
        assert!(s.p1.max_abs() < 1e-13);
    }

    #[test]
    fn bounds_report_reads_slopes() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let mk = |a: f64, b: f64| {
            let mut s = freq_split(&ScalarField::zeros(g), 1.0).unwrap();
            s.grad_p1 = a;
            s.p2_norm = b;
            s
        };
        let sig = [0.4, 0.2, 0.1];
        let sup: Vec<_> = sig.iter().map(|&s| (s, mk(1.0, 2.0 * s))).collect();
        assert!(pressure_bounds_report(Regime::Supercritical, &sup).unwrap().pass);
        let sub: Vec<_> = sig.iter().map(|&s| (s, mk(1.0 / s, 1.0))).collect();
        assert!(pressure_bounds_report(Regime::Subcritical, &sub).unwrap().pass);
        assert!(!pressure_bounds_report(Regime::Supercritical, &sub).unwrap().pass);
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest, ProptestConfig};

        fn noise(grid: Grid, seed: u64) -> ScalarField {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ScalarField::from_vec(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn split_partitions_and_band_limits(d in 2usize..=3, seed in 0u64..10_000, log_s in -2.0f64..0.5) {
                let grid = if d == 2 { Grid::new(2, 48, 2.0).unwrap() } else { Grid::new(3, 16, 1.0).unwrap() };
                let s = freq_split(&noise(grid, seed), 10f64.powf(log_s)).unwrap();
                prop_assert!(s.partition_error <= 1e-12);
                prop_assert!(s.p1_leak <= 1e-12 && s.p2_leak <= 1e-12);
            }

            #[test]
            fn cutoff_stays_in_unit_interval_and_decreases(t in 0.0f64..3.0, dt in 0.0f64..0.5) {
                let (a, b) = (cutoff(t), cutoff(t + dt));
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(b <= a);
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(6))]
            #[test]
            fn restriction_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0) {
                let (c, m) = setup(2);
                let r = Restrictor::new(&c, &m, RestrictOptions::default().with_min_annulus_cells(2.0)).unwrap();
                let u = random_face(m.grid, seed);
                let w = random_face(m.grid, seed + 1);
                let mut comb = u.clone();
                comb.scale(alpha);
                comb.axpy(1.0, &w);
                let lhs = r.restrict(&comb).unwrap().field;
                let mut rhs = r.restrict(&u).unwrap().field;
                rhs.scale(alpha);
                rhs.axpy(1.0, &r.restrict(&w).unwrap().field);
                prop_assert!(lhs.sub(&rhs).norm_l2() <= 1e-7 * rhs.norm_l2());
            }

            #[test]
            fn extension_is_adjoint_to_restriction(seed in 0u64..1000) {
                let (c, m) = setup(2);
                let r = Restrictor::new(&c, &m, RestrictOptions::default().with_min_annulus_cells(2.0)).unwrap();
                let mut p = noise(m.grid, seed);
                for (x, s) in p.data.iter_mut().zip(&m.solid) {
                    if *s {
                        *x = 0.0;
                    }
                }
                let defect = r.duality_defect(&p, &random_face(m.grid, seed + 7)).unwrap();
                prop_assert!(defect < 1e-8, "{}", defect);
            }
        }
    }
}
