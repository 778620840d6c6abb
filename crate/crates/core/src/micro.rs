//! Direct solves of the perforated Poisson and Stokes problems on the torus,
//! the perforated Poincaré constant and the regime energy bounds.

use log::debug;

use crate::cell::{dirichlet_form, dirichlet_form_cells};
use crate::error::{HomError, Result};
use crate::lattice::{build_masks, rasterize, validate_source, Masks, PerforationConfig, Regime};
use crate::numerics::grid::dot;
use crate::numerics::saddle::{InnerPrecond, MaskedLaplace};
use crate::numerics::{
    solve_stokes_periodic, CapacitanceOptions, Grid, MacDomain, PeriodicStokes, ScalarField, StaggeredField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Poisson,
    Stokes,
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Poisson => "poisson",
            Problem::Stokes => "stokes",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MicroOptions {
    /// Regime used for source admissibility; `None` checks finiteness only.
    pub regime: Option<Regime>,
    pub tol: f64,
}

impl Default for MicroOptions {
    fn default() -> Self {
        Self { regime: None, tol: 1e-12 }
    }
}

impl MicroOptions {
    pub fn with_regime(mut self, regime: Regime) -> Self {
        self.regime = Some(regime);
        self
    }
}

/// Norms of a micro solution. For Poisson the velocity slots hold `u`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MicroNorms {
    pub l2: f64,
    pub grad: f64,
    /// `‖p‖₂` over the fluid cells (Stokes only).
    pub pressure: f64,
    /// `L^{2d/(d-2)}` norm, three dimensions only.
    pub sobolev_lp: Option<f64>,
    /// `‖source‖₂`.
    pub source: f64,
    /// `|⟨∇v, ∇v⟩ - ⟨g, v⟩| / ⟨g, v⟩`, the discrete energy identity.
    pub energy_gap: f64,
}

#[derive(Clone, Debug)]
pub struct MicroSolution {
    pub config: PerforationConfig,
    pub problem: Problem,
    pub solid: Vec<bool>,
    pub u: Option<ScalarField>,
    pub v: Option<StaggeredField>,
    pub p: Option<ScalarField>,
    pub norms: MicroNorms,
    /// Relative residual reported by the solver.
    pub residual: f64,
    /// `‖div v‖ / ‖v‖` (Stokes).
    pub div_residual: f64,
    pub iterations: usize,
}

impl MicroSolution {
    pub fn sigma(&self) -> Result<f64> {
        self.config.sigma()
    }

    pub fn domain(&self) -> MacDomain {
        MacDomain::from_solid(self.config.grid().expect("validated config"), &self.solid)
    }
}

fn check_source(components: &[&ScalarField], opts: &MicroOptions, d: usize) -> Result<()> {
    let regime = opts.regime.unwrap_or(Regime::Supercritical);
    let verdict = validate_source(components, regime, d);
    if verdict.valid {
        Ok(())
    } else {
        Err(HomError::SourceInvalid(verdict.failures.join("; ")))
    }
}

/// Centre-averaged velocity, for pointwise norms of a face field.
pub fn face_to_centre(v: &StaggeredField) -> Vec<Vec<f64>> {
    let g = *v.grid();
    (0..g.dim())
        .map(|a| (0..g.len()).map(|i| 0.5 * (v.comps[a][i] + v.comps[a][g.shift(i, a, 1)])).collect())
        .collect()
}

fn vector_lp(v: &StaggeredField, p: f64) -> f64 {
    let g = *v.grid();
    let c = face_to_centre(v);
    let s: f64 = (0..g.len())
        .map(|i| {
            let m2: f64 = c.iter().map(|comp| comp[i] * comp[i]).sum();
            m2.powf(0.5 * p)
        })
        .sum();
    (s * g.cell_volume()).powf(1.0 / p)
}

pub fn solve_perforated_poisson(config: &PerforationConfig, f: &ScalarField, opts: &MicroOptions) -> Result<MicroSolution> {
    let masks = build_masks(config)?;
    solve_poisson_on(config, &masks, f, opts)
}

/// Poisson solve on explicit masks (which may be hole-free).
pub fn solve_poisson_on(config: &PerforationConfig, masks: &Masks, f: &ScalarField, opts: &MicroOptions) -> Result<MicroSolution> {
    let grid = config.grid()?;
    grid.check_same(f.grid())?;
    check_source(&[f], opts, config.d)?;
    let dom = MacDomain::from_solid(grid, &masks.solid);
    let mut rhs = f.data.clone();
    dom.zero_inactive_cells(&mut rhs);
    let solver = MaskedLaplace::new(grid, dom.cell_active(), opts.tol, 50 * grid.n().max(100), InnerPrecond::Spectral(None))?;
    let (x, iterations) = solver.solve(&rhs, None)?;
    let u = ScalarField::from_vec(grid, x)?;
    let mut lu = vec![0.0; grid.len()];
    dom.neg_lap_cells(&u.data, &mut lu);
    let res: f64 = lu.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let rhs_norm = dot(&rhs, &rhs).sqrt();
    let e = dirichlet_form_cells(&dom, &u, &u);
    let work = f.inner(&u);
    let norms = MicroNorms {
        l2: u.norm_l2(),
        grad: e.max(0.0).sqrt(),
        pressure: 0.0,
        sobolev_lp: (config.d == 3).then(|| u.norm_lp(6.0)),
        source: f.norm_l2(),
        energy_gap: if work != 0.0 { (e - work).abs() / work.abs() } else { e.abs() },
    };
    Ok(MicroSolution {
        config: config.clone(),
        problem: Problem::Poisson,
        solid: masks.solid.clone(),
        u: Some(u),
        v: None,
        p: None,
        norms,
        residual: if rhs_norm > 0.0 { res / rhs_norm } else { res },
        div_residual: 0.0,
        iterations,
    })
}

pub fn solve_perforated_stokes(config: &PerforationConfig, g: &StaggeredField, opts: &MicroOptions) -> Result<MicroSolution> {
    let masks = build_masks(config)?;
    solve_stokes_on(config, &masks, g, opts)
}

/// Stokes solve on explicit masks (which may be hole-free).
pub fn solve_stokes_on(config: &PerforationConfig, masks: &Masks, g: &StaggeredField, opts: &MicroOptions) -> Result<MicroSolution> {
    let grid = config.grid()?;
    grid.check_same(g.grid())?;
    let comps: Vec<ScalarField> = g.comps.iter().map(|c| ScalarField::from_vec(grid, c.clone())).collect::<Result<_>>()?;
    check_source(&comps.iter().collect::<Vec<_>>(), opts, config.d)?;
    let dom = MacDomain::from_solid(grid, &masks.solid);
    let stokes = PeriodicStokes::new(grid)?;
    let mut copts = CapacitanceOptions::for_grid(&grid);
    copts.tol = opts.tol;
    let mut src = g.comps.clone();
    dom.zero_inactive_faces(&mut src);
    let sol = solve_stokes_periodic(&stokes, &dom, &src, &copts)?;
    debug!(
        "stokes eps={} iterations={} div={:.2e} momentum={:.2e}",
        config.eps, sol.stats.outer_iterations, sol.stats.div_residual, sol.stats.momentum_residual
    );
    let v = StaggeredField::from_comps(grid, sol.v)?;
    let p = ScalarField::from_vec(grid, sol.p)?;
    let e = dirichlet_form(&dom, &v, &v);
    let work = g.inner(&v);
    let norms = MicroNorms {
        l2: v.norm_l2(),
        grad: e.max(0.0).sqrt(),
        pressure: p.norm_l2(),
        sobolev_lp: (config.d == 3).then(|| vector_lp(&v, 6.0)),
        source: g.norm_l2(),
        energy_gap: if work != 0.0 { (e - work).abs() / work.abs() } else { e.abs() },
    };
    Ok(MicroSolution {
        config: config.clone(),
        problem: Problem::Stokes,
        solid: masks.solid.clone(),
        u: None,
        v: Some(v),
        p: Some(p),
        norms,
        residual: sol.stats.momentum_residual,
        div_residual: sol.stats.div_residual,
        iterations: sol.stats.outer_iterations,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincareOptions {
    /// Relative change of the Rayleigh quotient at which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Solve on one lattice period instead of the whole torus.
    pub bloch_reduce: bool,
}

impl Default for PoincareOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, bloch_reduce: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincareResult {
    /// `1 / sqrt(λ_min)`, `+∞` without holes.
    pub constant: f64,
    pub lambda_min: f64,
    pub iterations: usize,
    pub reduced: bool,
}

/// Smallest eigenvalue of the masked Dirichlet Laplacian by inverse power
/// iteration. Returns `+∞` for the constant constant when no cell is masked.
pub fn smallest_eigenvalue(grid: Grid, active: &[bool], opts: &PoincareOptions) -> Result<(f64, usize)> {
    if active.iter().all(|&a| a) {
        return Ok((0.0, 0));
    }
    let solver = MaskedLaplace::new(grid, active, 1e-12, 50 * grid.n().max(200), InnerPrecond::Spectral(None))?;
    let mut x: Vec<f64> = active.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect();
    let mut ax = vec![0.0; x.len()];
    let mut lambda = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let nx = dot(&x, &x).sqrt();
        x.iter_mut().for_each(|v| *v /= nx);
        let (y, _) = solver.solve(&x, Some(x.clone()))?;
        let ny = dot(&y, &y).sqrt();
        x = y.into_iter().map(|v| v / ny).collect();
        solver.apply(&x, &mut ax);
        let rq = dot(&x, &ax) / dot(&x, &x);
        if (rq - lambda).abs() <= opts.tol * rq {
            return Ok((rq, it));
        }
        lambda = rq;
    }
    Err(HomError::NonConvergence { iterations: opts.max_iter, residual: f64::NAN, target: opts.tol })
}

/// Best constant of `‖u‖ ≤ C ‖∇u‖` for fields vanishing on the holes.
///
/// The positive ground state of a connected periodic perforation is
/// invariant under lattice translations, so by default the eigenproblem is
/// solved on a single period with periodic boundary conditions.
pub fn poincare_constant(config: &PerforationConfig, opts: &PoincareOptions) -> Result<PoincareResult> {
    config.validate()?;
    config.check_resolution()?;
    let (grid, solid) = if opts.bloch_reduce {
        let g = Grid::new(config.d, config.cells_per_eps, config.eps)?;
        let s = rasterize(&g, config.cells_per_eps, config.eta(), config.x0, &config.hole);
        (g, s)
    } else {
        let m = build_masks(config)?;
        (m.grid, m.solid)
    };
    let active: Vec<bool> = solid.iter().map(|s| !s).collect();
    let (lambda, iterations) = smallest_eigenvalue(grid, &active, opts)?;
    let constant = if lambda > 0.0 { lambda.sqrt().recip() } else { f64::INFINITY };
    Ok(PoincareResult { constant, lambda_min: lambda, iterations, reduced: opts.bloch_reduce })
}

/// Quantities of the regime energy bounds for one solution.
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub sigma: f64,
    pub grad: f64,
    pub l2: f64,
    pub l2_over_sigma: f64,
    pub l2_over_sigma2: f64,
    pub w12: f64,
    pub sobolev_lp: Option<f64>,
    pub source: f64,
    /// Bound ratios `(name, value)`; each should stay below the cap.
    pub ratios: Vec<(&'static str, f64)>,
    pub violations: Vec<String>,
}

pub fn energy_report(sol: &MicroSolution, regime: Regime, cap: f64) -> Result<EnergyReport> {
    let sigma = sol.sigma()?;
    let n = &sol.norms;
    let w12 = (n.l2 * n.l2 + n.grad * n.grad).sqrt();
    let src = n.source;
    let ratio = |x: f64, scale: f64| if x == 0.0 { 0.0 } else { x / (scale * src) };
    let mut ratios = vec![
        ("grad_over_one_plus_sigma", ratio(n.grad, 1.0 + sigma)),
        ("l2_over_sigma_one_plus_sigma", ratio(n.l2, sigma * (1.0 + sigma))),
    ];
    match regime {
        Regime::Critical { .. } => ratios.push(("w12", ratio(w12, 1.0))),
        Regime::Subcritical => {
            ratios.push(("grad_plus_l2_over_sigma", ratio(n.grad + n.l2 / sigma, 1.0)));
            if let Some(lp) = n.sobolev_lp {
                ratios.push(("sobolev_lp", ratio(lp, 1.0)));
            }
        }
        Regime::Supercritical => {
            ratios.push(("grad_over_sigma", ratio(n.grad, sigma)));
            ratios.push(("l2_over_sigma2", ratio(n.l2, sigma * sigma)));
        }
    }
    let violations = ratios
        .iter()
        .filter(|(_, v)| *v > cap)
        .map(|(k, v)| format!("{k} = {v:.3e} exceeds {cap}"))
        .collect();
    Ok(EnergyReport {
        sigma,
        grad: n.grad,
        l2: n.l2,
        l2_over_sigma: n.l2 / sigma,
        l2_over_sigma2: n.l2 / (sigma * sigma),
        w12,
        sobolev_lp: n.sobolev_lp,
        source: src,
        ratios,
        violations,
    })
}
