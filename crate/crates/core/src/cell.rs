//! Unit-cell correctors for a hole of relative size `η`.
//!
//! The Stokes cell problem is `-Δw^i + ∇q^i = c_η² e^i` on the periodic unit
//! cell minus `ηT`, with `div w^i = 0` and `w^i = 0` on the hole; the Poisson
//! cell problem is `-Δw = c_η²` with the same boundary condition. The
//! effective tensor is `A_ij = c_η⁻² ⟨∇w^i, ∇w^j⟩ = ∫ (w^i)_j`.

use nalgebra::DMatrix;

use crate::error::{HomError, Result};
use crate::lattice::{rasterize, HoleModel, PerforationConfig, DEFAULT_MIN_HOLE_SPAN};
use crate::numerics::saddle::{InnerPrecond, MaskedLaplace};
use crate::numerics::{
    solve_stokes_periodic, CapacitanceOptions, Grid, MacDomain, PeriodicStokes, ScalarField, StaggeredField,
};
use crate::stats::richardson3;

/// `|log η|^{-1/2}` in two dimensions, `η^{1/2}` in three.
pub fn c_eta(d: usize, eta: f64) -> Result<f64> {
    match d {
        2 => {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(HomError::Domain(format!("two-dimensional scaling needs 0 < eta < 1, got {eta}")));
            }
            Ok(eta.ln().abs().powf(-0.5))
        }
        3 => {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(HomError::Domain(format!("need 0 < eta <= 1, got {eta}")));
            }
            Ok(eta.sqrt())
        }
        _ => Err(HomError::Dimension(d)),
    }
}

/// Geometry and solver settings for a cell solve.
#[derive(Clone, Debug)]
pub struct CellSpec {
    pub d: usize,
    pub eta: f64,
    pub hole: HoleModel,
    /// Grid cells per axis of the unit cell.
    pub n: usize,
    pub x0: [f64; 3],
    /// Minimum hole diameter in grid cells.
    pub min_hole_span: f64,
    pub tol: f64,
}

impl CellSpec {
    pub fn new(d: usize, eta: f64, hole: HoleModel, n: usize) -> Self {
        Self { d, eta, hole, n, x0: [0.0; 3], min_hole_span: DEFAULT_MIN_HOLE_SPAN, tol: 1e-12 }
    }

    pub fn with_min_hole_span(mut self, span: f64) -> Self {
        self.min_hole_span = span;
        self
    }

    pub fn with_x0(mut self, x0: [f64; 3]) -> Self {
        self.x0 = x0;
        self
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.d, self.n, 1.0)
    }

    /// Solid cells of `ηT`, after the resolution checks.
    pub fn solid(&self) -> Result<Vec<bool>> {
        let span = 2.0 * self.eta * self.hole.outer_radius(self.d) * self.n as f64;
        if span < self.min_hole_span {
            return Err(HomError::Resolution { cells: span, required: self.min_hole_span });
        }
        if self.eta * self.hole.delta2() >= 0.5 {
            return Err(HomError::Config("eta * delta2 must be below 1/2".into()));
        }
        let solid = rasterize(&self.grid()?, self.n, self.eta, self.x0, &self.hole);
        if !solid.iter().any(|&s| s) {
            return Err(HomError::Resolution { cells: span, required: self.min_hole_span });
        }
        Ok(solid)
    }
}

/// Per-corrector norms `(‖∇w‖, ‖w‖, ‖q‖)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectorNorms {
    pub grad: f64,
    pub l2: f64,
    pub pressure: f64,
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub spec: CellSpec,
    pub c_eta: f64,
    pub solid: Vec<bool>,
    pub correctors: Vec<StaggeredField>,
    /// Pressures with zero mean over the fluid part of the cell.
    pub pressures: Vec<ScalarField>,
    /// `c_η⁻² ⟨∇w^i, ∇w^j⟩`.
    pub a_energy: DMatrix<f64>,
    /// `∫ (w^i)_j`, the cell averages.
    pub wbar: DMatrix<f64>,
    /// `c_η⁻¹ ∫ q^i`, zero under the chosen gauge.
    pub qbar: Vec<f64>,
    pub norms: Vec<CorrectorNorms>,
    pub iterations: usize,
    pub div_residual: f64,
    pub momentum_residual: f64,
}

/// Dirichlet form `⟨∇u, ∇w⟩` of two face fields vanishing on `dom`'s
/// inactive faces.
pub fn dirichlet_form(dom: &MacDomain, u: &StaggeredField, w: &StaggeredField) -> f64 {
    let grid = dom.grid();
    let mut tmp = vec![0.0; grid.len()];
    let mut s = 0.0;
    for a in 0..grid.dim() {
        dom.neg_lap_faces(a, &w.comps[a], &mut tmp);
        s += crate::numerics::grid::dot(&u.comps[a], &tmp);
    }
    s * grid.cell_volume()
}

/// `⟨∇u, ∇w⟩` for cell fields vanishing on inactive cells.
pub fn dirichlet_form_cells(dom: &MacDomain, u: &ScalarField, w: &ScalarField) -> f64 {
    let grid = dom.grid();
    let mut tmp = vec![0.0; grid.len()];
    dom.neg_lap_cells(&w.data, &mut tmp);
    crate::numerics::grid::dot(&u.data, &tmp) * grid.cell_volume()
}

pub fn solve_cell_stokes(spec: &CellSpec) -> Result<CellSolution> {
    let d = spec.d;
    let c = c_eta(d, spec.eta)?;
    let grid = spec.grid()?;
    let solid = spec.solid()?;
    let dom = MacDomain::from_solid(grid, &solid);
    let stokes = PeriodicStokes::new(grid)?;
    let mut opts = CapacitanceOptions::for_grid(&grid);
    opts.tol = spec.tol;
    let mut correctors = Vec::with_capacity(d);
    let mut pressures = Vec::with_capacity(d);
    let (mut iterations, mut div_res, mut mom_res) = (0, 0.0_f64, 0.0_f64);
    for i in 0..d {
        let mut g = StaggeredField::unit(grid, i).scaled(c * c);
        dom.zero_inactive_faces(&mut g.comps);
        let sol = solve_stokes_periodic(&stokes, &dom, &g.comps, &opts)?;
        iterations += sol.stats.outer_iterations;
        div_res = div_res.max(sol.stats.div_residual);
        mom_res = mom_res.max(sol.stats.momentum_residual);
        correctors.push(StaggeredField::from_comps(grid, sol.v)?);
        pressures.push(ScalarField::from_vec(grid, sol.p)?);
    }
    let mut a_energy = DMatrix::zeros(d, d);
    let mut wbar = DMatrix::zeros(d, d);
    for i in 0..d {
        let avg = correctors[i].integrals();
        for j in 0..d {
            a_energy[(i, j)] = dirichlet_form(&dom, &correctors[i], &correctors[j]) / (c * c);
            wbar[(i, j)] = avg[j];
        }
    }
    let norms = (0..d)
        .map(|i| CorrectorNorms {
            grad: dirichlet_form(&dom, &correctors[i], &correctors[i]).sqrt(),
            l2: correctors[i].norm_l2(),
            pressure: pressures[i].norm_l2(),
        })
        .collect();
    let qbar = pressures.iter().map(|q| q.integral() / c).collect();
    Ok(CellSolution {
        spec: spec.clone(),
        c_eta: c,
        solid,
        correctors,
        pressures,
        a_energy,
        wbar,
        qbar,
        norms,
        iterations,
        div_residual: div_res,
        momentum_residual: mom_res,
    })
}

#[derive(Clone, Debug)]
pub struct PoissonCellSolution {
    pub spec: CellSpec,
    pub c_eta: f64,
    pub solid: Vec<bool>,
    pub w: ScalarField,
    /// `∫ w`.
    pub wbar: f64,
    /// `c_η⁻² ⟨∇w, ∇w⟩`.
    pub energy: f64,
    pub grad_norm: f64,
    pub l2_norm: f64,
    pub iterations: usize,
}

pub fn solve_cell_poisson(spec: &CellSpec) -> Result<PoissonCellSolution> {
    let c = c_eta(spec.d, spec.eta)?;
    let grid = spec.grid()?;
    let solid = spec.solid()?;
    let dom = MacDomain::from_solid(grid, &solid);
    let rhs: Vec<f64> = solid.iter().map(|&s| if s { 0.0 } else { c * c }).collect();
    let solver = MaskedLaplace::new(grid, dom.cell_active(), spec.tol, 50 * grid.n().max(100), InnerPrecond::Spectral(None))?;
    let (x, iterations) = solver.solve(&rhs, None)?;
    let w = ScalarField::from_vec(grid, x)?;
    let e = dirichlet_form_cells(&dom, &w, &w);
    Ok(PoissonCellSolution {
        spec: spec.clone(),
        c_eta: c,
        solid,
        wbar: w.integral(),
        energy: e / (c * c),
        grad_norm: e.sqrt(),
        l2_norm: w.norm_l2(),
        w,
        iterations,
    })
}

/// Both tensor formulas, their average and their relative discrepancy.
#[derive(Clone, Debug)]
pub struct Permeability {
    pub energy: DMatrix<f64>,
    pub average: DMatrix<f64>,
    pub tensor: DMatrix<f64>,
    pub discrepancy: f64,
}

/// Largest tolerated relative gap between the two tensor formulas.
pub const DISCREPANCY_LIMIT: f64 = 1e-4;

pub fn permeability(sol: &CellSolution) -> Result<Permeability> {
    let energy = sol.a_energy.clone();
    let average = sol.wbar.clone();
    let discrepancy = (&energy - &average).norm() / energy.norm().max(f64::MIN_POSITIVE);
    if discrepancy > DISCREPANCY_LIMIT {
        return Err(HomError::Discrepancy(discrepancy));
    }
    let tensor = (&energy + &average) * 0.5;
    Ok(Permeability { energy, average, tensor, discrepancy })
}

/// Limit of a tensor (or scalar, as a 1×1 matrix) along a geometric
/// `η`-halving ladder, by entrywise Richardson extrapolation on the last three
/// rungs. Returns the limit and the largest entrywise change of the last
/// extrapolation step relative to the finest rung, as a discrepancy report.
pub fn extrapolate_ladder(values: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, f64)> {
    if values.len() < 3 {
        return Err(HomError::InsufficientLadder { required: 3, got: values.len() });
    }
    let k = values.len();
    let (f0, f1, f2) = (&values[k - 3], &values[k - 2], &values[k - 1]);
    let mut lim = f2.clone();
    for i in 0..lim.nrows() {
        for j in 0..lim.ncols() {
            let (l, _) = richardson3(f0[(i, j)], f1[(i, j)], f2[(i, j)], 2.0);
            lim[(i, j)] = l;
        }
    }
    let change = (&lim - f2).norm() / f2.norm().max(f64::MIN_POSITIVE);
    Ok((lim, change))
}

/// Tiled lattice correctors on a perforated torus.
#[derive(Clone, Debug)]
pub struct LatticeCorrectors {
    pub w: Vec<StaggeredField>,
    pub q: Vec<ScalarField>,
}

fn torus_to_cell_index(config: &PerforationConfig, grid: &Grid, cell: &Grid, idx: usize) -> usize {
    let nt = grid.n();
    let n = config.cells_per_eps;
    let c = grid.coords(idx);
    let mut l = [0usize; 3];
    for a in 0..grid.dim() {
        l[a] = (c[a] + nt + n / 2 - nt / 2) % n;
    }
    cell.index(l)
}

/// Tiles `w(x/ε)` and `q(x/ε)` over the torus of `config`.
pub fn rescale_corrector(sol: &CellSolution, config: &PerforationConfig) -> Result<LatticeCorrectors> {
    if config.d != sol.spec.d {
        return Err(HomError::GridIncompatible("dimension differs".into()));
    }
    if (config.eta() - sol.spec.eta).abs() > 1e-12 * sol.spec.eta {
        return Err(HomError::GridIncompatible(format!(
            "lattice hole ratio {} differs from the cell ratio {}",
            config.eta(),
            sol.spec.eta
        )));
    }
    if config.cells_per_eps != sol.spec.n {
        return Err(HomError::GridIncompatible(format!(
            "torus uses {} cells per period, the cell solve {}",
            config.cells_per_eps, sol.spec.n
        )));
    }
    if config.x0 != sol.spec.x0 || !config.x0_on_grid() || config.hole != sol.spec.hole {
        return Err(HomError::GridIncompatible("hole offset or shape differs from the cell solve".into()));
    }
    let grid = config.grid()?;
    let cell = sol.spec.grid()?;
    let map: Vec<usize> = (0..grid.len()).map(|i| torus_to_cell_index(config, &grid, &cell, i)).collect();
    let d = grid.dim();
    let w = sol
        .correctors
        .iter()
        .map(|wc| {
            let comps = (0..d).map(|a| map.iter().map(|&k| wc.comps[a][k]).collect()).collect();
            StaggeredField::from_comps(grid, comps)
        })
        .collect::<Result<_>>()?;
    let q = sol
        .pressures
        .iter()
        .map(|qc| ScalarField::from_vec(grid, map.iter().map(|&k| qc.data[k]).collect()))
        .collect::<Result<_>>()?;
    Ok(LatticeCorrectors { w, q })
}

/// Tiles a cell-grid scalar (for example the Poisson corrector).
pub fn tile_scalar(cell_field: &ScalarField, config: &PerforationConfig) -> Result<ScalarField> {
    let grid = config.grid()?;
    let cell = *cell_field.grid();
    if cell.n() != config.cells_per_eps || cell.dim() != config.d {
        return Err(HomError::GridIncompatible("cell grid does not match the lattice".into()));
    }
    let data = (0..grid.len())
        .map(|i| cell_field.data[torus_to_cell_index(config, &grid, &cell, i)])
        .collect();
    ScalarField::from_vec(grid, data)
}
