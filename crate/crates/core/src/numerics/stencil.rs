//! Second-order staggered-grid difference operators.
//!
//! `grad` maps cell values to faces, `div` maps faces to cells, and
//! `grad = -divᵀ` in the unweighted inner product. The masked variants on
//! [`MacDomain`] eliminate inactive unknowns, which enforces homogeneous
//! Dirichlet data on holes exactly.

use super::grid::{Grid, ScalarField, StaggeredField};
use crate::error::Result;

/// Face gradient of a cell field: `out[a][c] = (p[c] - p[c - e_a]) / h`.
pub fn grad_raw(grid: &Grid, p: &[f64], out: &mut [Vec<f64>]) {
    let inv_h = 1.0 / grid.h();
    let d = grid.dim();
    grid.for_each_neighbourhood(|i, _plus, minus| {
        for a in 0..d {
            out[a][i] = (p[i] - p[minus[a]]) * inv_h;
        }
    });
}

/// Cell divergence of a face field: `out[c] = Σ_a (v_a[c + e_a] - v_a[c]) / h`.
pub fn div_raw(grid: &Grid, v: &[Vec<f64>], out: &mut [f64]) {
    let inv_h = 1.0 / grid.h();
    let d = grid.dim();
    grid.for_each_neighbourhood(|i, plus, _minus| {
        let mut s = 0.0;
        for a in 0..d {
            s += v[a][plus[a]] - v[a][i];
        }
        out[i] = s * inv_h;
    });
}

/// Periodic Laplacian, evaluated as `div(grad u)` term by term.
pub fn lap_raw(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let inv_h = 1.0 / grid.h();
    let d = grid.dim();
    grid.for_each_neighbourhood(|i, plus, minus| {
        let mut s = 0.0;
        for a in 0..d {
            let up = (u[plus[a]] - u[i]) * inv_h;
            let dn = (u[i] - u[minus[a]]) * inv_h;
            s += up - dn;
        }
        out[i] = s * inv_h;
    });
}

pub fn grad(p: &ScalarField) -> StaggeredField {
    let grid = *p.grid();
    let mut out = StaggeredField::zeros(grid);
    grad_raw(&grid, &p.data, &mut out.comps);
    out
}

pub fn div(v: &StaggeredField) -> ScalarField {
    let grid = *v.grid();
    let mut out = ScalarField::zeros(grid);
    div_raw(&grid, &v.comps, &mut out.data);
    out
}

pub fn lap(u: &ScalarField) -> ScalarField {
    let grid = *u.grid();
    let mut out = ScalarField::zeros(grid);
    lap_raw(&grid, &u.data, &mut out.data);
    out
}

/// `⟨grad p, v⟩` and `-⟨p, div v⟩` after checking that the grids agree.
pub fn adjointness_pair(p: &ScalarField, v: &StaggeredField) -> Result<(f64, f64)> {
    p.grid().check_same(v.grid())?;
    Ok((grad(p).inner(v), -p.inner(&div(v))))
}

/// Active-unknown masks for a MAC discretisation on a periodic grid.
///
/// Inactive faces and cells carry homogeneous Dirichlet data. Every active
/// face must have both adjacent cells active so that the masked gradient is
/// minus the transpose of the masked divergence.
#[derive(Clone, Debug)]
pub struct MacDomain {
    grid: Grid,
    cell_active: Vec<bool>,
    face_active: Vec<Vec<bool>>,
    n_cell_active: usize,
}

impl MacDomain {
    /// Every cell and face active (the hole-free torus).
    pub fn periodic(grid: Grid) -> Self {
        Self {
            cell_active: vec![true; grid.len()],
            face_active: vec![vec![true; grid.len()]; grid.dim()],
            n_cell_active: grid.len(),
            grid,
        }
    }

    /// Fluid cells are active; a face is active iff both adjacent cells are.
    pub fn from_solid(grid: Grid, solid: &[bool]) -> Self {
        let cell_active: Vec<bool> = solid.iter().map(|s| !s).collect();
        let face_active = face_masks_from_cells(&grid, &cell_active);
        Self::new(grid, cell_active, face_active)
    }

    /// Explicit masks. Faces with an inactive neighbour cell are switched off.
    pub fn new(grid: Grid, cell_active: Vec<bool>, mut face_active: Vec<Vec<bool>>) -> Self {
        let both = face_masks_from_cells(&grid, &cell_active);
        for (f, b) in face_active.iter_mut().zip(&both) {
            for (x, &y) in f.iter_mut().zip(b) {
                *x = *x && y;
            }
        }
        let n_cell_active = cell_active.iter().filter(|&&c| c).count();
        Self { grid, cell_active, face_active, n_cell_active }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn cell_active(&self) -> &[bool] {
        &self.cell_active
    }

    #[inline]
    pub fn face_active(&self) -> &[Vec<bool>] {
        &self.face_active
    }

    pub fn n_cell_active(&self) -> usize {
        self.n_cell_active
    }

    /// True when no face of component `a` is inactive, so the masked Laplacian
    /// on that component has the constants as null space.
    pub fn face_component_periodic(&self, a: usize) -> bool {
        self.face_active[a].iter().all(|&x| x)
    }

    pub fn all_cells_active(&self) -> bool {
        self.n_cell_active == self.grid.len()
    }

    /// Masked `-Δ` on component `axis` of a face field. `x` must vanish on
    /// inactive faces.
    pub fn neg_lap_faces(&self, axis: usize, x: &[f64], out: &mut [f64]) {
        neg_lap_masked(&self.grid, &self.face_active[axis], x, out);
    }

    /// Masked `-Δ` on cell values. `x` must vanish on inactive cells.
    pub fn neg_lap_cells(&self, x: &[f64], out: &mut [f64]) {
        neg_lap_masked(&self.grid, &self.cell_active, x, out);
    }

    /// Divergence restricted to active cells. `v` must vanish on inactive faces.
    pub fn div(&self, v: &[Vec<f64>], out: &mut [f64]) {
        div_raw(&self.grid, v, out);
        for (o, &m) in out.iter_mut().zip(&self.cell_active) {
            if !m {
                *o = 0.0;
            }
        }
    }

    /// Gradient restricted to active faces.
    pub fn grad(&self, p: &[f64], out: &mut [Vec<f64>]) {
        grad_raw(&self.grid, p, out);
        for (o, m) in out.iter_mut().zip(&self.face_active) {
            for (x, &act) in o.iter_mut().zip(m) {
                if !act {
                    *x = 0.0;
                }
            }
        }
    }

    pub fn zero_inactive_faces(&self, v: &mut [Vec<f64>]) {
        for (o, m) in v.iter_mut().zip(&self.face_active) {
            for (x, &act) in o.iter_mut().zip(m) {
                if !act {
                    *x = 0.0;
                }
            }
        }
    }

    pub fn zero_inactive_cells(&self, p: &mut [f64]) {
        for (x, &act) in p.iter_mut().zip(&self.cell_active) {
            if !act {
                *x = 0.0;
            }
        }
    }

    /// Removes the mean over active cells and zeroes inactive ones.
    pub fn project_cell_mean(&self, p: &mut [f64]) {
        let mut s = 0.0;
        for (x, &act) in p.iter().zip(&self.cell_active) {
            if act {
                s += x;
            }
        }
        let mean = if self.n_cell_active > 0 { s / self.n_cell_active as f64 } else { 0.0 };
        for (x, &act) in p.iter_mut().zip(&self.cell_active) {
            *x = if act { *x - mean } else { 0.0 };
        }
    }
}

/// `out = active ? (2d x - Σ neighbours) / h² : 0`; inactive entries of `x` are
/// assumed zero.
pub fn neg_lap_masked(grid: &Grid, active: &[bool], x: &[f64], out: &mut [f64]) {
    let inv_h2 = 1.0 / (grid.h() * grid.h());
    let d = grid.dim();
    let diag = 2.0 * d as f64;
    let [n0, n1, n2] = grid.shape();
    for i0 in 0..n0 {
        let p0 = if i0 + 1 == n0 { 0 } else { i0 + 1 };
        let m0 = if i0 == 0 { n0 - 1 } else { i0 - 1 };
        for i1 in 0..n1 {
            let p1 = if i1 + 1 == n1 { 0 } else { i1 + 1 };
            let m1 = if i1 == 0 { n1 - 1 } else { i1 - 1 };
            let row = |a: usize, b: usize| &x[(a * n1 + b) * n2..(a * n1 + b + 1) * n2];
            let xc = row(i0, i1);
            let xs = [row(p0, i1), row(m0, i1), row(i0, p1), row(i0, m1)];
            let base = (i0 * n1 + i1) * n2;
            let o = &mut out[base..base + n2];
            let act = &active[base..base + n2];
            if d == 2 {
                for k in 0..n2 {
                    let s = diag * xc[k] - xs[0][k] - xs[1][k] - xs[2][k] - xs[3][k];
                    o[k] = if act[k] { s * inv_h2 } else { 0.0 };
                }
            } else {
                for k in 0..n2 {
                    let kp = if k + 1 == n2 { 0 } else { k + 1 };
                    let km = if k == 0 { n2 - 1 } else { k - 1 };
                    let s = diag * xc[k] - xs[0][k] - xs[1][k] - xs[2][k] - xs[3][k] - xc[kp] - xc[km];
                    o[k] = if act[k] { s * inv_h2 } else { 0.0 };
                }
            }
        }
    }
}

/// Per-axis face masks that are true iff both cells adjacent to the face are.
pub fn face_masks_from_cells(grid: &Grid, cell: &[bool]) -> Vec<Vec<bool>> {
    let d = grid.dim();
    let mut faces = vec![vec![false; grid.len()]; d];
    grid.for_each_neighbourhood(|i, _plus, minus| {
        for a in 0..d {
            faces[a][i] = cell[i] && cell[minus[a]];
        }
    });
    faces
}
