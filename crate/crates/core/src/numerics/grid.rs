//! Periodic cell-centred grids and the fields that live on them.
//!
//! Every grid is a cube of `n` cells per axis on a torus of side `side`.
//! Two-dimensional grids are stored with a unit third axis, so the same
//! index arithmetic serves both dimensions.
//!
//! Cell `j` along an axis is centred at `x_j = -side/2 + j h`, so for even
//! `n` the origin is a cell centre. The face carrying component `a` of a
//! staggered field at index `j` sits at `x_j - (h/2) e_a`.

use crate::error::{HomError, Result};

/// A periodic grid of `n^dim` cells on the torus `[-side/2, side/2)^dim`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    side: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, side: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(HomError::Dimension(dim));
        }
        if n < 2 {
            return Err(HomError::Grid(format!("need at least 2 cells per axis, got {n}")));
        }
        if !(side.is_finite() && side > 0.0) {
            return Err(HomError::Grid(format!("torus side must be positive, got {side}")));
        }
        Ok(Self { dim, n, side })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn side(&self) -> f64 {
        self.side
    }

    #[inline]
    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    /// Total number of cells.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume of one grid cell, `h^dim`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Storage shape; the third extent is 1 in two dimensions.
    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        if self.dim == 3 {
            [self.n, self.n, self.n]
        } else {
            [self.n, self.n, 1]
        }
    }

    #[inline]
    pub fn strides(&self) -> [usize; 3] {
        let [_, n1, n2] = self.shape();
        [n1 * n2, n2, 1]
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        let s = self.strides();
        c[0] * s[0] + c[1] * s[1] + c[2] * s[2]
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let [_, n1, n2] = self.shape();
        [idx / (n1 * n2), (idx / n2) % n1, idx % n2]
    }

    /// Index of the neighbour `delta` cells away along `axis`, wrapping around.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, delta: isize) -> usize {
        let mut c = self.coords(idx);
        let n = self.n as isize;
        c[axis] = (c[axis] as isize + delta).rem_euclid(n) as usize;
        self.index(c)
    }

    /// Coordinate of cell index `j` along any axis.
    #[inline]
    pub fn coord(&self, j: usize) -> f64 {
        -0.5 * self.side + j as f64 * self.h()
    }

    /// Cell-centre position; unused trailing entries are zero.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coord(c[a]);
        }
        x
    }

    /// Position of the face carrying component `axis` at `idx`.
    pub fn face_center(&self, axis: usize, idx: usize) -> [f64; 3] {
        let mut x = self.center(idx);
        x[axis] -= 0.5 * self.h();
        x
    }

    /// Integer frequency of FFT index `j`, in `(-n/2, n/2]`.
    #[inline]
    pub fn frequency(&self, j: usize) -> i64 {
        let n = self.n as i64;
        let j = j as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(HomError::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Visits every cell with its periodic `+1`/`-1` neighbours on each axis.
    ///
    /// Entries beyond `dim` in the neighbour arrays are meaningless.
    #[inline]
    pub fn for_each_neighbourhood(&self, mut f: impl FnMut(usize, &[usize; 3], &[usize; 3])) {
        let [n0, n1, n2] = self.shape();
        for i0 in 0..n0 {
            let p0 = if i0 + 1 == n0 { 0 } else { i0 + 1 };
            let m0 = if i0 == 0 { n0 - 1 } else { i0 - 1 };
            for i1 in 0..n1 {
                let p1 = if i1 + 1 == n1 { 0 } else { i1 + 1 };
                let m1 = if i1 == 0 { n1 - 1 } else { i1 - 1 };
                let base = (i0 * n1 + i1) * n2;
                let bp0 = (p0 * n1 + i1) * n2;
                let bm0 = (m0 * n1 + i1) * n2;
                let bp1 = (i0 * n1 + p1) * n2;
                let bm1 = (i0 * n1 + m1) * n2;
                for i2 in 0..n2 {
                    let p2 = if i2 + 1 == n2 { 0 } else { i2 + 1 };
                    let m2 = if i2 == 0 { n2 - 1 } else { i2 - 1 };
                    let plus = [bp0 + i2, bp1 + i2, base + p2];
                    let minus = [bm0 + i2, bm1 + i2, base + m2];
                    f(base + i2, &plus, &minus);
                }
            }
        }
    }
}

/// Pairwise (cascade) summation; the fixed order keeps results reproducible.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    const BLOCK: usize = 128;
    if a.len() <= BLOCK {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    let mid = a.len() / 2;
    dot(&a[..mid], &b[..mid]) + dot(&a[mid..], &b[mid..])
}

/// Cell-centred scalar field.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { data: vec![0.0; grid.len()], grid }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(HomError::GridMismatch(format!(
                "{} values for a grid of {} cells",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, data })
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `∫ u dx` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        pairwise_sum(&self.data) * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    /// Discrete `L²` inner product.
    pub fn inner(&self, other: &ScalarField) -> f64 {
        dot(&self.data, &other.data) * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm_lp(&self, p: f64) -> f64 {
        let s: f64 = self.data.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &ScalarField) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Removes the mean over the cells where `mask` is true; other cells are zeroed.
    pub fn remove_masked_mean(&mut self, mask: &[bool]) {
        let (mut s, mut c) = (0.0, 0usize);
        for (v, &m) in self.data.iter().zip(mask) {
            if m {
                s += v;
                c += 1;
            }
        }
        let mean = if c > 0 { s / c as f64 } else { 0.0 };
        for (v, &m) in self.data.iter_mut().zip(mask) {
            *v = if m { *v - mean } else { 0.0 };
        }
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.data.iter_mut().for_each(|v| *v -= m);
    }
}

/// Face-sampled vector field on the staggered (MAC) layout.
#[derive(Clone, Debug, PartialEq)]
pub struct StaggeredField {
    grid: Grid,
    pub comps: Vec<Vec<f64>>,
}

impl StaggeredField {
    pub fn zeros(grid: Grid) -> Self {
        Self { comps: vec![vec![0.0; grid.len()]; grid.dim()], grid }
    }

    pub fn from_comps(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(HomError::GridMismatch("staggered component shape".into()));
        }
        Ok(Self { grid, comps })
    }

    /// Samples component `a` of `f` at the faces normal to axis `a`.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let comps = (0..grid.dim())
            .map(|a| (0..grid.len()).map(|i| f(grid.face_center(a, i))[a]).collect())
            .collect();
        Self { grid, comps }
    }

    /// The constant field `e^axis`.
    pub fn unit(grid: Grid, axis: usize) -> Self {
        let mut out = Self::zeros(grid);
        out.comps[axis].iter_mut().for_each(|v| *v = 1.0);
        out
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    pub fn inner(&self, other: &StaggeredField) -> f64 {
        let s: f64 = self.comps.iter().zip(&other.comps).map(|(a, b)| dot(a, b)).sum();
        s * self.grid.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `∫ v_a dx` for each component.
    pub fn integrals(&self) -> Vec<f64> {
        self.comps
            .iter()
            .map(|c| pairwise_sum(c) * self.grid.cell_volume())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        self.comps.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn axpy(&mut self, s: f64, other: &StaggeredField) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * y;
            }
        }
    }

    pub fn sub(&self, other: &StaggeredField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Sets every face flagged in `solid` to zero.
    pub fn zero_faces(&mut self, solid: &[Vec<bool>]) {
        for (c, m) in self.comps.iter_mut().zip(solid) {
            for (v, &s) in c.iter_mut().zip(m) {
                if s {
                    *v = 0.0;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_a_cell_centre_for_even_n() {
        let g = Grid::new(3, 8, 2.0).unwrap();
        let idx = g.index([4, 4, 4]);
        assert_eq!(g.center(idx), [0.0, 0.0, 0.0]);
        assert_eq!(g.face_center(1, idx), [0.0, -0.125, 0.0]);
    }

    #[test]
    fn shift_wraps() {
        let g = Grid::new(2, 4, 1.0).unwrap();
        let idx = g.index([0, 3, 0]);
        assert_eq!(g.coords(g.shift(idx, 1, 1)), [0, 0, 0]);
        assert_eq!(g.coords(g.shift(idx, 0, -1)), [3, 3, 0]);
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(matches!(Grid::new(4, 8, 1.0), Err(HomError::Dimension(4))));
    }

    #[test]
    fn neighbourhood_matches_shift() {
        let g = Grid::new(3, 5, 1.0).unwrap();
        g.for_each_neighbourhood(|i, p, m| {
            for a in 0..3 {
                assert_eq!(p[a], g.shift(i, a, 1));
                assert_eq!(m[a], g.shift(i, a, -1));
            }
        });
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs: Vec<f64> = (0..10_000).map(|i| 0.1 + i as f64 * 1e-3).collect();
        let exact = 10_000.0 * 0.1 + 1e-3 * (9_999.0 * 10_000.0 / 2.0);
        assert!((pairwise_sum(&xs) - exact).abs() < 1e-9);
    }
}
