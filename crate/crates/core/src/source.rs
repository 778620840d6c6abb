//! Compactly supported source fields.

use crate::error::{HomError, Result};
use crate::numerics::{Grid, ScalarField, StaggeredField};

/// Radial `C²` polynomial bump `(1 - (r/R)²)³` on `r < R`.
pub fn bump(r: f64, radius: f64) -> f64 {
    if r >= radius {
        0.0
    } else {
        let s = 1.0 - (r / radius).powi(2);
        s * s * s
    }
}

fn norm(x: [f64; 3], c: [f64; 3], d: usize) -> f64 {
    (0..d).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceKind {
    /// Single bump at the origin.
    Bump,
    /// Two bumps of opposite sign displaced by `±separation` along the first
    /// axis; zero mean by construction.
    Dipole { separation: f64 },
}

/// A scalar profile, and for vector sources the direction it points in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub radius: f64,
    pub amplitude: f64,
    pub axis: usize,
}

impl SourceSpec {
    pub fn bump(radius: f64) -> Self {
        Self { kind: SourceKind::Bump, radius, amplitude: 1.0, axis: 0 }
    }

    pub fn dipole(radius: f64, separation: f64) -> Self {
        Self { kind: SourceKind::Dipole { separation }, radius, amplitude: 1.0, axis: 0 }
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    pub fn with_axis(mut self, axis: usize) -> Self {
        self.axis = axis;
        self
    }

    /// Half-width of the box that contains the support.
    pub fn support_half_width(&self) -> f64 {
        match self.kind {
            SourceKind::Bump => self.radius,
            SourceKind::Dipole { separation } => self.radius + separation.abs(),
        }
    }

    /// Profile value at `x`. The dipole offset is snapped to the grid so
    /// that the sampled lobes cancel exactly.
    pub fn value(&self, grid: &Grid, x: [f64; 3]) -> f64 {
        let d = grid.dim();
        let v = match self.kind {
            SourceKind::Bump => bump(norm(x, [0.0; 3], d), self.radius),
            SourceKind::Dipole { separation } => {
                let c = (separation / grid.h()).round() * grid.h();
                bump(norm(x, [c, 0.0, 0.0], d), self.radius) - bump(norm(x, [-c, 0.0, 0.0], d), self.radius)
            }
        };
        self.amplitude * v
    }

    pub fn check(&self, grid: &Grid) -> Result<()> {
        if !(self.radius > 0.0) || self.axis >= grid.dim() {
            return Err(HomError::SourceInvalid(format!("bad source parameters {self:?}")));
        }
        if self.support_half_width() >= 0.5 * grid.side() - grid.h() {
            return Err(HomError::SourceInvalid("source support reaches the torus boundary".into()));
        }
        Ok(())
    }

    pub fn scalar(&self, grid: Grid) -> Result<ScalarField> {
        self.check(&grid)?;
        Ok(ScalarField::from_fn(grid, |x| self.value(&grid, x)))
    }

    /// Face-sampled force `profile · e_axis`.
    pub fn vector(&self, grid: Grid) -> Result<StaggeredField> {
        self.check(&grid)?;
        let mut out = StaggeredField::zeros(grid);
        for i in 0..grid.len() {
            out.comps[self.axis][i] = self.value(&grid, grid.face_center(self.axis, i));
        }
        Ok(out)
    }
}
