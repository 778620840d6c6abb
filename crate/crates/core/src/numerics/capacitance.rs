//! Stokes flow on a perforated periodic grid via hole forces.
//!
//! On the hole-free torus the MAC Stokes operator is diagonal in Fourier
//! space. With holes, the velocity is written `v = S₀(g + Eᵀf) + U`, where
//! `S₀` is the periodic solution operator, `E` restricts to the solid faces,
//! `f` are forces carried by those faces and `U` is the mean flow. The forces
//! solve the capacitance system `E v = 0` by projected CG. Away from the
//! holes this reproduces the masked elimination discretisation exactly.

use rustfft::num_complex::Complex64;

use super::fft::FftPlan;
use super::grid::{dot, Grid};
use super::krylov::{solve_spd, CgOptions};
use super::saddle::{stokes_residuals, SaddleSolution, SaddleStats};
use super::stencil::MacDomain;
use crate::error::{HomError, Result};

/// Spectral solution operator of the hole-free periodic MAC Stokes problem.
#[derive(Clone, Debug)]
pub struct PeriodicStokes {
    grid: Grid,
    plan: FftPlan,
    /// Per-axis gradient symbols `(1 - e^{-iθ}) / h`.
    grad_symbol: Vec<Complex64>,
}

impl PeriodicStokes {
    pub fn new(grid: Grid) -> Result<Self> {
        let plan = FftPlan::new(grid)?;
        let n = grid.n();
        let h = grid.h();
        let grad_symbol = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -th)) / h
            })
            .collect();
        Ok(Self { grid, plan, grad_symbol })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Mean-free velocity (and optionally pressure) for the source `h`; the
    /// mean of `h` is ignored.
    ///
    /// Real fields are transformed two at a time as the real and imaginary
    /// parts of one complex FFT.
    pub fn solve(&self, h: &[Vec<f64>], with_pressure: bool) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
        let g = self.grid;
        let d = g.dim();
        let len = g.len();
        let n = g.n();
        let mut z1: Vec<Complex64> = h[0].iter().zip(&h[1]).map(|(&a, &b)| Complex64::new(a, b)).collect();
        self.plan.forward(&mut z1);
        let z2 = if d == 3 {
            let mut z: Vec<Complex64> = h[2].iter().map(|&a| Complex64::new(a, 0.0)).collect();
            self.plan.forward(&mut z);
            Some(z)
        } else {
            None
        };
        let mut w1 = vec![Complex64::default(); len];
        let need_w2 = d == 3 || with_pressure;
        let mut w2 = if need_w2 { vec![Complex64::default(); len] } else { Vec::new() };
        let [n0, n1, n2] = g.shape();
        let i_unit = Complex64::new(0.0, 1.0);
        for c0 in 0..n0 {
            let m0 = (n - c0) % n;
            for c1 in 0..n1 {
                let m1 = (n - c1) % n;
                for c2 in 0..n2 {
                    let m2 = if d == 3 { (n - c2) % n } else { 0 };
                    let i = (c0 * n1 + c1) * n2 + c2;
                    let j = (m0 * n1 + m1) * n2 + m2;
                    let gs = [self.grad_symbol[c0], self.grad_symbol[c1], self.grad_symbol[if d == 3 { c2 } else { 0 }]];
                    let lam: f64 = gs[..d].iter().map(|x| x.norm_sqr()).sum();
                    if lam == 0.0 {
                        continue;
                    }
                    let zc = z1[j].conj();
                    let mut hh = [Complex64::default(); 3];
                    hh[0] = (z1[i] + zc) * 0.5;
                    hh[1] = (z1[i] - zc) * Complex64::new(0.0, -0.5);
                    if let Some(z2) = &z2 {
                        hh[2] = z2[i];
                    }
                    // p̂ = Σ conj(G_a) ĥ_a / λ ; v̂ = (ĥ - G p̂) / λ
                    let mut num = Complex64::default();
                    for a in 0..d {
                        num += gs[a].conj() * hh[a];
                    }
                    let p = num / lam;
                    let inv = 1.0 / lam;
                    let v0 = (hh[0] - gs[0] * p) * inv;
                    let v1 = (hh[1] - gs[1] * p) * inv;
                    w1[i] = v0 + i_unit * v1;
                    if d == 3 {
                        let v2 = (hh[2] - gs[2] * p) * inv;
                        w2[i] = if with_pressure { v2 + i_unit * p } else { v2 };
                    } else if with_pressure {
                        w2[i] = p;
                    }
                }
            }
        }
        drop(z1);
        drop(z2);
        self.plan.inverse(&mut w1);
        let mut v = vec![w1.iter().map(|c| c.re).collect::<Vec<f64>>(), w1.iter().map(|c| c.im).collect()];
        drop(w1);
        let mut p = None;
        if need_w2 {
            self.plan.inverse(&mut w2);
            if d == 3 {
                v.push(w2.iter().map(|c| c.re).collect());
                if with_pressure {
                    p = Some(w2.iter().map(|c| c.im).collect());
                }
            } else {
                p = Some(w2.iter().map(|c| c.re).collect());
            }
        }
        (v, p)
    }
}

#[derive(Clone, Debug)]
pub struct CapacitanceOptions {
    /// Relative residual of the hole-force system.
    pub tol: f64,
    pub max_iter: usize,
}

impl CapacitanceOptions {
    pub fn for_grid(grid: &Grid) -> Self {
        Self { tol: 1e-12, max_iter: 50 * grid.n() }
    }
}

/// Solves the perforated periodic Stokes problem on `dom` (every cell of the
/// grid either active fluid or solid, with periodic wrap-around).
///
/// The returned velocity vanishes bit-exactly on inactive faces and the
/// pressure has zero mean over the active cells.
pub fn solve_stokes_periodic(
    stokes: &PeriodicStokes,
    dom: &MacDomain,
    g: &[Vec<f64>],
    opts: &CapacitanceOptions,
) -> Result<SaddleSolution> {
    let grid = *dom.grid();
    stokes.grid.check_same(&grid)?;
    let d = grid.dim();
    let len = grid.len();
    if g.len() != d || g.iter().any(|c| c.len() != len) {
        return Err(HomError::GridMismatch("momentum source shape".into()));
    }
    // Solid-face index lists per component.
    let solid: Vec<Vec<u32>> = dom
        .face_active()
        .iter()
        .map(|m| m.iter().enumerate().filter(|(_, &a)| !a).map(|(i, _)| i as u32).collect())
        .collect();
    let offsets: Vec<usize> = solid
        .iter()
        .scan(0usize, |acc, s| {
            let o = *acc;
            *acc += s.len();
            Some(o)
        })
        .collect();
    let nf: usize = solid.iter().map(|s| s.len()).sum();

    // Force balance: each component of g + Eᵀf has zero total.
    let mut g_eff: Vec<Vec<f64>> = g.to_vec();
    let mut f_part = vec![0.0; nf];
    for a in 0..d {
        let total: f64 = super::grid::pairwise_sum(&g[a]);
        if solid[a].is_empty() {
            let norm = dot(&g[a], &g[a]).sqrt() * (len as f64).sqrt();
            if total.abs() > 1e-9 * norm.max(f64::MIN_POSITIVE) {
                return Err(HomError::ZeroMode(format!(
                    "component {a} of the source has nonzero mean and no hole faces to balance it"
                )));
            }
            continue;
        }
        let share = -total / solid[a].len() as f64;
        for (k, &i) in solid[a].iter().enumerate() {
            f_part[offsets[a] + k] = share;
            g_eff[a][i as usize] += share;
        }
    }

    let scatter = |f: &[f64], base: &[Vec<f64>]| -> Vec<Vec<f64>> {
        let mut out = base.to_vec();
        for a in 0..d {
            for (k, &i) in solid[a].iter().enumerate() {
                out[a][i as usize] += f[offsets[a] + k];
            }
        }
        out
    };
    let gather = |v: &[Vec<f64>], out: &mut [f64]| {
        for a in 0..d {
            for (k, &i) in solid[a].iter().enumerate() {
                out[offsets[a] + k] = v[a][i as usize];
            }
        }
    };
    let project = |x: &mut [f64]| {
        for a in 0..d {
            let s = &mut x[offsets[a]..offsets[a] + solid[a].len()];
            if s.is_empty() {
                continue;
            }
            let m = s.iter().sum::<f64>() / s.len() as f64;
            s.iter_mut().for_each(|v| *v -= m);
        }
    };

    let zero = vec![vec![0.0; len]; d];
    let mut iterations = 0;
    let f = if nf > 0 {
        let (v0, _) = stokes.solve(&g_eff, false);
        let mut b = vec![0.0; nf];
        gather(&v0, &mut b);
        b.iter_mut().for_each(|x| *x = -*x);
        // Symmetric holes can leave only roundoff after projection; measure
        // the residual against the hole velocities before it.
        let scale = dot(&b, &b).sqrt();
        project(&mut b);
        let mut op = |x: &[f64], y: &mut [f64]| {
            let mut xp = x.to_vec();
            project(&mut xp);
            let (v, _) = stokes.solve(&scatter(&xp, &zero), false);
            gather(&v, y);
            project(y);
        };
        let cg = CgOptions::for_axis_len(grid.n()).tol(opts.tol).max_iter(opts.max_iter).floor(opts.tol * scale);
        let (mut fh, st) = solve_spd(&mut op, None, &b, None, &cg)?;
        iterations = st.iterations;
        project(&mut fh);
        fh.iter().zip(&f_part).map(|(a, b)| a + b).collect()
    } else {
        f_part
    };

    let (mut v, p) = stokes.solve(&scatter(&f, g), true);
    let mut p = p.unwrap_or_default();
    // Mean flow so that the hole faces carry zero velocity on average.
    for a in 0..d {
        if solid[a].is_empty() {
            continue;
        }
        let u = -solid[a].iter().map(|&i| v[a][i as usize]).sum::<f64>() / solid[a].len() as f64;
        v[a].iter_mut().for_each(|x| *x += u);
    }
    dom.zero_inactive_faces(&mut v);
    dom.project_cell_mean(&mut p);
    let stats = SaddleStats { outer_iterations: iterations, ..stokes_residuals(dom, &v, &p, g, None) };
    Ok(SaddleSolution { v, p, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::saddle::{solve_saddle, SaddleOptions};

    fn lattice_domain(d: usize, m: usize, n: usize, r: f64) -> MacDomain {
        let g = Grid::new(d, m * n, 1.0).unwrap();
        let eps = 1.0 / m as f64;
        let solid: Vec<bool> = (0..g.len())
            .map(|i| {
                let x = g.center(i);
                let mut r2 = 0.0;
                for a in 0..d {
                    let y = x[a] / eps;
                    let f = y - y.round();
                    r2 += f * f;
                }
                r2 < r * r
            })
            .collect();
        MacDomain::from_solid(g, &solid)
    }

    #[test]
    fn matches_elimination_solver() {
        for d in [2, 3] {
            let dom = lattice_domain(d, 2, 8, 0.3);
            let grid = *dom.grid();
            let mut g: Vec<Vec<f64>> = (0..d)
                .map(|a| (0..grid.len()).map(|i| (1.0 + a as f64) * (grid.center(i)[0] * 6.0).cos()).collect())
                .collect();
            dom.zero_inactive_faces(&mut g);
            let cap = solve_stokes_periodic(
                &PeriodicStokes::new(grid).unwrap(),
                &dom,
                &g,
                &CapacitanceOptions::for_grid(&grid),
            )
            .unwrap();
            let elim = solve_saddle(&dom, &g, None, &SaddleOptions::for_grid(&grid)).unwrap();
            let mut err = 0.0_f64;
            let mut scale = 0.0_f64;
            for a in 0..d {
                for i in 0..grid.len() {
                    err = err.max((cap.v[a][i] - elim.v[a][i]).abs());
                    scale = scale.max(elim.v[a][i].abs());
                }
            }
            assert!(err < 1e-8 * scale, "d={d}: {err} vs {scale}");
            let perr = cap.p.iter().zip(&elim.p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let pscale = elim.p.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            assert!(perr < 1e-7 * pscale, "d={d}: {perr} vs {pscale}");
            assert!(cap.stats.div_residual < 1e-10, "{:?}", cap.stats);
            assert!(cap.stats.momentum_residual < 1e-9, "{:?}", cap.stats);
        }
    }

    #[test]
    fn hole_free_requires_balanced_source() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let dom = MacDomain::periodic(grid);
        let g = vec![vec![1.0; grid.len()], vec![0.0; grid.len()]];
        let r = solve_stokes_periodic(
            &PeriodicStokes::new(grid).unwrap(),
            &dom,
            &g,
            &CapacitanceOptions::for_grid(&grid),
        );
        assert!(matches!(r, Err(HomError::ZeroMode(_))));
    }
}
