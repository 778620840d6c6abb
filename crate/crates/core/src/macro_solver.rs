//! Constant-coefficient limit systems on the torus, solved per frequency.
//!
//! All systems use the Fourier symbols of the staggered stencils, so a
//! solution satisfies the discrete equations to round-off and can be compared
//! with micro solutions on the same grid. With `γ_a = (1 - e^{-iθ_a})/h` the
//! gradient symbol, divergence is `-γᴴ` and the Laplacian `-|γ|²`.

use log::warn;
use nalgebra::{DMatrix, Matrix3, Vector3};
use rustfft::num_complex::Complex64;

use crate::error::{HomError, Result};
use crate::numerics::grid::dot;
use crate::numerics::stencil::{div_raw, grad_raw, lap_raw};
use crate::numerics::{FftPlan, Grid, ScalarField, StaggeredField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacroSystem {
    Darcy,
    StokesBrinkman,
    Stokes,
    PoissonPointwise,
    LaplaceBrinkman,
    Poisson,
}

impl MacroSystem {
    pub fn name(&self) -> &'static str {
        match self {
            MacroSystem::Darcy => "darcy",
            MacroSystem::StokesBrinkman => "brinkman",
            MacroSystem::Stokes => "stokes",
            MacroSystem::PoissonPointwise => "pointwise",
            MacroSystem::LaplaceBrinkman => "laplace-brinkman",
            MacroSystem::Poisson => "poisson",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "darcy" => MacroSystem::Darcy,
            "brinkman" => MacroSystem::StokesBrinkman,
            "stokes" => MacroSystem::Stokes,
            "pointwise" => MacroSystem::PoissonPointwise,
            "laplace-brinkman" => MacroSystem::LaplaceBrinkman,
            "poisson" => MacroSystem::Poisson,
            other => return Err(HomError::Config(format!("unknown macro system '{other}'"))),
        })
    }
}

/// What to do with a source whose zero mode has no torus solution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroModePolicy {
    #[default]
    Reject,
    /// Remove the offending mean and log a warning.
    Project,
}

#[derive(Clone, Debug)]
pub struct MacroSolution {
    pub system: MacroSystem,
    pub v: Option<StaggeredField>,
    pub p: Option<ScalarField>,
    pub u: Option<ScalarField>,
    /// Substitution residual relative to the source norm.
    pub residual: f64,
    /// `‖div v‖ / ‖v‖` for vector systems.
    pub div_residual: f64,
}

fn check_spd(a: &DMatrix<f64>, d: usize) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(HomError::Singular(format!("tensor must be {d}x{d}")));
    }
    if (a - a.transpose()).norm() > 1e-8 * a.norm() {
        return Err(HomError::Singular("tensor is not symmetric".into()));
    }
    let min = a.clone().symmetric_eigenvalues().min();
    if !(min > 0.0) {
        return Err(HomError::Singular(format!("tensor is not positive definite (λ_min = {min:.3e})")));
    }
    Ok(())
}

fn pad3(a: &DMatrix<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::identity();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m[(i, j)] = a[(i, j)];
        }
    }
    m
}

/// Per-frequency data of the staggered symbols.
struct Symbols {
    plan: FftPlan,
    /// Gradient symbol `(1 - e^{-iθ})/h` per index along an axis.
    grad: Vec<Complex64>,
    /// Face averaging symbol `(1 + e^{iθ})/2`.
    avg: Vec<Complex64>,
}

type CMatrix3 = Matrix3<Complex64>;
type CVector3 = Vector3<Complex64>;

impl Symbols {
    fn new(grid: Grid) -> Result<Self> {
        let plan = FftPlan::new(grid)?;
        let n = grid.n();
        let h = grid.h();
        let one = Complex64::new(1.0, 0.0);
        let mut grad = Vec::with_capacity(n);
        let mut avg = Vec::with_capacity(n);
        for j in 0..n {
            let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            grad.push((one - Complex64::from_polar(1.0, -th)) / h);
            avg.push((one + Complex64::from_polar(1.0, th)) * 0.5);
        }
        Ok(Self { plan, grad, avg })
    }

    fn grid(&self) -> &Grid {
        self.plan.grid()
    }

    /// Gradient and averaging symbols at a spectral index.
    fn at(&self, idx: usize) -> (CVector3, CVector3) {
        let g = self.grid();
        let c = g.coords(idx);
        let mut gr = CVector3::zeros();
        let mut av = CVector3::from_element(Complex64::new(1.0, 0.0));
        for a in 0..g.dim() {
            gr[a] = self.grad[c[a]];
            av[a] = self.avg[c[a]];
        }
        (gr, av)
    }

    fn forward_faces(&self, v: &StaggeredField) -> Vec<Vec<Complex64>> {
        v.comps.iter().map(|c| self.plan.forward_real(c)).collect()
    }

    fn inverse_faces(&self, coeffs: Vec<Vec<Complex64>>) -> Result<StaggeredField> {
        let comps = coeffs.into_iter().map(|c| self.plan.inverse_real(c)).collect();
        StaggeredField::from_comps(*self.grid(), comps)
    }
}

/// Symbol of the face stencil of a constant tensor: diagonal entries act
/// pointwise, off-diagonal entries on the average of the four nearest faces
/// of the other component.
fn tensor_symbol(a: &Matrix3<f64>, av: &CVector3, d: usize) -> CMatrix3 {
    let mut m = CMatrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = if i == j {
                Complex64::new(a[(i, j)], 0.0)
            } else if i < d && j < d {
                av[i].conj() * av[j] * a[(i, j)]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }
    m
}

/// Applies a constant tensor to a face field with the stencil of
/// [`tensor_symbol`].
pub fn apply_tensor_faces(a: &DMatrix<f64>, v: &StaggeredField) -> Result<StaggeredField> {
    let grid = *v.grid();
    let d = grid.dim();
    let mut out = StaggeredField::zeros(grid);
    for i in 0..d {
        for k in 0..grid.len() {
            out.comps[i][k] = a[(i, i)] * v.comps[i][k];
        }
        for j in (0..d).filter(|&j| j != i && a[(i, j)] != 0.0) {
            for k in 0..grid.len() {
                let km = grid.shift(k, i, -1);
                let s = v.comps[j][k] + v.comps[j][km] + v.comps[j][grid.shift(k, j, 1)] + v.comps[j][grid.shift(km, j, 1)];
                out.comps[i][k] += 0.25 * a[(i, j)] * s;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`apply_tensor_faces`], applied per frequency.
pub fn apply_inverse_tensor_faces(a: &DMatrix<f64>, v: &StaggeredField) -> Result<StaggeredField> {
    let grid = *v.grid();
    let d = grid.dim();
    let a3 = pad3(a);
    let sym = Symbols::new(grid)?;
    let vh = sym.forward_faces(v);
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![vec![zero; grid.len()]; d];
    for idx in 0..grid.len() {
        let (_, av) = sym.at(idx);
        let m = tensor_symbol(&a3, &av, d)
            .try_inverse()
            .ok_or_else(|| HomError::Singular("tensor stencil symbol".into()))?;
        let x = m * CVector3::from_fn(|i, _| if i < d { vh[i][idx] } else { zero });
        for i in 0..d {
            out[i][idx] = x[i];
        }
    }
    sym.inverse_faces(out)
}

fn handle_mean(values: &mut [f64], what: &str, policy: ZeroModePolicy) -> Result<()> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let scale = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    if mean.abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
        return Ok(());
    }
    match policy {
        ZeroModePolicy::Reject => Err(HomError::ZeroMode(format!("{what} has mean {mean:.3e}; no torus solution"))),
        ZeroModePolicy::Project => {
            warn!("removing mean {mean:.3e} of {what} before the torus solve");
            values.iter_mut().for_each(|v| *v -= mean);
            Ok(())
        }
    }
}

/// Velocity `V = B(ξ)(G - γP)` with `γᴴV = 0`, where `γ` is the gradient
/// symbol and the Hermitian `B(ξ)` is given per frequency from `(γ, avg)`.
/// Frequencies where `B` is `None` get a zero response.
fn solve_vector<F>(g: &StaggeredField, mut response: F) -> Result<(StaggeredField, ScalarField)>
where
    F: FnMut(&CVector3, &CVector3) -> Option<CMatrix3>,
{
    let grid = *g.grid();
    let d = grid.dim();
    let sym = Symbols::new(grid)?;
    let mut gh = sym.forward_faces(g);
    let len = grid.len();
    let zero = Complex64::new(0.0, 0.0);
    // A source mean at the round-off level of its own sum is zero; without
    // this, responses like σ*²A at the zero mode amplify summation noise.
    for (a, c) in gh.iter_mut().enumerate() {
        let bound = 64.0 * f64::EPSILON * g.comps[a].iter().map(|x| x.abs()).sum::<f64>();
        if c[0].norm() <= bound {
            c[0] = zero;
        }
    }
    let mut vh = vec![vec![zero; len]; d];
    let mut ph = vec![zero; len];
    for idx in 0..len {
        let (gamma, av) = sym.at(idx);
        let Some(b) = response(&gamma, &av) else { continue };
        let src = CVector3::from_fn(|a, _| if a < d { gh[a][idx] } else { zero });
        let bg = b * gamma;
        let den = gamma.dotc(&bg).re;
        let p = if den > 0.0 { gamma.dotc(&(b * src)) / den } else { zero };
        let v = b * (src - gamma * p);
        for a in 0..d {
            vh[a][idx] = v[a];
        }
        ph[idx] = p;
    }
    let v = sym.inverse_faces(vh)?;
    let p = ScalarField::from_vec(grid, sym.plan.inverse_real(ph))?;
    Ok((v, p))
}

fn vector_solution(system: MacroSystem, v: StaggeredField, p: ScalarField, residual: f64) -> MacroSolution {
    let grid = *v.grid();
    let mut dv = vec![0.0; grid.len()];
    div_raw(&grid, &v.comps, &mut dv);
    let vn = v.comps.iter().map(|c| dot(c, c)).sum::<f64>().sqrt();
    let div_residual = if vn > 0.0 { dot(&dv, &dv).sqrt() * grid.h() / vn } else { 0.0 };
    MacroSolution { system, v: Some(v), p: Some(p), u: None, residual, div_residual }
}

fn rel(res: &StaggeredField, g: &StaggeredField) -> f64 {
    let gn = g.norm_l2();
    if gn > 0.0 {
        res.norm_l2() / gn
    } else {
        res.norm_l2()
    }
}

/// `v = A(g - ∇p)`, `div v = 0`.
pub fn solve_darcy(a: &DMatrix<f64>, g: &StaggeredField) -> Result<MacroSolution> {
    let d = g.grid().dim();
    check_spd(a, d)?;
    let a3 = pad3(a);
    let (v, p) = solve_vector(g, |_, av| Some(tensor_symbol(&a3, av, d)))?;
    // v - A(g - ∇p)
    let grid = *g.grid();
    let mut gp = vec![vec![0.0; grid.len()]; d];
    grad_raw(&grid, &p.data, &mut gp);
    let drive = StaggeredField::from_comps(grid, (0..d).map(|i| g.comps[i].iter().zip(&gp[i]).map(|(x, y)| x - y).collect()).collect())?;
    let res = v.sub(&apply_tensor_faces(a, &drive)?);
    let scale = apply_tensor_faces(a, g)?;
    Ok(vector_solution(MacroSystem::Darcy, v, p, rel(&res, &scale)))
}

/// Residual of `-Δv + ∇p + friction - g` relative to `‖g‖`.
fn stokes_like_residual(v: &StaggeredField, p: &ScalarField, fr: Option<&StaggeredField>, g: &StaggeredField) -> Result<f64> {
    let grid = *v.grid();
    let d = grid.dim();
    let mut gp = vec![vec![0.0; grid.len()]; d];
    grad_raw(&grid, &p.data, &mut gp);
    let mut lv = vec![0.0; grid.len()];
    let mut res = StaggeredField::zeros(grid);
    for a in 0..d {
        lap_raw(&grid, &v.comps[a], &mut lv);
        for i in 0..grid.len() {
            let mut r = -lv[i] + gp[a][i] - g.comps[a][i];
            if let Some(f) = fr {
                r += f.comps[a][i];
            }
            res.comps[a][i] = r;
        }
    }
    Ok(rel(&res, g))
}

/// `-Δv + ∇p + σ*⁻² A⁻¹ v = g`, `div v = 0`, where `A⁻¹` is the inverse of
/// the face stencil used by [`solve_darcy`], so that `σ*⁻² v` tends to the
/// Darcy velocity as `σ* → 0`.
pub fn solve_brinkman(a: &DMatrix<f64>, sigma_star: f64, g: &StaggeredField) -> Result<MacroSolution> {
    let d = g.grid().dim();
    check_spd(a, d)?;
    if !(sigma_star > 0.0 && sigma_star.is_finite()) {
        return Err(HomError::Domain(format!("sigma_star must be positive and finite, got {sigma_star}")));
    }
    let a3 = pad3(a);
    let s2 = sigma_star * sigma_star;
    let mut singular = false;
    let (v, p) = solve_vector(g, |gamma, av| {
        let Some(fr) = tensor_symbol(&a3, av, d).try_inverse() else {
            singular = true;
            return None;
        };
        let mut m = fr / Complex64::new(s2, 0.0);
        for i in 0..3 {
            m[(i, i)] += if i < d { Complex64::new(gamma.norm_squared(), 0.0) } else { Complex64::new(0.0, 0.0) };
        }
        match m.try_inverse() {
            Some(b) => Some(b),
            None => {
                singular = true;
                None
            }
        }
    })?;
    if singular {
        return Err(HomError::Singular("per-frequency Brinkman system".into()));
    }
    let friction = apply_inverse_tensor_faces(a, &v)?.scaled(1.0 / s2);
    let residual = stokes_like_residual(&v, &p, Some(&friction), g)?;
    Ok(vector_solution(MacroSystem::StokesBrinkman, v, p, residual))
}

/// `-Δv + ∇p = g`, `div v = 0`, zero-mean velocity.
pub fn solve_stokes_macro(g: &StaggeredField, policy: ZeroModePolicy) -> Result<MacroSolution> {
    let mut g = g.clone();
    for (a, c) in g.comps.iter_mut().enumerate() {
        handle_mean(c, &format!("force component {a}"), policy)?;
    }
    let (v, p) = solve_vector(&g, |gamma, _| {
        let k2 = gamma.norm_squared();
        (k2 > 0.0).then(|| CMatrix3::identity() / Complex64::new(k2, 0.0))
    })?;
    let residual = stokes_like_residual(&v, &p, None, &g)?;
    Ok(vector_solution(MacroSystem::Stokes, v, p, residual))
}

fn solve_scalar(f: &ScalarField, shift: f64) -> Result<ScalarField> {
    let grid = *f.grid();
    let sym = Symbols::new(grid)?;
    let mut c = sym.plan.forward_real(&f.data);
    for (idx, z) in c.iter_mut().enumerate() {
        let (gamma, _) = sym.at(idx);
        let den = gamma.norm_squared() + shift;
        *z = if den > 0.0 { *z / den } else { Complex64::new(0.0, 0.0) };
    }
    ScalarField::from_vec(grid, sym.plan.inverse_real(c))
}

fn scalar_solution(system: MacroSystem, u: ScalarField, f: &ScalarField, shift: f64) -> MacroSolution {
    let grid = *u.grid();
    let mut lu = vec![0.0; grid.len()];
    lap_raw(&grid, &u.data, &mut lu);
    let r: Vec<f64> = (0..grid.len()).map(|i| -lu[i] + shift * u.data[i] - f.data[i]).collect();
    let fnorm = dot(&f.data, &f.data).sqrt();
    let rn = dot(&r, &r).sqrt();
    let residual = if fnorm > 0.0 { rn / fnorm } else { rn };
    MacroSolution { system, v: None, p: None, u: Some(u), residual, div_residual: 0.0 }
}

/// `-Δu + σ*⁻² w̄⁻¹ u = f`.
pub fn solve_laplace_brinkman(wbar: f64, sigma_star: f64, f: &ScalarField) -> Result<MacroSolution> {
    if !(wbar > 0.0) || !(sigma_star > 0.0 && sigma_star.is_finite()) {
        return Err(HomError::Domain(format!("need wbar > 0 and finite sigma_star > 0, got {wbar}, {sigma_star}")));
    }
    let shift = 1.0 / (sigma_star * sigma_star * wbar);
    let u = solve_scalar(f, shift)?;
    Ok(scalar_solution(MacroSystem::LaplaceBrinkman, u, f, shift))
}

/// `-Δu = f`, zero-mean solution.
pub fn solve_poisson_macro(f: &ScalarField, policy: ZeroModePolicy) -> Result<MacroSolution> {
    let mut f = f.clone();
    handle_mean(&mut f.data, "source", policy)?;
    let u = solve_scalar(&f, 0.0)?;
    Ok(scalar_solution(MacroSystem::Poisson, u, &f, 0.0))
}

/// Discrete Helmholtz projection: removes the gradient part of `g`, keeping
/// its mean. The result is divergence-free to round-off.
pub fn leray_project(g: &StaggeredField) -> Result<StaggeredField> {
    Ok(solve_vector(g, |_, _| Some(CMatrix3::identity()))?.0)
}

/// `u = w̄ f`.
pub fn poisson_pointwise(wbar: f64, f: &ScalarField) -> Result<MacroSolution> {
    if !(wbar > 0.0) {
        return Err(HomError::Domain(format!("wbar must be positive, got {wbar}")));
    }
    let u = f.scaled(wbar);
    Ok(MacroSolution { system: MacroSystem::PoissonPointwise, v: None, p: None, u: Some(u), residual: 0.0, div_residual: 0.0 })
}
