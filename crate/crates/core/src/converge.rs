//! Limit-passage studies along ε-ladders: micro solves, regime rescaling,
//! comparison against the macro system, and the test-function identities.
//!
//! Each rung is compared with the macro system built from the cell tensor
//! computed at that rung's own hole ratio and resolution, so the measured
//! error is the homogenization error of the discrete problem. Weak limits
//! (the supercritical velocity, the pointwise Poisson limit) are compared
//! through averages over lattice periods.

use std::fmt::Write as _;
use std::time::Instant;

use log::info;
use nalgebra::DMatrix;

use crate::cell::{permeability, rescale_corrector, solve_cell_poisson, solve_cell_stokes, CellSolution, CellSpec};
use crate::error::{HomError, Result};
use crate::lattice::{build_masks, classify_regime, sigma_eps, HoleModel, PerforationConfig, Regime};
use crate::macro_solver::{
    poisson_pointwise, solve_brinkman, solve_darcy, solve_laplace_brinkman, solve_poisson_macro, solve_stokes_macro,
    MacroSolution, ZeroModePolicy,
};
use crate::micro::{solve_poisson_on, solve_stokes_on, MicroOptions, MicroSolution, Problem};
use crate::numerics::grid::dot;
use crate::numerics::stencil::lap_raw;
use crate::numerics::{Grid, ScalarField, StaggeredField};
use crate::pressure::{face_grad_norm, freq_split, pressure_bounds_report, split_scale, PressureBoundsReport, RestrictOptions, Restrictor};
use crate::source::{bump, SourceSpec};
use crate::stats::{loglog_fit, strictly_decreasing};

/// How the hole size follows the period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    /// `a_ε = prefactor · ε^α`.
    Power { alpha: f64, prefactor: f64 },
    /// `a_ε = η ε`.
    FixedRatio { eta: f64 },
    /// `σ_ε = σ*` on every rung.
    Critical { sigma_star: f64 },
}

impl Schedule {
    pub fn a_eps(&self, d: usize, eps: f64) -> f64 {
        match *self {
            Schedule::Power { alpha, prefactor } => prefactor * eps.powf(alpha),
            Schedule::FixedRatio { eta } => eta * eps,
            Schedule::Critical { sigma_star } => {
                if d == 2 {
                    eps * (-(sigma_star / eps).powi(2)).exp()
                } else {
                    eps.powi(3) / (sigma_star * sigma_star)
                }
            }
        }
    }

    /// Regime implied by the schedule itself (not by probing it).
    pub fn regime(&self, d: usize) -> Regime {
        let crit = if d == 2 { 1.0 } else { 3.0 };
        match *self {
            Schedule::Critical { sigma_star } => Regime::Critical { sigma_star },
            Schedule::FixedRatio { .. } => Regime::Supercritical,
            Schedule::Power { alpha, .. } if (alpha - crit).abs() < 1e-12 => Regime::Critical { sigma_star: f64::NAN },
            Schedule::Power { alpha, .. } if alpha < crit => Regime::Supercritical,
            Schedule::Power { .. } => Regime::Subcritical,
        }
    }
}

/// One ladder point: period `ε`, `m` periods per side, `n` cells per period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rung {
    pub eps: f64,
    pub m: usize,
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct StudySpec {
    pub problem: Problem,
    pub d: usize,
    pub schedule: Schedule,
    /// Sorted by decreasing `ε`, with `m ε` equal on every rung.
    pub rungs: Vec<Rung>,
    pub hole: HoleModel,
    pub x0: [f64; 3],
    pub source: SourceSpec,
    /// Half-side of the comparison box `K`, centred in the torus.
    pub k_half: f64,
    pub min_hole_span: f64,
    /// Record the pressure split (Stokes only).
    pub pressure: bool,
    pub min_annulus_cells: f64,
    /// Largest accepted relative error on the finest rung.
    pub final_tolerance: f64,
    /// Directory for per-rung field dumps, if any.
    pub dump_dir: Option<std::path::PathBuf>,
}

impl StudySpec {
    pub fn new(problem: Problem, d: usize, schedule: Schedule, rungs: Vec<Rung>, source: SourceSpec, k_half: f64) -> Self {
        Self {
            problem,
            d,
            schedule,
            rungs,
            hole: HoleModel::default_ball(),
            x0: [0.0; 3],
            source,
            k_half,
            min_hole_span: crate::lattice::DEFAULT_MIN_HOLE_SPAN,
            pressure: false,
            min_annulus_cells: 1.0,
            final_tolerance: 0.2,
            dump_dir: None,
        }
    }

    pub fn side(&self) -> f64 {
        self.rungs.first().map(|r| r.eps * r.m as f64).unwrap_or(0.0)
    }

    pub fn regime(&self) -> Regime {
        self.schedule.regime(self.d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rungs.len() < 4 {
            return Err(HomError::InsufficientLadder { required: 4, got: self.rungs.len() });
        }
        if self.rungs.windows(2).any(|w| !(w[1].eps < w[0].eps)) {
            return Err(HomError::Config("rungs must be sorted by decreasing eps".into()));
        }
        let side = self.side();
        if self.rungs.iter().any(|r| ((r.eps * r.m as f64) - side).abs() > 1e-12 * side) {
            return Err(HomError::Config("m * eps must be the same on every rung".into()));
        }
        if !(self.k_half > 0.0 && self.k_half < 0.5 * side) {
            return Err(HomError::Config(format!("comparison box half-side {} must lie in (0, {})", self.k_half, 0.5 * side)));
        }
        if self.source.support_half_width() > self.k_half {
            return Err(HomError::Config("comparison box must contain the source support".into()));
        }
        if self.pressure && self.problem != Problem::Stokes {
            return Err(HomError::Config("pressure split needs the Stokes problem".into()));
        }
        Ok(())
    }

    pub fn config(&self, rung: &Rung) -> Result<PerforationConfig> {
        Ok(PerforationConfig::new(self.d, rung.eps, self.schedule.a_eps(self.d, rung.eps), rung.m, rung.n)?
            .with_hole(self.hole.clone())?
            .with_x0(self.x0)?
            .with_min_hole_span(self.min_hole_span))
    }
}

/// Everything recorded for one rung.
#[derive(Clone, Debug, PartialEq)]
pub struct RungRow {
    pub eps: f64,
    pub a_eps: f64,
    pub eta: f64,
    pub sigma: f64,
    pub m: usize,
    pub n: usize,
    pub grid_n: usize,
    pub micro_l2: f64,
    pub micro_grad: f64,
    pub micro_pressure: f64,
    /// Absolute error in the regime norm.
    pub error: f64,
    /// Regime norm of the macro reference.
    pub reference: f64,
    pub rel_error: f64,
    /// `A[0][0]` (Stokes) or `w̄` (Poisson) of the rung's cell problem.
    pub cell_coefficient: f64,
    /// `σ⁻² ∫ φ v·e¹` and `∫ φ v_macro·e¹` (supercritical Stokes).
    pub test_term: Option<(f64, f64)>,
    /// `‖∇v_ε‖²`, `⟨g, v_macro⟩` and `‖∇v_macro‖²`.
    pub energies: (f64, f64, f64),
    pub grad_p1: Option<f64>,
    pub p2_norm: Option<f64>,
    pub iterations: usize,
}

/// Log-log slope with its fit residual.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeRecord {
    pub quantity: String,
    pub against: String,
    pub slope: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Energy identity chain along a subcritical Stokes ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct StrongConvergence {
    /// `|‖∇v_ε‖² - ⟨g, v⟩|` per rung.
    pub gaps: Vec<f64>,
    /// Largest `|‖∇v‖² - ⟨g, v⟩| / ⟨g, v⟩` of the macro solutions.
    pub macro_defect: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub problem: Problem,
    pub d: usize,
    pub regime: Regime,
    /// Description of the error norm, flagged when it is a surrogate.
    pub norm: String,
    pub rows: Vec<RungRow>,
    pub slopes: Vec<SlopeRecord>,
    pub verdicts: Vec<Verdict>,
    pub pressure: Option<PressureBoundsReport>,
    pub strong: Option<StrongConvergence>,
}

impl ConvergenceReport {
    pub fn pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn rel_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rel_error).collect()
    }

    /// `NonDecreasing` with the full error sequence when monotonicity fails.
    pub fn require_decreasing(&self) -> Result<()> {
        let e = self.rel_errors();
        if decreasing_or_zero(&e) {
            Ok(())
        } else {
            let rows: Vec<String> = self.rows.iter().map(|r| format!("eps={:.4e}: {:.4e}", r.eps, r.rel_error)).collect();
            Err(HomError::NonDecreasing(rows.join(", ")))
        }
    }

    pub const CSV_HEADER: &'static str = "eps,a_eps,eta,sigma,m,n,grid_n,micro_l2,micro_grad,micro_pressure,error,reference,rel_error,cell_coefficient,test_term_micro,test_term_macro,micro_energy,macro_work,macro_energy,grad_p1,p2_norm,iterations";

    /// Rows as CSV with a fixed column set; empty cells for absent values.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# problem={} d={} regime={} norm={}", self.problem.name(), self.d, self.regime, self.norm);
        let _ = writeln!(s, "{}", Self::CSV_HEADER);
        let opt = |x: Option<f64>| x.map(|v| format!("{v:.12e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.12e},{:.12e},{:.12e},{:.12e},{},{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{},{},{:.12e},{:.12e},{:.12e},{},{},{}",
                r.eps,
                r.a_eps,
                r.eta,
                r.sigma,
                r.m,
                r.n,
                r.grid_n,
                r.micro_l2,
                r.micro_grad,
                r.micro_pressure,
                r.error,
                r.reference,
                r.rel_error,
                r.cell_coefficient,
                opt(r.test_term.map(|t| t.0)),
                opt(r.test_term.map(|t| t.1)),
                r.energies.0,
                r.energies.1,
                r.energies.2,
                opt(r.grad_p1),
                opt(r.p2_norm),
                r.iterations
            );
        }
        s
    }

    /// Plain-text summary: slopes and one line per verdict.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} d={} {}: error norm {}", self.problem.name(), self.d, self.regime, self.norm);
        for r in &self.rows {
            let _ = writeln!(s, "  eps={:.4e} sigma={:.4e} n={} rel_error={:.4e}", r.eps, r.sigma, r.n, r.rel_error);
        }
        for sl in &self.slopes {
            let _ = writeln!(s, "  slope {} vs {} = {:.4} (fit residual {:.2e})", sl.quantity, sl.against, sl.slope, sl.residual);
        }
        for v in &self.verdicts {
            let _ = writeln!(s, "  {} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        }
        s
    }
}

fn decreasing_or_zero(e: &[f64]) -> bool {
    e.iter().all(|&x| x == 0.0) || strictly_decreasing(e)
}

fn dump_rung(dir: &std::path::Path, idx: usize, masks: &crate::lattice::Masks, micro: &MicroSolution, mac: &MacroSolution) -> Result<()> {
    use crate::io::{write_mask, write_scalar, write_staggered};
    let stem = |name: &str| dir.join(format!("rung{idx}_{name}"));
    write_mask(&stem("solid"), "solid", &masks.grid, &masks.solid)?;
    if let Some(u) = &micro.u {
        write_scalar(&stem("micro_u"), "micro_u", u)?;
    }
    if let Some(v) = &micro.v {
        write_staggered(&stem("micro_v"), "micro_v", v)?;
    }
    if let Some(p) = &micro.p {
        write_scalar(&stem("micro_p"), "micro_p", p)?;
    }
    if let Some(u) = &mac.u {
        write_scalar(&stem("macro_u"), "macro_u", u)?;
    }
    if let Some(v) = &mac.v {
        write_staggered(&stem("macro_v"), "macro_v", v)?;
    }
    if let Some(p) = &mac.p {
        write_scalar(&stem("macro_p"), "macro_p", p)?;
    }
    Ok(())
}

/// Index of the lattice period containing grid index `j` along one axis.
fn period_of(j: usize, nt: usize, n: usize) -> usize {
    ((j + nt + n / 2 - nt / 2) / n) % (nt / n)
}

/// Replaces every value by the mean over its lattice period.
pub fn period_average(data: &[f64], grid: &Grid, n: usize) -> Vec<f64> {
    let nt = grid.n();
    let m = nt / n;
    let d = grid.dim();
    let per: Vec<usize> = (0..nt).map(|j| period_of(j, nt, n)).collect();
    let key = |i: usize| {
        let c = grid.coords(i);
        (0..d).fold(0usize, |k, a| k * m + per[c[a]])
    };
    let mut sum = vec![0.0; m.pow(d as u32)];
    for (i, x) in data.iter().enumerate() {
        sum[key(i)] += x;
    }
    let count = n.pow(d as u32) as f64;
    (0..data.len()).map(|i| sum[key(i)] / count).collect()
}

/// Cells whose centre lies in the box `|x_a| ≤ half`.
pub fn box_mask(grid: &Grid, half: f64) -> Vec<bool> {
    (0..grid.len())
        .map(|i| {
            let x = grid.center(i);
            x[..grid.dim()].iter().all(|c| c.abs() <= half)
        })
        .collect()
}

fn masked_l2(comps: &[&[f64]], mask: &[bool], cell_volume: f64) -> f64 {
    let mut s = 0.0;
    for c in comps {
        for (x, &m) in c.iter().zip(mask) {
            if m {
                s += x * x;
            }
        }
    }
    (s * cell_volume).sqrt()
}

fn scalar_grad_norm(u: &ScalarField) -> f64 {
    let g = *u.grid();
    let mut tmp = vec![0.0; g.len()];
    lap_raw(&g, &u.data, &mut tmp);
    (-dot(&u.data, &tmp) * g.cell_volume()).max(0.0).sqrt()
}

enum CellData {
    Stokes(DMatrix<f64>),
    Poisson(f64),
}

fn cell_data(spec: &StudySpec, eta: f64, n: usize) -> Result<CellData> {
    let cs = CellSpec::new(spec.d, eta, spec.hole.clone(), n).with_x0(spec.x0).with_min_hole_span(spec.min_hole_span);
    Ok(match spec.problem {
        Problem::Stokes => CellData::Stokes(permeability(&solve_cell_stokes(&cs)?)?.tensor),
        Problem::Poisson => CellData::Poisson(solve_cell_poisson(&cs)?.wbar),
    })
}

fn macro_for(regime: Regime, cell: &CellData, sigma: f64, g: &Source) -> Result<MacroSolution> {
    match (cell, g) {
        (CellData::Stokes(a), Source::Vector(g)) => match regime {
            Regime::Supercritical => solve_darcy(a, g),
            Regime::Critical { .. } => solve_brinkman(a, sigma, g),
            Regime::Subcritical => solve_stokes_macro(g, ZeroModePolicy::Reject),
        },
        (CellData::Poisson(w), Source::Scalar(f)) => match regime {
            Regime::Supercritical => poisson_pointwise(*w, f),
            Regime::Critical { .. } => solve_laplace_brinkman(*w, sigma, f),
            Regime::Subcritical => solve_poisson_macro(f, ZeroModePolicy::Reject),
        },
        _ => Err(HomError::Config("problem and source kind disagree".into())),
    }
}

enum Source {
    Scalar(ScalarField),
    Vector(StaggeredField),
}

/// Smooth test function: the source bump rescaled to the comparison box.
pub fn test_function(k_half: f64) -> impl Fn([f64; 3]) -> f64 {
    move |x| bump((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt(), k_half)
}

/// Gradient of [`test_function`].
pub fn test_function_grad(k_half: f64) -> impl Fn([f64; 3]) -> [f64; 3] {
    move |x| {
        let r2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (k_half * k_half);
        if r2 >= 1.0 {
            return [0.0; 3];
        }
        let s = -6.0 * (1.0 - r2).powi(2) / (k_half * k_half);
        [s * x[0], s * x[1], s * x[2]]
    }
}

fn face_weighted(v: &StaggeredField, axis: usize, phi: &dyn Fn([f64; 3]) -> f64) -> f64 {
    let g = *v.grid();
    (0..g.len()).map(|i| phi(g.face_center(axis, i)) * v.comps[axis][i]).sum::<f64>() * g.cell_volume()
}

/// Runs the study rung by rung.
pub fn run_study(spec: &StudySpec) -> Result<ConvergenceReport> {
    spec.validate()?;
    let d = spec.d;
    let regime = spec.regime();
    let probes: Vec<f64> = spec.rungs.iter().map(|r| r.eps).collect();
    let probed = classify_regime(d, &|e| spec.schedule.a_eps(d, e), &probes)?;
    let norm = match (regime, spec.problem) {
        (Regime::Subcritical, _) => "relative gradient L2 over the torus".to_string(),
        (Regime::Supercritical, _) => "relative L2(K) of lattice-period averages (surrogate for weak convergence)".to_string(),
        (Regime::Critical { .. }, _) => "relative L2(K)".to_string(),
    };

    let mut rows = Vec::new();
    let mut cache: Vec<((u64, usize), CellData)> = Vec::new();
    let mut splits = Vec::new();
    let mut macro_defect: f64 = 0.0;
    for (idx, rung) in spec.rungs.iter().enumerate() {
        let t0 = Instant::now();
        let config = spec.config(rung)?;
        let masks = build_masks(&config)?;
        let grid = masks.grid;
        let sigma = config.sigma()?;
        let key = (config.eta().to_bits(), rung.n);
        if !cache.iter().any(|(k, _)| *k == key) {
            cache.push((key, cell_data(spec, config.eta(), rung.n)?));
        }
        let cell = &cache.iter().find(|(k, _)| *k == key).expect("cached").1;
        let opts = MicroOptions::default().with_regime(regime);
        let source = match spec.problem {
            Problem::Stokes => Source::Vector(spec.source.vector(grid)?),
            Problem::Poisson => Source::Scalar(spec.source.scalar(grid)?),
        };
        let micro: MicroSolution = match &source {
            Source::Vector(g) => solve_stokes_on(&config, &masks, g, &opts)?,
            Source::Scalar(f) => solve_poisson_on(&config, &masks, f, &opts)?,
        };
        let mac = macro_for(regime, cell, sigma, &source)?;
        if let Some(dir) = &spec.dump_dir {
            dump_rung(dir, idx, &masks, &micro, &mac)?;
        }
        let kmask = box_mask(&grid, spec.k_half);
        let cv = grid.cell_volume();
        let n = rung.n;

        // Micro and macro fields as component lists.
        let (mic, mac_f): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match spec.problem {
            Problem::Stokes => (
                micro.v.as_ref().expect("stokes velocity").comps.clone(),
                mac.v.as_ref().expect("macro velocity").comps.clone(),
            ),
            Problem::Poisson => (
                vec![micro.u.as_ref().expect("poisson solution").data.clone()],
                vec![mac.u.as_ref().expect("macro solution").data.clone()],
            ),
        };
        let (error, reference) = match regime {
            Regime::Supercritical => {
                let s2 = 1.0 / (sigma * sigma);
                let diff: Vec<Vec<f64>> = mic
                    .iter()
                    .zip(&mac_f)
                    .map(|(a, b)| {
                        let a = period_average(a, &grid, n);
                        let b = period_average(b, &grid, n);
                        a.iter().zip(&b).map(|(x, y)| s2 * x - y).collect()
                    })
                    .collect();
                let refs: Vec<Vec<f64>> = mac_f.iter().map(|b| period_average(b, &grid, n)).collect();
                let dr: Vec<&[f64]> = diff.iter().map(|v| v.as_slice()).collect();
                let rr: Vec<&[f64]> = refs.iter().map(|v| v.as_slice()).collect();
                (masked_l2(&dr, &kmask, cv), masked_l2(&rr, &kmask, cv))
            }
            Regime::Critical { .. } => {
                let diff: Vec<Vec<f64>> = mic.iter().zip(&mac_f).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
                let dr: Vec<&[f64]> = diff.iter().map(|v| v.as_slice()).collect();
                let rr: Vec<&[f64]> = mac_f.iter().map(|v| v.as_slice()).collect();
                (masked_l2(&dr, &kmask, cv), masked_l2(&rr, &kmask, cv))
            }
            Regime::Subcritical => match spec.problem {
                Problem::Stokes => {
                    let a = micro.v.as_ref().expect("stokes velocity");
                    let b = mac.v.as_ref().expect("macro velocity");
                    (face_grad_norm(&a.sub(b)), face_grad_norm(b))
                }
                Problem::Poisson => {
                    let a = micro.u.as_ref().expect("poisson solution");
                    let b = mac.u.as_ref().expect("macro solution");
                    (scalar_grad_norm(&a.sub(b)), scalar_grad_norm(b))
                }
            },
        };
        let rel_error = if reference > 0.0 { error / reference } else if error == 0.0 { 0.0 } else { f64::INFINITY };

        let test_term = match (regime, &source) {
            (Regime::Supercritical, Source::Vector(_)) => {
                let phi = test_function(spec.k_half);
                let v = micro.v.as_ref().expect("stokes velocity");
                let vm = mac.v.as_ref().expect("macro velocity");
                Some((face_weighted(v, 0, &phi) / (sigma * sigma), face_weighted(vm, 0, &phi)))
            }
            _ => None,
        };
        let energies = match &source {
            Source::Vector(g) => {
                let v = micro.v.as_ref().expect("stokes velocity");
                let vm = mac.v.as_ref().expect("macro velocity");
                (face_grad_norm(v).powi(2), g.inner(vm), face_grad_norm(vm).powi(2))
            }
            Source::Scalar(f) => {
                let u = micro.u.as_ref().expect("poisson solution");
                let um = mac.u.as_ref().expect("macro solution");
                (scalar_grad_norm(u).powi(2), f.inner(um), scalar_grad_norm(um).powi(2))
            }
        };
        if energies.1 != 0.0 {
            macro_defect = macro_defect.max((energies.2 - energies.1).abs() / energies.1.abs());
        }

        let (mut grad_p1, mut p2_norm) = (None, None);
        if spec.pressure {
            let r = Restrictor::new(&config, &masks, RestrictOptions::default().with_min_annulus_cells(spec.min_annulus_cells))?;
            let p = r.extend_pressure(micro.p.as_ref().expect("stokes pressure"))?;
            let split = freq_split(&p, split_scale(regime, sigma))?;
            grad_p1 = Some(split.grad_p1);
            p2_norm = Some(split.p2_norm);
            splits.push((sigma, split));
        }
        let cell_coefficient = match cell {
            CellData::Stokes(a) => a[(0, 0)],
            CellData::Poisson(w) => *w,
        };
        info!("rung eps={} n={} N={}: rel error {:.4e} in {:.1?}", rung.eps, rung.n, grid.n(), rel_error, t0.elapsed());
        rows.push(RungRow {
            eps: rung.eps,
            a_eps: config.a_eps,
            eta: config.eta(),
            sigma,
            m: rung.m,
            n: rung.n,
            grid_n: grid.n(),
            micro_l2: micro.norms.l2,
            micro_grad: micro.norms.grad,
            micro_pressure: micro.norms.pressure,
            error,
            reference,
            rel_error,
            cell_coefficient,
            test_term,
            energies,
            grad_p1,
            p2_norm,
            iterations: micro.iterations,
        });
    }

    let sig: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let mut slopes = Vec::new();
    let mut push_slope = |q: &str, x: &str, xs: &[f64], ys: &[f64]| {
        if ys.iter().all(|&y| y > 0.0) && xs.iter().all(|&x| x > 0.0) {
            let f = loglog_fit(xs, ys);
            slopes.push(SlopeRecord { quantity: q.into(), against: x.into(), slope: f.slope, residual: f.residual });
        }
    };
    let l2: Vec<f64> = rows.iter().map(|r| r.micro_l2).collect();
    let gr: Vec<f64> = rows.iter().map(|r| r.micro_grad).collect();
    let er: Vec<f64> = rows.iter().map(|r| r.rel_error).collect();
    if !matches!(regime, Regime::Critical { .. }) {
        push_slope("micro_l2", "sigma", &sig, &l2);
        push_slope("micro_grad", "sigma", &sig, &gr);
    }
    push_slope("rel_error", "eps", &eps, &er);

    let mut verdicts = Vec::new();
    let same = std::mem::discriminant(&probed.label) == std::mem::discriminant(&regime);
    verdicts.push(Verdict {
        name: "regime".into(),
        pass: same,
        detail: format!("schedule says {}, probing sigma says {}", regime, probed.label),
    });
    verdicts.push(Verdict {
        name: "decreasing".into(),
        pass: decreasing_or_zero(&er),
        detail: format!("relative errors {:?}", er.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>()),
    });
    let last = *er.last().expect("nonempty ladder");
    verdicts.push(Verdict {
        name: "final".into(),
        pass: last <= spec.final_tolerance,
        detail: format!("finest relative error {last:.3e} (limit {:.2})", spec.final_tolerance),
    });

    let pressure = if spec.pressure { Some(pressure_bounds_report(regime, &splits)?) } else { None };
    let strong = (regime == Regime::Subcritical).then(|| {
        let gaps: Vec<f64> = rows.iter().map(|r| (r.energies.0 - r.energies.1).abs()).collect();
        let scale = rows.iter().map(|r| r.energies.1.abs()).fold(0.0, f64::max);
        let trivially = gaps.iter().all(|&g| g <= 1e-8 * scale.max(f64::MIN_POSITIVE));
        StrongConvergence {
            pass: (trivially || strictly_decreasing(&gaps)) && macro_defect <= 1e-8,
            gaps,
            macro_defect,
        }
    });
    Ok(ConvergenceReport { problem: spec.problem, d, regime, norm, rows, slopes, verdicts, pressure, strong })
}

/// Energy chain of a Stokes ladder against its macro solutions: the gap
/// `|‖∇v_ε‖² - ⟨g, v⟩|` must decrease and `‖∇v‖² = ⟨g, v⟩` must hold.
pub fn strong_convergence_check(ladder: &[(&MicroSolution, &StaggeredField, &MacroSolution)]) -> Result<StrongConvergence> {
    let mut gaps = Vec::new();
    let mut defect: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (micro, g, mac) in ladder {
        let v = micro.v.as_ref().ok_or_else(|| HomError::Config("micro solution has no velocity".into()))?;
        let vm = mac.v.as_ref().ok_or_else(|| HomError::Config("macro solution has no velocity".into()))?;
        g.grid().check_same(v.grid())?;
        g.grid().check_same(vm.grid())?;
        let work = g.inner(vm);
        let e_micro = face_grad_norm(v).powi(2);
        let e_macro = face_grad_norm(vm).powi(2);
        gaps.push((e_micro - work).abs());
        scale = scale.max(work.abs());
        if work != 0.0 {
            defect = defect.max((e_macro - work).abs() / work.abs());
        } else {
            defect = defect.max(e_macro);
        }
    }
    let trivially = gaps.iter().all(|&x| x <= 1e-8 * scale.max(f64::MIN_POSITIVE) || x == 0.0);
    let pass = (trivially || strictly_decreasing(&gaps)) && defect <= 1e-8;
    Ok(StrongConvergence { gaps, macro_defect: defect, pass })
}

/// Terms of the identity obtained by testing the micro system with `w^i φ`
/// and the rescaled cell system with `v_ε φ`:
///
/// `σ⁻² ∫φ v·e^i = ⟨g, w^i φ⟩ - ⟨∇v, w^i⊗∇φ⟩ + ⟨∇w^i, v⊗∇φ⟩ + ⟨p, w^i·∇φ⟩ - ⟨q^i, v·∇φ⟩`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityTerms {
    pub friction: f64,
    pub source: f64,
    pub cross_micro: f64,
    pub cross_cell: f64,
    /// `∫ φ ∇v : ∇w^i`, which cancels between the two tested systems.
    pub symmetric: f64,
    pub pressure_micro: f64,
    pub pressure_cell: f64,
    /// Left minus right side.
    pub residual: f64,
    /// `residual` over the largest term magnitude.
    pub relative: f64,
}

/// Evaluates [`IdentityTerms`] for direction `i` with `φ` the rescaled bump
/// of half-width `k_half`.
pub fn corrector_test_identity(micro: &MicroSolution, cell: &CellSolution, g: &StaggeredField, k_half: f64, i: usize) -> Result<IdentityTerms> {
    let config = &micro.config;
    let grid = config.grid()?;
    g.grid().check_same(&grid)?;
    let v = micro.v.as_ref().ok_or_else(|| HomError::Config("identity needs a Stokes solution".into()))?;
    let p = micro.p.as_ref().ok_or_else(|| HomError::Config("identity needs a pressure".into()))?;
    v.grid().check_same(&grid)?;
    let lat = rescale_corrector(cell, config)?;
    let d = grid.dim();
    if i >= d {
        return Err(HomError::Config(format!("direction {i} out of range")));
    }
    let w = &lat.w[i];
    // Rescaled cell pressure ε⁻¹ q(x/ε).
    let q = lat.q[i].scaled(1.0 / config.eps);
    let sigma = config.sigma()?;
    let h = grid.h();
    let cv = grid.cell_volume();
    let phi = test_function(k_half);
    let dphi = test_function_grad(k_half);

    let friction = face_weighted(v, i, &phi) / (sigma * sigma);
    let mut source = 0.0;
    for a in 0..d {
        for k in 0..grid.len() {
            source += g.comps[a][k] * w.comps[a][k] * phi(grid.face_center(a, k));
        }
    }
    source *= cv;

    // Edge terms: ∂_b u_a sits between faces k - e_b and k of component a.
    let (mut cross_micro, mut cross_cell, mut symmetric) = (0.0, 0.0, 0.0);
    for a in 0..d {
        for b in 0..d {
            for k in 0..grid.len() {
                let km = grid.shift(k, b, -1);
                let mut x = grid.face_center(a, k);
                x[b] -= 0.5 * h;
                let dv = (v.comps[a][k] - v.comps[a][km]) / h;
                let dw = (w.comps[a][k] - w.comps[a][km]) / h;
                let va = 0.5 * (v.comps[a][k] + v.comps[a][km]);
                let wa = 0.5 * (w.comps[a][k] + w.comps[a][km]);
                let gphi = dphi(x)[b];
                cross_micro += dv * wa * gphi;
                cross_cell += dw * va * gphi;
                symmetric += phi(x) * dv * dw;
            }
        }
    }
    cross_micro *= cv;
    cross_cell *= cv;
    symmetric *= cv;

    let (mut pressure_micro, mut pressure_cell) = (0.0, 0.0);
    for k in 0..grid.len() {
        if micro.solid[k] {
            continue;
        }
        let x = grid.center(k);
        let gphi = dphi(x);
        let (mut wg, mut vg) = (0.0, 0.0);
        for a in 0..d {
            let kp = grid.shift(k, a, 1);
            wg += 0.5 * (w.comps[a][k] + w.comps[a][kp]) * gphi[a];
            vg += 0.5 * (v.comps[a][k] + v.comps[a][kp]) * gphi[a];
        }
        pressure_micro += p.data[k] * wg;
        pressure_cell += q.data[k] * vg;
    }
    pressure_micro *= cv;
    pressure_cell *= cv;

    let rhs = source - cross_micro + cross_cell + pressure_micro - pressure_cell;
    let residual = friction - rhs;
    let scale = [friction, source, cross_micro, cross_cell, pressure_micro, pressure_cell]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(IdentityTerms {
        friction,
        source,
        cross_micro,
        cross_cell,
        symmetric,
        pressure_micro,
        pressure_cell,
        residual,
        relative: if scale > 0.0 { residual.abs() / scale } else { 0.0 },
    })
}

/// `σ_ε` for each rung of a study, without solving anything.
pub fn ladder_sigmas(spec: &StudySpec) -> Result<Vec<f64>> {
    spec.rungs.iter().map(|r| sigma_eps(spec.d, r.eps, spec.schedule.a_eps(spec.d, r.eps))).collect()
}
