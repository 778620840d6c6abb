use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use homlab::cell::{permeability, solve_cell_poisson, solve_cell_stokes, CellSpec};
use homlab::config::{read_perforation, read_study, KeyValues};
use homlab::converge::run_study;
use homlab::io::{csv_number, read_scalar, read_staggered, write_mask, write_scalar, write_staggered, CsvTable};
use homlab::lattice::{build_masks, HoleModel, HoleShape, PerforationConfig, Regime};
use homlab::macro_solver::{
    poisson_pointwise, solve_brinkman, solve_darcy, solve_laplace_brinkman, solve_poisson_macro, solve_stokes_macro,
    MacroSolution, MacroSystem, ZeroModePolicy,
};
use homlab::micro::{poincare_constant, solve_poisson_on, solve_stokes_on, MicroOptions, PoincareOptions};
use homlab::numerics::{Grid, StaggeredField};
use homlab::pressure::{freq_split, split_scale, RestrictOptions, Restrictor};
use homlab::source::SourceSpec;

#[derive(Parser)]
#[command(name = "homlab", version, about = "Homogenization of Poisson and Stokes problems in perforated tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unit-cell correctors and effective coefficients.
    Cell(CellArgs),
    /// Solve the perforated problem on one torus.
    Micro(MicroArgs),
    /// Poincaré constant of the perforated domain along an ε ladder.
    Poincare(PoincareArgs),
    /// Extend a perforated pressure and split it by frequency.
    Decompose(DecomposeArgs),
    /// Solve a limit system on a torus.
    Macro(MacroArgs),
    /// Run a convergence ladder from a study file.
    Converge(ConvergeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Poisson,
    Stokes,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Bump,
    Dipole,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Supercritical,
    Critical,
    Subcritical,
}

#[derive(Args)]
struct CellArgs {
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Hole-to-period ratio η.
    #[arg(long, conflicts_with = "eta_ladder")]
    eta: Option<f64>,
    /// Comma-separated η values.
    #[arg(long, value_delimiter = ',')]
    eta_ladder: Option<Vec<f64>>,
    /// `ball[:r]` or `superellipse:s1,s2[,s3]:p`.
    #[arg(long, default_value = "ball")]
    hole: String,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    /// Grid cells per period.
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, value_enum, default_value_t = ProblemArg::Stokes)]
    problem: ProblemArg,
    #[arg(long)]
    min_hole_span: Option<f64>,
    /// Directory for corrector dumps.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SourceOpts {
    #[arg(long, value_enum, default_value_t = SourceArg::Bump)]
    source: SourceArg,
    /// Dump stem read when `--source file`.
    #[arg(long)]
    source_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    source_radius: f64,
    /// Lobe offset of the dipole.
    #[arg(long)]
    source_separation: Option<f64>,
}

#[derive(Args)]
struct MicroArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    problem: ProblemArg,
    #[command(flatten)]
    source: SourceOpts,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoincareArgs {
    /// Perforation file; it must set `alpha` when a ladder is given.
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated ε values.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    /// Solve on the whole torus instead of one period.
    #[arg(long)]
    full_torus: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dump stem of the perforated pressure.
    #[arg(long)]
    pressure_file: PathBuf,
    #[arg(long, value_enum)]
    regime: RegimeArg,
    #[arg(long, default_value_t = 1.0)]
    min_annulus_cells: f64,
    /// Seed of the random test field used for the duality residual.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MacroArgs {
    /// darcy, brinkman, stokes, pointwise, laplace-brinkman or poisson.
    #[arg(long)]
    system: String,
    /// Whitespace-separated d×d tensor, one row per line.
    #[arg(long = "A-file", alias = "a-file")]
    a_file: Option<PathBuf>,
    /// Scalar cell coefficient for the Poisson systems.
    #[arg(long)]
    wbar: Option<f64>,
    #[arg(long)]
    sigma_star: Option<f64>,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    side: f64,
    #[command(flatten)]
    source: SourceOpts,
    /// Remove an unsolvable source mean instead of failing.
    #[arg(long)]
    project_mean: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Write per-rung micro and macro fields.
    #[arg(long)]
    dump: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let run = match cli.command {
        Command::Cell(a) => cmd_cell(a).map(|_| true),
        Command::Micro(a) => cmd_micro(a).map(|_| true),
        Command::Poincare(a) => cmd_poincare(a).map(|_| true),
        Command::Decompose(a) => cmd_decompose(a).map(|_| true),
        Command::Macro(a) => cmd_macro(a).map(|_| true),
        Command::Converge(a) => cmd_converge(a),
    };
    match run {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_hole(text: &str, delta1: Option<f64>, delta2: Option<f64>) -> Result<HoleModel> {
    let def = HoleModel::default_ball();
    let mut parts = text.split(':');
    let shape = match parts.next().unwrap_or("") {
        "ball" => HoleShape::Ball { radius: parts.next().map(str::parse).transpose()?.unwrap_or(0.25) },
        "superellipse" => {
            let axes: Vec<f64> = parts
                .next()
                .context("superellipse needs semi-axes")?
                .split(',')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()?;
            let p: f64 = parts.next().context("superellipse needs an exponent")?.parse()?;
            let s = match axes.as_slice() {
                [a, b] => [*a, *b, a.min(*b)],
                [a, b, c] => [*a, *b, *c],
                _ => bail!("superellipse takes 2 or 3 semi-axes"),
            };
            HoleShape::Superellipse { semi_axes: s, exponent: p }
        }
        other => bail!("unknown hole shape `{other}`"),
    };
    Ok(HoleModel::new(shape, delta1.unwrap_or(def.delta1()), delta2.unwrap_or(def.delta2()))?)
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.10e}", m[(i, j)])).collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
    s
}

fn cmd_cell(a: CellArgs) -> Result<()> {
    let hole = parse_hole(&a.hole, a.delta1, a.delta2)?;
    let etas = match (a.eta, a.eta_ladder) {
        (Some(e), None) => vec![e],
        (None, Some(l)) => l,
        _ => bail!("give --eta or --eta-ladder"),
    };
    for (k, &eta) in etas.iter().enumerate() {
        let mut spec = CellSpec::new(a.d, eta, hole.clone(), a.n);
        if let Some(s) = a.min_hole_span {
            spec = spec.with_min_hole_span(s);
        }
        println!("eta = {eta}");
        match a.problem {
            ProblemArg::Stokes => {
                let sol = solve_cell_stokes(&spec)?;
                let perm = permeability(&sol)?;
                println!("c_eta = {:.10e}", sol.c_eta);
                print!("A (energy) =\n{}", fmt_matrix(&perm.energy));
                print!("wbar (average) =\n{}", fmt_matrix(&perm.average));
                println!("formula discrepancy = {:.3e}", perm.discrepancy);
                println!("div residual = {:.3e}, momentum residual = {:.3e}", sol.div_residual, sol.momentum_residual);
                if let Some(dir) = &a.out {
                    let grid = sol.correctors[0].grid();
                    write_mask(&dir.join(format!("cell{k}_solid")), "solid", grid, &sol.solid)?;
                    for (i, (w, q)) in sol.correctors.iter().zip(&sol.pressures).enumerate() {
                        write_staggered(&dir.join(format!("cell{k}_w{i}")), &format!("w{i}"), w)?;
                        write_scalar(&dir.join(format!("cell{k}_q{i}")), &format!("q{i}"), q)?;
                    }
                }
            }
            ProblemArg::Poisson => {
                let sol = solve_cell_poisson(&spec)?;
                println!("c_eta = {:.10e}", sol.c_eta);
                println!("wbar = {:.10e}", sol.wbar);
                println!("energy = {:.10e}", sol.energy);
                println!("formula discrepancy = {:.3e}", (sol.energy - sol.wbar).abs() / sol.wbar.abs());
                if let Some(dir) = &a.out {
                    let grid = sol.w.grid();
                    write_mask(&dir.join(format!("cell{k}_solid")), "solid", grid, &sol.solid)?;
                    write_scalar(&dir.join(format!("cell{k}_w")), "w", &sol.w)?;
                }
            }
        }
    }
    Ok(())
}

fn source_spec(o: &SourceOpts) -> SourceSpec {
    match o.source {
        SourceArg::Dipole => SourceSpec::dipole(o.source_radius, o.source_separation.unwrap_or(o.source_radius)),
        _ => SourceSpec::bump(o.source_radius),
    }
}

enum Src {
    Scalar(homlab::numerics::ScalarField),
    Vector(StaggeredField),
}

fn load_source(o: &SourceOpts, grid: Grid, vector: bool) -> Result<Src> {
    if let SourceArg::File = o.source {
        let stem = o.source_file.as_deref().context("--source file needs --source-file")?;
        return Ok(if vector {
            let g = read_staggered(stem)?;
            if *g.grid() != grid {
                bail!("source grid does not match the configuration");
            }
            Src::Vector(g)
        } else {
            let f = read_scalar(stem)?;
            if *f.grid() != grid {
                bail!("source grid does not match the configuration");
            }
            Src::Scalar(f)
        });
    }
    let s = source_spec(o);
    Ok(if vector { Src::Vector(s.vector(grid)?) } else { Src::Scalar(s.scalar(grid)?) })
}

fn cmd_micro(a: MicroArgs) -> Result<()> {
    let config = read_perforation(&a.config)?;
    let masks = build_masks(&config)?;
    let stokes = matches!(a.problem, ProblemArg::Stokes);
    let opts = MicroOptions::default();
    let sol = match load_source(&a.source, masks.grid, stokes)? {
        Src::Vector(g) => solve_stokes_on(&config, &masks, &g, &opts)?,
        Src::Scalar(f) => solve_poisson_on(&config, &masks, &f, &opts)?,
    };
    let mut t = CsvTable::new(&["eps", "a_eps", "sigma_eps", "norm_l2", "norm_grad", "norm_pressure", "residual", "div_residual", "iterations"]);
    t.push(vec![
        csv_number(config.eps),
        csv_number(config.a_eps),
        csv_number(config.sigma()?),
        csv_number(sol.norms.l2),
        csv_number(sol.norms.grad),
        csv_number(sol.norms.pressure),
        csv_number(sol.residual),
        csv_number(sol.div_residual),
        sol.iterations.to_string(),
    ])?;
    print!("{}", t.render());
    if let Some(dir) = &a.out {
        t.write(&dir.join("micro.csv"))?;
        write_mask(&dir.join("solid"), "solid", &masks.grid, &masks.solid)?;
        if let Some(u) = &sol.u {
            write_scalar(&dir.join("u"), "u", u)?;
        }
        if let Some(v) = &sol.v {
            write_staggered(&dir.join("v"), "v", v)?;
        }
        if let Some(p) = &sol.p {
            write_scalar(&dir.join("p"), "p", p)?;
        }
    }
    Ok(())
}

fn cmd_poincare(a: PoincareArgs) -> Result<()> {
    let kv = KeyValues::read(&a.config)?;
    let base = homlab::config::perforation_from(&kv)?;
    let alpha: Option<f64> = kv.get("alpha")?;
    let prefactor: f64 = kv.get("prefactor")?.unwrap_or(1.0);
    kv.finish()?;
    let configs: Vec<PerforationConfig> = match &a.ladder {
        None => vec![base],
        Some(eps) => {
            let alpha = alpha.context("a ladder needs `alpha` in the configuration")?;
            eps.iter()
                .map(|&e| {
                    let mut c = base.clone();
                    c.eps = e;
                    c.a_eps = prefactor * e.powf(alpha);
                    c.validate().map(|_| c)
                })
                .collect::<homlab::Result<_>>()?
        }
    };
    let opts = PoincareOptions { bloch_reduce: !a.full_torus, ..Default::default() };
    let mut t = CsvTable::new(&["eps", "a_eps", "sigma_eps", "poincare_constant", "ratio_to_sigma", "lambda_min", "iterations"]);
    for c in &configs {
        let r = poincare_constant(c, &opts)?;
        let sigma = c.sigma()?;
        t.push(vec![
            csv_number(c.eps),
            csv_number(c.a_eps),
            csv_number(sigma),
            csv_number(r.constant),
            csv_number(r.constant / sigma),
            csv_number(r.lambda_min),
            r.iterations.to_string(),
        ])?;
    }
    print!("{}", t.render());
    if let Some(dir) = &a.out {
        t.write(&dir.join("poincare.csv"))?;
    }
    Ok(())
}

/// Smooth random periodic face field from a few low Fourier modes.
fn random_smooth(grid: Grid, seed: u64) -> StaggeredField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = grid.dim();
    let l = grid.side();
    let modes: Vec<([f64; 3], [f64; 3], f64)> = (0..6)
        .map(|_| {
            let mut k = [0.0; 3];
            let mut amp = [0.0; 3];
            for a in 0..d {
                k[a] = rng.gen_range(-2i32..=2) as f64 * 2.0 * std::f64::consts::PI / l;
                amp[a] = rng.gen_range(-1.0..1.0);
            }
            (k, amp, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    StaggeredField::from_fn(grid, |x| {
        let mut out = [0.0; 3];
        for (k, amp, ph) in &modes {
            let arg: f64 = (0..d).map(|a| k[a] * x[a]).sum::<f64>() + ph;
            for a in 0..d {
                out[a] += amp[a] * arg.cos();
            }
        }
        out
    })
}

fn cmd_decompose(a: DecomposeArgs) -> Result<()> {
    let config = read_perforation(&a.config)?;
    let masks = build_masks(&config)?;
    let p = read_scalar(&a.pressure_file)?;
    if *p.grid() != masks.grid {
        bail!("pressure grid does not match the configuration");
    }
    let sigma = config.sigma()?;
    let regime = match a.regime {
        RegimeArg::Supercritical => Regime::Supercritical,
        RegimeArg::Critical => Regime::Critical { sigma_star: sigma },
        RegimeArg::Subcritical => Regime::Subcritical,
    };
    let restrictor = Restrictor::new(&config, &masks, RestrictOptions::default().with_min_annulus_cells(a.min_annulus_cells))?;
    let extended = restrictor.extend_pressure(&p)?;
    let split = freq_split(&extended, split_scale(regime, sigma))?;
    let duality = restrictor.duality_defect(&p, &random_smooth(masks.grid, a.seed))?;
    let mut t = CsvTable::new(&[
        "eps",
        "sigma_eps",
        "norm_grad_p1",
        "norm_p2",
        "sobolev_w0",
        "sobolev_w1",
        "sobolev_w2",
        "sobolev_w3",
        "partition_error",
        "duality_residual",
    ]);
    let mut row = vec![csv_number(config.eps), csv_number(sigma), csv_number(split.grad_p1), csv_number(split.p2_norm)];
    row.extend(split.sobolev.iter().map(|&x| csv_number(x)));
    row.push(csv_number(split.partition_error));
    row.push(csv_number(duality));
    t.push(row)?;
    print!("{}", t.render());
    if let Some(dir) = &a.out {
        t.write(&dir.join("decompose.csv"))?;
        write_scalar(&dir.join("p_extended"), "p_extended", &extended)?;
        write_scalar(&dir.join("p1"), "p1", &split.p1)?;
        write_scalar(&dir.join("p2"), "p2", &split.p2)?;
    }
    Ok(())
}

fn read_tensor(path: &Path, d: usize) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let vals: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace)
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()?;
    if vals.len() != d * d {
        bail!("tensor file holds {} numbers, expected {}", vals.len(), d * d);
    }
    Ok(DMatrix::from_row_slice(d, d, &vals))
}

fn cmd_macro(a: MacroArgs) -> Result<()> {
    let system = MacroSystem::parse(&a.system)?;
    let grid = Grid::new(a.d, a.n, a.side)?;
    let policy = if a.project_mean { ZeroModePolicy::Project } else { ZeroModePolicy::Reject };
    let tensor = || -> Result<DMatrix<f64>> { read_tensor(a.a_file.as_deref().context("this system needs --A-file")?, a.d) };
    let wbar = || a.wbar.context("this system needs --wbar");
    let sigma_star = || a.sigma_star.context("this system needs --sigma-star");
    let vector = matches!(system, MacroSystem::Darcy | MacroSystem::StokesBrinkman | MacroSystem::Stokes);
    let src = load_source(&a.source, grid, vector)?;
    let sol: MacroSolution = match (system, &src) {
        (MacroSystem::Darcy, Src::Vector(g)) => solve_darcy(&tensor()?, g)?,
        (MacroSystem::StokesBrinkman, Src::Vector(g)) => solve_brinkman(&tensor()?, sigma_star()?, g)?,
        (MacroSystem::Stokes, Src::Vector(g)) => solve_stokes_macro(g, policy)?,
        (MacroSystem::PoissonPointwise, Src::Scalar(f)) => poisson_pointwise(wbar()?, f)?,
        (MacroSystem::LaplaceBrinkman, Src::Scalar(f)) => solve_laplace_brinkman(wbar()?, sigma_star()?, f)?,
        (MacroSystem::Poisson, Src::Scalar(f)) => solve_poisson_macro(f, policy)?,
        _ => unreachable!("source kind follows the system"),
    };
    println!("system = {}", sol.system.name());
    println!("residual = {:.3e}", sol.residual);
    println!("div residual = {:.3e}", sol.div_residual);
    if let Some(dir) = &a.out {
        if let Some(v) = &sol.v {
            write_staggered(&dir.join("v"), "v", v)?;
        }
        if let Some(p) = &sol.p {
            write_scalar(&dir.join("p"), "p", p)?;
        }
        if let Some(u) = &sol.u {
            write_scalar(&dir.join("u"), "u", u)?;
        }
    }
    Ok(())
}

fn cmd_converge(a: ConvergeArgs) -> Result<bool> {
    let mut spec = read_study(&a.spec)?;
    std::fs::create_dir_all(&a.out)?;
    if a.dump {
        spec.dump_dir = Some(a.out.join("fields"));
    }
    let report = run_study(&spec)?;
    std::fs::write(a.out.join("report.csv"), report.to_csv())?;
    let mut summary = report.summary();
    if let Some(p) = &report.pressure {
        let _ = writeln!(summary, "  {} pressure bounds: {}", if p.pass { "PASS" } else { "FAIL" }, p.detail);
    }
    if let Some(s) = &report.strong {
        let _ = writeln!(summary, "  {} strong convergence: gaps {:?}, macro defect {:.2e}", if s.pass { "PASS" } else { "FAIL" }, s.gaps, s.macro_defect);
    }
    let pass = report.pass() && report.pressure.as_ref().is_none_or(|p| p.pass) && report.strong.as_ref().is_none_or(|s| s.pass);
    let _ = writeln!(summary, "overall: {}", if pass { "PASS" } else { "FAIL" });
    std::fs::write(a.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(pass)
}
