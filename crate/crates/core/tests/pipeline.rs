//! End-to-end runs on small configurations.

use homlab::cell::{permeability, solve_cell_poisson, solve_cell_stokes, CellSpec};
use homlab::config::{read_study, KeyValues};
use homlab::converge::{run_study, ConvergenceReport, Rung, Schedule, StudySpec};
use homlab::io::{read_dump, read_scalar, read_staggered};
use homlab::lattice::{build_masks, HoleModel, PerforationConfig, Regime};
use homlab::macro_solver::solve_darcy;
use homlab::micro::{solve_perforated_poisson, solve_perforated_stokes, MicroOptions, Problem};
use homlab::pressure::{freq_split, split_scale, RestrictOptions, Restrictor};
use homlab::source::SourceSpec;

fn scratch(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("homlab-pipeline-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_study(problem: Problem) -> StudySpec {
    let rungs = [4usize, 6, 8, 12].iter().map(|&m| Rung { eps: 1.0 / m as f64, m, n: 12 }).collect();
    let mut s = StudySpec::new(problem, 2, Schedule::FixedRatio { eta: 0.5 }, rungs, SourceSpec::bump(0.3), 0.35);
    s.min_hole_span = 2.0;
    s
}

#[test]
fn planar_poisson_study_converges() {
    let rep = run_study(&small_study(Problem::Poisson)).unwrap();
    assert_eq!(rep.regime, Regime::Supercritical);
    assert!(rep.pass(), "{}", rep.summary());
    let csv = rep.to_csv();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# problem=poisson d=2"));
    assert_eq!(lines.next().unwrap(), ConvergenceReport::CSV_HEADER);
    assert_eq!(lines.count(), 4);
}

#[test]
fn planar_stokes_study_reports_pressure_and_dumps_fields() {
    let mut spec = small_study(Problem::Stokes);
    spec.pressure = true;
    let dir = scratch("stokes");
    spec.dump_dir = Some(dir.clone());
    let rep = run_study(&spec).unwrap();
    let errs = rep.rel_errors();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    let p = rep.pressure.expect("pressure record");
    assert_eq!(p.grad_p1.len(), 4);

    let (h, mask) = read_dump(&dir.join("rung3_solid")).unwrap();
    assert_eq!(h.shape, [144, 144, 1]);
    assert!(mask.iter().any(|&x| x == 1.0));
    let v = read_staggered(&dir.join("rung3_micro_v")).unwrap();
    assert_eq!(v.comps.len(), 2);
    let q = read_scalar(&dir.join("rung0_macro_p")).unwrap();
    assert!(q.is_finite());
}

#[test]
fn study_file_drives_a_run() {
    let text = "problem = poisson\nd = 2\nschedule = fixed\neta = 0.5\nm = 4, 6, 8, 12\nn = 12\nsource = bump\nmin_hole_span = 2\n";
    let path = scratch("file").join("study.cfg");
    std::fs::write(&path, text).unwrap();
    let spec = read_study(&path).unwrap();
    assert!(run_study(&spec).unwrap().pass());
}

#[test]
fn darcy_from_cell_tensor_tracks_scaled_micro_velocity() {
    // One rung by hand: cell tensor, micro solve, Darcy reference.
    let (eps, eta, m, n) = (0.125, 0.5, 8, 16);
    let cfg = PerforationConfig::new(2, eps, eta * eps, m, n).unwrap().with_min_hole_span(2.0);
    let a = permeability(&solve_cell_stokes(&CellSpec::new(2, eta, cfg.hole.clone(), n).with_min_hole_span(2.0)).unwrap())
        .unwrap()
        .tensor;
    let g = SourceSpec::bump(0.3).vector(cfg.grid().unwrap()).unwrap();
    let micro = solve_perforated_stokes(&cfg, &g, &MicroOptions::default()).unwrap();
    let s2 = cfg.sigma().unwrap().powi(-2);
    let v = micro.v.unwrap();
    let darcy = solve_darcy(&a, &g).unwrap().v.unwrap();
    // Total flux along the forcing: period oscillations average out.
    let micro_flux = v.integrals()[0] * s2;
    let macro_flux = darcy.integrals()[0];
    assert!((micro_flux - macro_flux).abs() < 0.15 * macro_flux.abs(), "{micro_flux} vs {macro_flux}");
}

#[test]
fn poisson_cell_and_micro_agree_on_constant_source() {
    let (eps, eta, m, n) = (0.25, 0.4, 4, 16);
    let cfg = PerforationConfig::new(3, eps, eta * eps, m, n).unwrap().with_min_hole_span(2.0);
    let grid = cfg.grid().unwrap();
    let one = homlab::numerics::ScalarField::from_fn(grid, |_| 1.0);
    let micro = solve_perforated_poisson(&cfg, &one, &MicroOptions::default()).unwrap();
    let cell = solve_cell_poisson(&CellSpec::new(3, eta, HoleModel::default_ball(), n).with_min_hole_span(2.0)).unwrap();
    // With f = 1 the micro solution is the tiled cell corrector times σ².
    let s2 = cfg.sigma().unwrap().powi(2);
    let mean = micro.u.unwrap().mean();
    assert!((mean - s2 * cell.wbar).abs() < 1e-6 * mean, "{mean} vs {}", s2 * cell.wbar);
}

#[test]
fn extended_pressure_splits_cleanly() {
    let cfg = PerforationConfig::new(2, 0.25, 0.1, 4, 32).unwrap().with_min_hole_span(2.0);
    let masks = build_masks(&cfg).unwrap();
    let g = SourceSpec::bump(0.3).vector(masks.grid).unwrap();
    let sol = solve_perforated_stokes(&cfg, &g, &MicroOptions::default()).unwrap();
    let r = Restrictor::new(&cfg, &masks, RestrictOptions::default().with_min_annulus_cells(4.0)).unwrap();
    let p = r.extend_pressure(sol.p.as_ref().unwrap()).unwrap();
    for (i, s) in masks.solid.iter().enumerate() {
        if !s {
            assert_eq!(p.data[i], sol.p.as_ref().unwrap().data[i]);
        }
    }
    let split = freq_split(&p, split_scale(Regime::Supercritical, cfg.sigma().unwrap())).unwrap();
    assert!(split.partition_error <= 1e-12);
}

#[test]
fn unknown_study_keys_are_rejected() {
    let kv = KeyValues::parse("problem = poisson\nd = 2\nschedule = fixed\neta = 0.5\nm = 4,6,8,12\nn = 12\ncolour = blue\n").unwrap();
    homlab::config::study_from(&kv).unwrap();
    assert!(kv.finish().is_err());
}
