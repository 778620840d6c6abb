//! Plain-text `key = value` configuration files.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Unknown keys are an error so that typos do not silently fall back to
//! defaults.
//!
//! Perforation keys: `d`, `eps`, `alpha` (with optional `prefactor`) or
//! `a_eps`, `m`, `n`, `hole.shape` (`ball` | `superellipse`), `hole.r`,
//! `hole.semi_axes`, `hole.exponent`, `hole.delta1`, `hole.delta2`, `x0`,
//! `min_hole_span`.
//!
//! Study keys add `problem`, `schedule` (`power` | `fixed` | `critical`),
//! `eta`, `sigma_star`, `side`, list-valued `m` and `n`, `source`
//! (`bump` | `dipole`), `source.radius`, `source.separation`, `k_half`,
//! `pressure`, `min_annulus_cells` and `final_tolerance`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::converge::{Rung, Schedule, StudySpec};
use crate::error::{HomError, Result};
use crate::lattice::{HoleModel, HoleShape, PerforationConfig, DEFAULT_MIN_HOLE_SPAN};
use crate::micro::Problem;
use crate::source::SourceSpec;

/// Parsed key-value pairs plus bookkeeping of which keys were consumed.
#[derive(Debug)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    used: std::cell::RefCell<BTreeSet<String>>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HomError::Parse(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let k = k.trim().to_string();
            if k.is_empty() {
                return Err(HomError::Parse(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(HomError::Parse(format!("line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { entries, used: Default::default() })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        let e = self.entries.get(key);
        if e.is_some() {
            self.used.borrow_mut().insert(key.to_string());
        }
        e
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.raw(key).map(|(_, v)| v.as_str())
    }

    fn parse_one<T: std::str::FromStr>(&self, key: &str, line: usize, v: &str) -> Result<T> {
        v.parse().map_err(|_| HomError::Parse(format!("line {line}: `{key}` has unparsable value `{v}`")))
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => self.parse_one(key, *line, v).map(Some),
        }
    }

    pub fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| HomError::Config(format!("missing required key `{key}`")))
    }

    pub fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v.split(',').map(|s| self.parse_one(key, *line, s.trim())).collect::<Result<Vec<T>>>().map(Some),
        }
    }

    pub fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(HomError::Parse(format!("line {line}: `{key}` expects true/false, got `{v}`"))),
            },
        }
    }

    /// Errors on keys nobody asked for.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(k, _)| !used.contains(*k))
            .map(|(k, (line, _))| format!("`{k}` (line {line})"))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(HomError::Config(format!("unknown keys: {}", unknown.join(", "))))
        }
    }
}

fn point(kv: &KeyValues, key: &str, d: usize) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    if let Some(v) = kv.list::<f64>(key)? {
        if v.len() != d {
            return Err(HomError::Config(format!("`{key}` needs {d} entries, got {}", v.len())));
        }
        out[..d].copy_from_slice(&v);
    }
    Ok(out)
}

/// Hole keys; absent keys fall back to the default ball.
pub fn hole_from(kv: &KeyValues, d: usize) -> Result<HoleModel> {
    let def = HoleModel::default_ball();
    let shape = kv.str("hole.shape").unwrap_or("ball").to_string();
    let delta1 = kv.get("hole.delta1")?.unwrap_or(def.delta1());
    let delta2 = kv.get("hole.delta2")?.unwrap_or(def.delta2());
    let shape = match shape.as_str() {
        "ball" => HoleShape::Ball { radius: kv.get("hole.r")?.unwrap_or(0.25) },
        "superellipse" => {
            let mut semi = point(kv, "hole.semi_axes", d)?;
            if semi[..d].iter().all(|&s| s == 0.0) {
                return Err(HomError::Config("superellipse hole needs `hole.semi_axes`".into()));
            }
            if d == 2 {
                semi[2] = semi[0].min(semi[1]);
            }
            HoleShape::Superellipse { semi_axes: semi, exponent: kv.require("hole.exponent")? }
        }
        other => return Err(HomError::Config(format!("unknown hole.shape `{other}`"))),
    };
    HoleModel::new(shape, delta1, delta2)
}

fn a_eps_from(kv: &KeyValues, eps: f64) -> Result<f64> {
    match (kv.get::<f64>("a_eps")?, kv.get::<f64>("alpha")?) {
        (Some(_), Some(_)) => Err(HomError::Ambiguous("give either `a_eps` or `alpha`, not both".into())),
        (Some(a), None) => Ok(a),
        (None, Some(alpha)) => Ok(kv.get::<f64>("prefactor")?.unwrap_or(1.0) * eps.powf(alpha)),
        (None, None) => Err(HomError::Config("missing `a_eps` or `alpha`".into())),
    }
}

/// A single perforated torus.
pub fn perforation_from(kv: &KeyValues) -> Result<PerforationConfig> {
    let d: usize = kv.require("d")?;
    let eps: f64 = kv.require("eps")?;
    let a_eps = a_eps_from(kv, eps)?;
    let cfg = PerforationConfig::new(d, eps, a_eps, kv.require("m")?, kv.require("n")?)?
        .with_hole(hole_from(kv, d)?)?
        .with_x0(point(kv, "x0", d)?)?
        .with_min_hole_span(kv.get("min_hole_span")?.unwrap_or(DEFAULT_MIN_HOLE_SPAN));
    Ok(cfg)
}

pub fn read_perforation(path: &Path) -> Result<PerforationConfig> {
    let kv = KeyValues::read(path)?;
    let cfg = perforation_from(&kv)?;
    kv.finish()?;
    Ok(cfg)
}

pub fn problem_from(name: &str) -> Result<Problem> {
    match name {
        "poisson" => Ok(Problem::Poisson),
        "stokes" => Ok(Problem::Stokes),
        _ => Err(HomError::Config(format!("unknown problem `{name}`"))),
    }
}

fn source_from(kv: &KeyValues) -> Result<SourceSpec> {
    let radius = kv.get("source.radius")?.unwrap_or(0.3);
    let s = match kv.str("source").unwrap_or("bump") {
        "bump" => SourceSpec::bump(radius),
        "dipole" => SourceSpec::dipole(radius, kv.get("source.separation")?.unwrap_or(radius)),
        other => return Err(HomError::Config(format!("unknown source `{other}`"))),
    };
    Ok(s)
}

/// A convergence ladder.
pub fn study_from(kv: &KeyValues) -> Result<StudySpec> {
    let problem = problem_from(&kv.require::<String>("problem")?)?;
    let d: usize = kv.require("d")?;
    let schedule = match kv.require::<String>("schedule")?.as_str() {
        "power" => Schedule::Power { alpha: kv.require("alpha")?, prefactor: kv.get("prefactor")?.unwrap_or(1.0) },
        "fixed" => Schedule::FixedRatio { eta: kv.require("eta")? },
        "critical" => Schedule::Critical { sigma_star: kv.require("sigma_star")? },
        other => return Err(HomError::Config(format!("unknown schedule `{other}`"))),
    };
    let side: f64 = kv.get("side")?.unwrap_or(1.0);
    let ms: Vec<usize> = kv.list("m")?.ok_or_else(|| HomError::Config("missing `m` list".into()))?;
    let ns: Vec<usize> = kv.list("n")?.ok_or_else(|| HomError::Config("missing `n` list".into()))?;
    let ns = if ns.len() == 1 { vec![ns[0]; ms.len()] } else { ns };
    if ns.len() != ms.len() {
        return Err(HomError::Config(format!("`m` has {} entries but `n` has {}", ms.len(), ns.len())));
    }
    let rungs = ms.iter().zip(&ns).map(|(&m, &n)| Rung { eps: side / m as f64, m, n }).collect();
    let mut spec = StudySpec::new(problem, d, schedule, rungs, source_from(kv)?, kv.get("k_half")?.unwrap_or(0.35 * side));
    spec.hole = hole_from(kv, d)?;
    spec.x0 = point(kv, "x0", d)?;
    if let Some(v) = kv.get("min_hole_span")? {
        spec.min_hole_span = v;
    }
    if let Some(v) = kv.flag("pressure")? {
        spec.pressure = v;
    }
    if let Some(v) = kv.get("min_annulus_cells")? {
        spec.min_annulus_cells = v;
    }
    if let Some(v) = kv.get("final_tolerance")? {
        spec.final_tolerance = v;
    }
    spec.validate()?;
    Ok(spec)
}

pub fn read_study(path: &Path) -> Result<StudySpec> {
    let kv = KeyValues::read(path)?;
    let spec = study_from(&kv)?;
    kv.finish()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perforation_file_with_alpha() {
        let kv = KeyValues::parse("# torus\nd = 3\neps = 0.25\nalpha = 2\nm = 4\nn = 16\nhole.r = 0.3\nhole.delta1=0.25\nhole.delta2 = 0.35\n").unwrap();
        let c = perforation_from(&kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(c.a_eps, 0.0625);
        assert_eq!(c.hole, HoleModel::new(HoleShape::Ball { radius: 0.3 }, 0.25, 0.35).unwrap());
    }

    #[test]
    fn both_size_keys_are_ambiguous() {
        let kv = KeyValues::parse("d=2\neps=0.5\nalpha=1.5\na_eps=0.1\nm=4\nn=8").unwrap();
        assert!(matches!(perforation_from(&kv), Err(HomError::Ambiguous(_))));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let kv = KeyValues::parse("d=2\neps=0.5\na_eps=0.1\nm=4\nn=16\nmin_hole_span=1\nholes=3").unwrap();
        perforation_from(&kv).unwrap();
        assert!(matches!(kv.finish(), Err(HomError::Config(_))));
        assert!(KeyValues::parse("d=2\nd=3").is_err());
        assert!(KeyValues::parse("no equals sign").is_err());
    }

    #[test]
    fn superellipse_and_offset() {
        let text = "d=2\neps=0.5\na_eps=0.5\nm=4\nn=32\nhole.shape=superellipse\nhole.semi_axes=0.3,0.2\nhole.exponent=4\nhole.delta1=0.15\nhole.delta2=0.45\nx0=0.05,0\n";
        let kv = KeyValues::parse(text).unwrap();
        let c = perforation_from(&kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(c.x0, [0.05, 0.0, 0.0]);
        assert!(matches!(c.hole.shape(), HoleShape::Superellipse { .. }));
    }

    #[test]
    fn study_file() {
        let text = "problem = stokes\nd = 3\nschedule = critical\nsigma_star = 0.25\nm = 4, 6, 8, 10\nn = 16\nsource = bump\nmin_hole_span = 2\npressure = true\n";
        let kv = KeyValues::parse(text).unwrap();
        let s = study_from(&kv).unwrap();
        kv.finish().unwrap();
        assert_eq!(s.rungs.len(), 4);
        assert_eq!(s.rungs[3], Rung { eps: 0.1, m: 10, n: 16 });
        assert!(s.pressure);
    }

    proptest::proptest! {
        #[test]
        fn written_perforation_reads_back(d in 2usize..=3, half_m in 2usize..=8, n in 8usize..=64, eps in 0.01f64..1.0, eta in 0.01f64..1.0, r in 0.05f64..0.4) {
            let (m, a) = (2 * half_m, eta * eps);
            let text = format!("d = {d}\neps = {eps:?}\na_eps = {a:?}\nm = {m}\nn = {n}\nhole.r = {r:?}\nhole.delta1 = {:?}\nhole.delta2 = {:?}\nmin_hole_span = 1\n", 0.8 * r, 1.2 * r);
            let kv = KeyValues::parse(&text).unwrap();
            let c = perforation_from(&kv).unwrap();
            kv.finish().unwrap();
            proptest::prop_assert_eq!((c.d, c.torus_cells, c.cells_per_eps), (d, m, n));
            proptest::prop_assert_eq!((c.eps, c.a_eps), (eps, a));
            proptest::prop_assert_eq!(c.hole, HoleModel::new(HoleShape::Ball { radius: r }, 0.8 * r, 1.2 * r).unwrap());
        }
    }
}
