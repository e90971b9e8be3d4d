//! `key = value` configuration with `[mesh]`, `[noise]`, `[problem]`,
//! `[study]` and `[krylov]` sections. Parsing is fail-closed: unknown
//! sections or keys, duplicates and malformed values are errors naming
//! the offending key.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use sexpde::error::{Error, Result};
use sexpde::experiments::{BenchmarkSpec, Functional, Initial, Ladder, Preset, Reference, WeakErrorConfig};
use sexpde::integrator::RunConfig;
use sexpde::matfunc::KrylovConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Time,
    Space,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceChoice {
    Paired,
    ClosedForm,
    FineMc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialChoice {
    /// `smooth` for Φ₁ studies, `zero` otherwise.
    Auto,
    Zero,
    Smooth,
    Modes(Vec<((usize, usize), f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSection {
    pub cells: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSection {
    pub beta: f64,
    pub delta: f64,
    pub q00: f64,
    pub n_max: Option<usize>,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSection {
    pub preset: Preset,
    pub diffusion: f64,
    pub reaction: f64,
    pub initial: InitialChoice,
    pub final_time: f64,
    pub dt: f64,
    pub realization: u64,
    /// Snapshot every k steps; 0 keeps the final state only.
    pub record_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySection {
    pub seed: Option<u64>,
    pub functional: Functional,
    pub realizations: usize,
    /// `None`: paired for linear problems, fine-mc otherwise.
    pub reference: Option<ReferenceChoice>,
    pub reference_cells: Option<usize>,
    pub reference_dt: Option<f64>,
    pub reference_realizations: Option<usize>,
    pub time_t: f64,
    pub time_cells: usize,
    pub dts: Vec<f64>,
    pub space_t: f64,
    pub space_dt: f64,
    pub cells: Vec<usize>,
    pub eps_tail: f64,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub mesh: MeshSection,
    pub noise: NoiseSection,
    pub problem: ProblemSection,
    pub study: StudySection,
    pub krylov: KrylovConfig,
}

impl Default for Config {
    fn default() -> Self {
        let spec = BenchmarkSpec::default();
        Self {
            mesh: MeshSection {
                cells: 32,
                lx: spec.lx,
                ly: spec.ly,
            },
            noise: NoiseSection {
                beta: spec.beta,
                delta: spec.delta,
                q00: spec.q00,
                n_max: None,
                enabled: true,
            },
            problem: ProblemSection {
                preset: Preset::Linear2d,
                diffusion: spec.diffusion,
                reaction: spec.reaction,
                initial: InitialChoice::Auto,
                final_time: 1.0,
                dt: 1.0 / 64.0,
                realization: 0,
                record_every: 0,
            },
            study: StudySection {
                seed: None,
                functional: Functional::Phi2,
                realizations: 200,
                reference: None,
                reference_cells: None,
                reference_dt: None,
                reference_realizations: None,
                time_t: 1.0,
                time_cells: 32,
                dts: vec![0.25, 0.125, 0.0625, 0.03125, 0.015625],
                space_t: 0.1,
                space_dt: 1.0 / 2000.0,
                cells: vec![4, 8, 16, 32],
                eps_tail: 0.1,
                threads: None,
            },
            krylov: KrylovConfig::default(),
        }
    }
}

pub fn parse_preset(s: &str) -> Result<Preset> {
    match s {
        "linear2d" => Ok(Preset::Linear2d),
        "multiplicative-demo" => Ok(Preset::MultiplicativeDemo),
        _ => Err(Error::config(
            "problem.preset",
            format!("unknown preset `{s}` (linear2d | multiplicative-demo)"),
        )),
    }
}

/// Number, allowing `p/q` fractions.
fn number(key: &str, v: &str) -> Result<f64> {
    let bad = || Error::config(key, format!("expected a number, got `{v}`"));
    let x = match v.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            p / q
        }
        None => v.parse().map_err(|_| bad())?,
    };
    if x.is_finite() {
        Ok(x)
    } else {
        Err(bad())
    }
}

fn integer<I: FromStr>(key: &str, v: &str) -> Result<I> {
    v.parse()
        .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{v}`")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
    }
}

fn list<X>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<X>) -> Result<Vec<X>> {
    v.split(',').map(|s| item(key, s.trim())).collect()
}

/// `i,j:value; i,j:value`
fn modes(key: &str, v: &str) -> Result<Vec<((usize, usize), f64)>> {
    v.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|entry| {
            let bad = || Error::config(key, format!("expected `i,j:value`, got `{}`", entry.trim()));
            let (ij, val) = entry.split_once(':').ok_or_else(bad)?;
            let (i, j) = ij.split_once(',').ok_or_else(bad)?;
            Ok((
                (integer(key, i.trim())?, integer(key, j.trim())?),
                number(key, val.trim())?,
            ))
        })
        .collect()
}

fn positive(key: &str, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::config(key, format!("must be positive, got {x}")))
    }
}

fn steps(t_key: &str, t: f64, dt_key: &str, dt: f64) -> Result<()> {
    RunConfig::from_dt(t, dt)
        .map(|_| ())
        .map_err(|_| Error::config(dt_key, format!("{t_key}/{dt_key} = {} is not an integer number of steps", t / dt)))
}

impl Config {
    /// Parses `text` on top of the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(line, format!("line {}: malformed section header", lineno + 1)))?
                    .trim();
                if !["mesh", "noise", "problem", "study", "krylov"].contains(&name) {
                    return Err(Error::config(name, "unknown section"));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            let sec = section
                .as_deref()
                .ok_or_else(|| Error::config(k, "key outside of any section"))?;
            let key = format!("{sec}.{k}");
            if !seen.insert(key.clone()) {
                return Err(Error::config(key, "duplicate key"));
            }
            cfg.set(&key, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let k = key;
        match key {
            "mesh.cells" => self.mesh.cells = integer(k, v)?,
            "mesh.L1" => self.mesh.lx = number(k, v)?,
            "mesh.L2" => self.mesh.ly = number(k, v)?,
            "noise.beta" => self.noise.beta = number(k, v)?,
            "noise.delta" => self.noise.delta = number(k, v)?,
            "noise.q00" => self.noise.q00 = number(k, v)?,
            "noise.n_max" => {
                self.noise.n_max = if v == "auto" { None } else { Some(integer(k, v)?) }
            }
            "noise.enabled" => self.noise.enabled = boolean(k, v)?,
            "problem.preset" => self.problem.preset = parse_preset(v)?,
            "problem.D" => self.problem.diffusion = number(k, v)?,
            "problem.reaction" => self.problem.reaction = number(k, v)?,
            "problem.initial" => {
                self.problem.initial = match v {
                    "auto" => InitialChoice::Auto,
                    "zero" => InitialChoice::Zero,
                    "smooth" => InitialChoice::Smooth,
                    _ => match v.strip_prefix("modes:") {
                        Some(m) => InitialChoice::Modes(modes(k, m)?),
                        None => {
                            return Err(Error::config(
                                k,
                                format!("expected auto | zero | smooth | modes:i,j:v;..., got `{v}`"),
                            ))
                        }
                    },
                }
            }
            "problem.T" => self.problem.final_time = number(k, v)?,
            "problem.dt" => self.problem.dt = number(k, v)?,
            "problem.realization" => self.problem.realization = integer(k, v)?,
            "problem.record_every" => self.problem.record_every = integer(k, v)?,
            "study.seed" => self.study.seed = Some(integer(k, v)?),
            "study.functional" => {
                self.study.functional = match v {
                    "Phi1" | "phi1" => Functional::Phi1,
                    "Phi2" | "phi2" => Functional::Phi2,
                    _ => return Err(Error::config(k, format!("expected Phi1 or Phi2, got `{v}`"))),
                }
            }
            "study.realizations" => self.study.realizations = integer(k, v)?,
            "study.reference" => {
                self.study.reference = Some(match v {
                    "paired" => ReferenceChoice::Paired,
                    "closed-form" => ReferenceChoice::ClosedForm,
                    "fine-mc" => ReferenceChoice::FineMc,
                    _ => {
                        return Err(Error::config(
                            k,
                            format!("expected paired | closed-form | fine-mc, got `{v}`"),
                        ))
                    }
                })
            }
            "study.reference_cells" => self.study.reference_cells = Some(integer(k, v)?),
            "study.reference_dt" => self.study.reference_dt = Some(number(k, v)?),
            "study.reference_realizations" => self.study.reference_realizations = Some(integer(k, v)?),
            "study.time_T" => self.study.time_t = number(k, v)?,
            "study.time_cells" => self.study.time_cells = integer(k, v)?,
            "study.dts" => self.study.dts = list(k, v, number)?,
            "study.space_T" => self.study.space_t = number(k, v)?,
            "study.space_dt" => self.study.space_dt = number(k, v)?,
            "study.cells" => self.study.cells = list(k, v, integer)?,
            "study.eps_tail" => self.study.eps_tail = number(k, v)?,
            "study.threads" => self.study.threads = Some(integer(k, v)?),
            "krylov.max_subspace" => self.krylov.max_subspace = integer(k, v)?,
            "krylov.tol" => self.krylov.tol = number(k, v)?,
            "krylov.substeps" => self.krylov.substeps = integer(k, v)?,
            "krylov.max_substeps" => self.krylov.max_substeps = integer(k, v)?,
            "krylov.dense_limit" => self.krylov.dense_limit = integer(k, v)?,
            "krylov.modal_limit" => self.krylov.modal_limit = integer(k, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh.cells == 0 {
            return Err(Error::config("mesh.cells", "must be at least 1"));
        }
        positive("mesh.L1", self.mesh.lx)?;
        positive("mesh.L2", self.mesh.ly)?;
        if !(self.noise.beta > 0.0) {
            return Err(Error::config("noise.beta", format!("must be positive, got {}", self.noise.beta)));
        }
        if !(self.noise.delta > 0.0) {
            return Err(Error::config("noise.delta", format!("must be positive, got {}", self.noise.delta)));
        }
        if !(self.noise.beta + self.noise.delta > 1.0) {
            return Err(Error::config(
                "noise.beta",
                format!(
                    "Q must be trace class: beta + delta = {} must exceed 1",
                    self.noise.beta + self.noise.delta
                ),
            ));
        }
        if self.noise.q00 < 0.0 {
            return Err(Error::config("noise.q00", "must be non-negative"));
        }
        if self.noise.n_max == Some(0) {
            return Err(Error::config("noise.n_max", "must be at least 1"));
        }
        if self.problem.diffusion < 0.0 {
            return Err(Error::config("problem.D", "must be non-negative"));
        }
        positive("problem.T", self.problem.final_time)?;
        positive("problem.dt", self.problem.dt)?;
        steps("problem.T", self.problem.final_time, "problem.dt", self.problem.dt)?;
        if self.study.realizations < 2 {
            return Err(Error::config("study.realizations", "need at least 2"));
        }
        positive("study.time_T", self.study.time_t)?;
        positive("study.space_T", self.study.space_t)?;
        positive("study.space_dt", self.study.space_dt)?;
        positive("study.eps_tail", self.study.eps_tail)?;
        for &dt in &self.study.dts {
            positive("study.dts", dt)?;
            steps("study.time_T", self.study.time_t, "study.dts", dt)?;
        }
        steps("study.space_T", self.study.space_t, "study.space_dt", self.study.space_dt)?;
        Ladder::Time {
            cells: self.study.time_cells,
            dts: self.study.dts.clone(),
        }
        .validate()
        .map_err(|e| rekey(e, "study.dts"))?;
        if self.study.cells.contains(&0) {
            return Err(Error::config("study.cells", "cell counts must be positive"));
        }
        Ladder::Space {
            dt: self.study.space_dt,
            cells: self.study.cells.clone(),
        }
        .validate()
        .map_err(|e| rekey(e, "study.cells"))?;
        if self.study.threads == Some(0) {
            return Err(Error::config("study.threads", "must be at least 1"));
        }
        if self.study.reference == Some(ReferenceChoice::ClosedForm) || self.study.reference == Some(ReferenceChoice::Paired) {
            if self.problem.preset != Preset::Linear2d {
                return Err(Error::config(
                    "study.reference",
                    "closed forms exist only for the linear2d preset; use fine-mc",
                ));
            }
        }
        if let Some(dt) = self.study.reference_dt {
            positive("study.reference_dt", dt)?;
        }
        self.krylov.validate()
    }

    /// Seed from the flag, else from `study.seed`. There is no fallback.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        flag.or(self.study.seed).ok_or_else(|| {
            Error::config("study.seed", "a seed is mandatory: set study.seed or pass --seed")
        })
    }

    pub fn spec(&self, functional: Functional) -> BenchmarkSpec {
        let initial = match &self.problem.initial {
            InitialChoice::Auto if functional == Functional::Phi1 => Initial::Smooth,
            InitialChoice::Auto | InitialChoice::Zero => Initial::Zero,
            InitialChoice::Smooth => Initial::Smooth,
            InitialChoice::Modes(m) => Initial::Modes(m.clone()),
        };
        BenchmarkSpec {
            preset: self.problem.preset,
            lx: self.mesh.lx,
            ly: self.mesh.ly,
            diffusion: self.problem.diffusion,
            reaction: self.problem.reaction,
            beta: self.noise.beta,
            delta: self.noise.delta,
            q00: self.noise.q00,
            n_max: self.noise.n_max,
            noise: self.noise.enabled,
            initial,
        }
    }

    /// Study configuration for `kind`, with the seed and thread count resolved.
    pub fn study(&self, kind: StudyKind, seed: u64, threads: Option<usize>) -> Result<WeakErrorConfig> {
        let s = &self.study;
        let (ladder, final_time) = match kind {
            StudyKind::Time => (
                Ladder::Time {
                    cells: s.time_cells,
                    dts: s.dts.clone(),
                },
                s.time_t,
            ),
            StudyKind::Space | StudyKind::Strong => (
                Ladder::Space {
                    dt: s.space_dt,
                    cells: s.cells.clone(),
                },
                s.space_t,
            ),
        };
        let linear = self.problem.preset == Preset::Linear2d;
        let choice = s
            .reference
            .unwrap_or(if linear { ReferenceChoice::Paired } else { ReferenceChoice::FineMc });
        let reference = match choice {
            ReferenceChoice::Paired => Reference::Paired,
            ReferenceChoice::ClosedForm => Reference::ClosedForm,
            ReferenceChoice::FineMc => {
                let res = ladder.resolutions();
                let finest_cells = res.iter().map(|r| r.cells).max().unwrap_or(1);
                let finest_dt = res.iter().map(|r| r.dt).fold(f64::INFINITY, f64::min);
                let (cells, dt) = match kind {
                    StudyKind::Time => (finest_cells, finest_dt / 4.0),
                    _ => (2 * finest_cells, finest_dt),
                };
                Reference::FineMc {
                    cells: s.reference_cells.unwrap_or(cells),
                    dt: s.reference_dt.unwrap_or(dt),
                    realizations: s.reference_realizations.unwrap_or(s.realizations),
                }
            }
        };
        let cfg = WeakErrorConfig {
            spec: self.spec(s.functional),
            functional: s.functional,
            realizations: s.realizations,
            reference,
            ladder,
            final_time,
            seed,
            threads: threads.or(s.threads),
            krylov: self.krylov,
            eps_tail: s.eps_tail,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The effective configuration in the input format; parsing it back
    /// yields the same configuration.
    pub fn echo(&self) -> String {
        fn opt<X: ToString>(x: &Option<X>, none: &str) -> Option<String> {
            match x {
                Some(v) => Some(v.to_string()),
                None if none.is_empty() => None,
                None => Some(none.to_string()),
            }
        }
        let join = |xs: Vec<String>| xs.join(", ");
        let mut o = String::new();
        let m = &self.mesh;
        let _ = writeln!(o, "[mesh]\ncells = {}\nL1 = {}\nL2 = {}", m.cells, m.lx, m.ly);
        let n = &self.noise;
        let _ = writeln!(
            o,
            "\n[noise]\nbeta = {}\ndelta = {}\nq00 = {}\nn_max = {}\nenabled = {}",
            n.beta,
            n.delta,
            n.q00,
            opt(&n.n_max, "auto").unwrap_or_default(),
            n.enabled
        );
        let p = &self.problem;
        let initial = match &p.initial {
            InitialChoice::Auto => "auto".to_string(),
            InitialChoice::Zero => "zero".to_string(),
            InitialChoice::Smooth => "smooth".to_string(),
            InitialChoice::Modes(m) => format!(
                "modes:{}",
                m.iter()
                    .map(|((i, j), v)| format!("{i},{j}:{v}"))
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        };
        let _ = writeln!(
            o,
            "\n[problem]\npreset = {}\nD = {}\nreaction = {}\ninitial = {}\nT = {}\ndt = {}\nrealization = {}\nrecord_every = {}",
            p.preset.name(),
            p.diffusion,
            p.reaction,
            initial,
            p.final_time,
            p.dt,
            p.realization,
            p.record_every
        );
        let s = &self.study;
        let _ = writeln!(o, "\n[study]");
        if let Some(seed) = s.seed {
            let _ = writeln!(o, "seed = {seed}");
        }
        let _ = writeln!(o, "functional = {}\nrealizations = {}", s.functional.name(), s.realizations);
        if let Some(r) = s.reference {
            let name = match r {
                ReferenceChoice::Paired => "paired",
                ReferenceChoice::ClosedForm => "closed-form",
                ReferenceChoice::FineMc => "fine-mc",
            };
            let _ = writeln!(o, "reference = {name}");
        }
        for (k, v) in [
            ("reference_cells", opt(&s.reference_cells, "")),
            ("reference_dt", opt(&s.reference_dt, "")),
            ("reference_realizations", opt(&s.reference_realizations, "")),
            ("threads", opt(&s.threads, "")),
        ] {
            if let Some(v) = v {
                let _ = writeln!(o, "{k} = {v}");
            }
        }
        let _ = writeln!(
            o,
            "time_T = {}\ntime_cells = {}\ndts = {}\nspace_T = {}\nspace_dt = {}\ncells = {}\neps_tail = {}",
            s.time_t,
            s.time_cells,
            join(s.dts.iter().map(|x| x.to_string()).collect()),
            s.space_t,
            s.space_dt,
            join(s.cells.iter().map(|x| x.to_string()).collect()),
            s.eps_tail
        );
        let k = &self.krylov;
        let _ = writeln!(
            o,
            "\n[krylov]\nmax_subspace = {}\ntol = {}\nsubsteps = {}\nmax_substeps = {}\ndense_limit = {}\nmodal_limit = {}",
            k.max_subspace, k.tol, k.substeps, k.max_substeps, k.dense_limit, k.modal_limit
        );
        o
    }
}

fn rekey(e: Error, key: &str) -> Error {
    match e {
        Error::Config { msg, .. } => Error::config(key, msg),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(r: Result<Config>) -> String {
        match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_text_gives_the_benchmark() {
        let c = Config::parse("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.problem.diffusion, 0.1);
        assert_eq!(c.noise.beta, 1.0);
        assert_eq!(c.noise.delta, 0.001);
        assert_eq!(c.problem.preset, Preset::Linear2d);
    }

    #[test]
    fn rejects_non_trace_class_noise() {
        assert_eq!(key_of(Config::parse("[noise]\nbeta = 0\n")), "noise.beta");
        assert_eq!(key_of(Config::parse("[noise]\nbeta = 0.5\ndelta = 0.2\n")), "noise.beta");
    }

    #[test]
    fn rejects_non_integral_step_count() {
        assert_eq!(key_of(Config::parse("[problem]\nT = 1\ndt = 0.3\n")), "problem.dt");
        assert_eq!(key_of(Config::parse("[study]\ndts = 0.5, 0.3\n")), "study.dts");
        assert!(Config::parse("[problem]\nT = 1\ndt = 1/64\n").is_ok());
    }

    #[test]
    fn fail_closed_on_unknown_or_duplicate_keys() {
        assert_eq!(key_of(Config::parse("[mesh]\ncels = 4\n")), "mesh.cels");
        assert_eq!(key_of(Config::parse("[meshes]\n")), "meshes");
        assert_eq!(key_of(Config::parse("cells = 4\n")), "cells");
        assert_eq!(key_of(Config::parse("[mesh]\ncells = 4\ncells = 8\n")), "mesh.cells");
        assert_eq!(key_of(Config::parse("[mesh]\ncells = four\n")), "mesh.cells");
        assert_eq!(key_of(Config::parse("[noise]\nenabled = yes\n")), "noise.enabled");
        assert_eq!(key_of(Config::parse("[study]\ncells = 4, 16, 8\n")), "study.cells");
    }

    #[test]
    fn seed_is_mandatory() {
        let c = Config::parse("").unwrap();
        assert_eq!(key_of(c.seed(None).map(|_| c.clone())), "study.seed");
        assert_eq!(c.seed(Some(5)).unwrap(), 5);
        let c = Config::parse("[study]\nseed = 7\n").unwrap();
        assert_eq!(c.seed(None).unwrap(), 7);
        assert_eq!(c.seed(Some(5)).unwrap(), 5);
    }

    #[test]
    fn echo_round_trips() {
        let text = "[mesh]\ncells = 8\n[noise]\nn_max = 5\n[problem]\npreset = multiplicative-demo\ninitial = modes:0,0:1.5;1,2:-0.25\n\
                    [study]\nseed = 3\nreference = fine-mc\nreference_dt = 1/128\nthreads = 2\ndts = 1/2, 1/4, 1/8, 1/16\n\
                    [krylov]\ntol = 1e-10\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(Config::parse(&c.echo()).unwrap(), c);
        let d = Config::default();
        assert_eq!(Config::parse(&d.echo()).unwrap(), d);
    }

    #[test]
    fn study_defaults_follow_the_preset() {
        let c = Config::parse("[study]\nfunctional = Phi1\n").unwrap();
        let w = c.study(StudyKind::Time, 1, None).unwrap();
        assert_eq!(w.reference, Reference::Paired);
        assert_eq!(w.spec.initial, Initial::Smooth);
        assert_eq!(w.final_time, 1.0);
        let w = c.study(StudyKind::Space, 1, Some(2)).unwrap();
        assert_eq!(w.final_time, 0.1);
        assert_eq!(w.threads, Some(2));

        let c = Config::parse("[problem]\npreset = multiplicative-demo\n").unwrap();
        let w = c.study(StudyKind::Time, 1, None).unwrap();
        assert_eq!(
            w.reference,
            Reference::FineMc {
                cells: 32,
                dt: 1.0 / 256.0,
                realizations: 200
            }
        );
        assert_eq!(
            key_of(Config::parse("[problem]\npreset = multiplicative-demo\n[study]\nreference = paired\n")),
            "study.reference"
        );
    }
}
