//! Line-based `key = value` pipeline configuration.
//!
//! Keys are dotted (`grid.n_cells`), `#` starts a comment, blank lines are
//! ignored. Every key is optional; omitted keys take defaults that depend on
//! `problem`. Unknown keys, malformed values and out-of-range values are
//! rejected with the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use ddfem_core::assembly::{CouplingConfig, Formulation};
use ddfem_core::basis::Truncation;
use ddfem_core::eval::{PoissonTest, ProblemSpec, StudyConfig};
use ddfem_core::fom::BurgersParams;
use ddfem_core::sampler::{child_rng, sample_poisson_source};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },

    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: key {key:?} already set on line {first}")]
    Duplicate {
        line: usize,
        key: String,
        first: usize,
    },

    #[error("line {line}: {key}: expected {expected}, got {value:?}")]
    Type {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },

    #[error("line {line}: {key}: {message}")]
    Range {
        line: usize,
        key: String,
        message: String,
    },
}

impl ConfigError {
    /// Line of the offending entry; 0 when the problem involves a default.
    pub fn line(&self) -> usize {
        match self {
            ConfigError::Syntax { line, .. }
            | ConfigError::UnknownKey { line, .. }
            | ConfigError::Duplicate { line, .. }
            | ConfigError::Type { line, .. }
            | ConfigError::Range { line, .. } => *line,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    Poisson,
    Burgers,
}

impl Problem {
    pub fn as_str(self) -> &'static str {
        match self {
            Problem::Poisson => "poisson",
            Problem::Burgers => "burgers",
        }
    }
}

impl FromStr for Problem {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "poisson" => Ok(Problem::Poisson),
            "burgers" => Ok(Problem::Burgers),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestSource {
    Spiral,
    Sinusoidal,
}

impl TestSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TestSource::Spiral => "spiral",
            TestSource::Sinusoidal => "sinusoidal",
        }
    }
}

impl FromStr for TestSource {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "spiral" => Ok(TestSource::Spiral),
            "sinusoidal" => Ok(TestSource::Sinusoidal),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    DirichletZero,
    Periodic,
}

impl Bc {
    pub fn as_str(self) -> &'static str {
        match self {
            Bc::DirichletZero => "dirichlet_zero",
            Bc::Periodic => "periodic",
        }
    }
}

impl FromStr for Bc {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "dirichlet_zero" => Ok(Bc::DirichletZero),
            "periodic" => Ok(Bc::Periodic),
            _ => Err(()),
        }
    }
}

/// Energy threshold or `full` (no truncation).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epsilon {
    Energy(f64),
    Full,
}

impl Epsilon {
    fn text(self) -> String {
        match self {
            Epsilon::Energy(e) => e.to_string(),
            Epsilon::Full => "full".into(),
        }
    }

    pub fn truncation(self) -> Truncation<f64> {
        match self {
            Epsilon::Energy(e) => Truncation::Energy(e),
            Epsilon::Full => Truncation::Full,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub n_runs: usize,
    pub k_max: usize,
    pub nu: f64,
    pub dt: f64,
    pub t_final: f64,
    pub save_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisConfig {
    pub epsilon: Epsilon,
    /// Modes per block; 0 means use `epsilon`.
    pub fixed_r: usize,
    pub port_split: bool,
}

impl BasisConfig {
    pub fn truncation(&self) -> Truncation<f64> {
        if self.fixed_r > 0 {
            Truncation::Fixed(self.fixed_r)
        } else {
            self.epsilon.truncation()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayoutConfig {
    pub rows: usize,
    pub cols: usize,
    pub bc: Bc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestConfig {
    pub source: TestSource,
    pub omega: f64,
    pub gamma: f64,
    /// Seed of the sinusoidal test source or the Burgers test initial state.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub residual_tol: f64,
    /// Further layouts evaluated by `solve`, besides `layout.rows × layout.cols`.
    pub extra_layouts: Vec<(usize, usize)>,
    pub parallel: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub epsilons: Vec<Epsilon>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: String,
    pub dump_fields: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub problem: Problem,
    /// Worker threads; 0 picks the number of cores.
    pub threads: usize,
    pub n_cells: usize,
    pub train: TrainConfig,
    pub basis: BasisConfig,
    pub layout: LayoutConfig,
    pub coupling: CouplingConfig<f64>,
    pub test: TestConfig,
    pub solve: SolveConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "problem",
    "threads",
    "grid.n_cells",
    "train.seed",
    "train.n_samples",
    "train.n_runs",
    "train.k_max",
    "train.nu",
    "train.dt",
    "train.t_final",
    "train.save_every",
    "basis.epsilon",
    "basis.fixed_r",
    "basis.port_split",
    "layout.rows",
    "layout.cols",
    "layout.bc",
    "coupling.formulation",
    "coupling.eta",
    "coupling.constraint_tol",
    "test.source",
    "test.omega",
    "test.gamma",
    "test.seed",
    "solve.residual_tol",
    "solve.extra_layouts",
    "solve.parallel",
    "sweep.epsilons",
    "output.dir",
    "output.dump_fields",
];

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn line(&self, key: &str) -> usize {
        self.0.get(key).map_or(0, |e| e.line)
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.0.get(key)
    }

    fn get<V>(
        &self,
        key: &str,
        default: V,
        expected: &'static str,
        parse: impl Fn(&str) -> Option<V>,
    ) -> Result<V, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(e) => parse(&e.value).ok_or_else(|| ConfigError::Type {
                line: e.line,
                key: key.into(),
                expected,
                value: e.value.clone(),
            }),
        }
    }

    fn parsed<V: FromStr>(
        &self,
        key: &str,
        default: V,
        expected: &'static str,
    ) -> Result<V, ConfigError> {
        self.get(key, default, expected, |s| s.parse().ok())
    }

    fn range(&self, key: &str, ok: bool, message: impl Into<String>) -> Result<(), ConfigError> {
        if ok {
            Ok(())
        } else {
            Err(ConfigError::Range {
                line: self.line(key),
                key: key.into(),
                message: message.into(),
            })
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn parse_epsilon(s: &str) -> Option<Epsilon> {
    if s == "full" {
        Some(Epsilon::Full)
    } else {
        s.parse().ok().map(Epsilon::Energy)
    }
}

fn parse_list<V>(s: &str, item: impl Fn(&str) -> Option<V>) -> Option<Vec<V>> {
    if s.trim().is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|p| item(p.trim())).collect()
}

/// `MxN`, e.g. `4x4`.
pub fn parse_layout(s: &str) -> Option<(usize, usize)> {
    let (m, n) = s.split_once('x')?;
    Some((m.trim().parse().ok()?, n.trim().parse().ok()?))
}

fn epsilon_ok(e: Epsilon) -> bool {
    match e {
        Epsilon::Energy(x) => x > 0.0 && x <= 1.0,
        Epsilon::Full => true,
    }
}

fn split_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut map: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line,
                text: raw.trim().into(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                text: raw.trim().into(),
            });
        }
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        if let Some(first) = map.get(key) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.into(),
                first: first.line,
            });
        }
        map.insert(
            key.into(),
            Entry {
                line,
                value: value.trim().into(),
            },
        );
    }
    Ok(Entries(map))
}

/// Parses and validates a configuration, filling defaults.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let e = split_entries(text)?;
    let problem: Problem = e.get("problem", Problem::Poisson, "poisson | burgers", |s| {
        s.parse().ok()
    })?;
    let poisson = problem == Problem::Poisson;

    let threads = e.parsed("threads", 0usize, "a non-negative integer")?;
    let n_cells = e.parsed(
        "grid.n_cells",
        if poisson { 16usize } else { 8 },
        "an integer",
    )?;
    e.range(
        "grid.n_cells",
        (2..=512).contains(&n_cells),
        "must lie in [2, 512]",
    )?;

    let train = TrainConfig {
        seed: e.parsed("train.seed", 42u64, "a non-negative integer")?,
        n_samples: e.parsed("train.n_samples", 500usize, "an integer")?,
        n_runs: e.parsed("train.n_runs", 200usize, "an integer")?,
        k_max: e.parsed("train.k_max", 4usize, "an integer")?,
        nu: e.parsed("train.nu", 1e-3, "a number")?,
        dt: e.parsed("train.dt", 0.01, "a number")?,
        t_final: e.parsed("train.t_final", 0.5, "a number")?,
        save_every: e.parsed("train.save_every", 10usize, "an integer")?,
    };
    e.range(
        "train.n_samples",
        train.n_samples >= 1,
        "must be at least 1",
    )?;
    e.range("train.n_runs", train.n_runs >= 1, "must be at least 1")?;
    e.range("train.k_max", train.k_max >= 1, "must be at least 1")?;
    e.range(
        "train.nu",
        train.nu > 0.0 && train.nu.is_finite(),
        "must be positive",
    )?;
    e.range(
        "train.t_final",
        train.t_final > 0.0 && train.t_final.is_finite(),
        "must be positive",
    )?;
    e.range(
        "train.dt",
        train.dt > 0.0 && train.dt <= train.t_final,
        "must lie in (0, train.t_final]",
    )?;
    e.range(
        "train.save_every",
        train.save_every >= 1,
        "must be at least 1",
    )?;

    let basis = BasisConfig {
        epsilon: e.get(
            "basis.epsilon",
            Epsilon::Energy(0.9999),
            "a number in (0, 1] or `full`",
            parse_epsilon,
        )?,
        fixed_r: e.parsed("basis.fixed_r", 0usize, "a non-negative integer")?,
        port_split: e.get("basis.port_split", true, "true | false", parse_bool)?,
    };
    e.range(
        "basis.epsilon",
        epsilon_ok(basis.epsilon),
        "must lie in (0, 1]",
    )?;

    let default_bc = if poisson {
        Bc::DirichletZero
    } else {
        Bc::Periodic
    };
    let default_extent = if poisson { 8usize } else { 4 };
    let layout = LayoutConfig {
        rows: e.parsed("layout.rows", default_extent, "an integer")?,
        cols: e.parsed("layout.cols", default_extent, "an integer")?,
        bc: e.get("layout.bc", default_bc, "dirichlet_zero | periodic", |s| {
            s.parse().ok()
        })?,
    };
    e.range("layout.rows", layout.rows >= 1, "must be at least 1")?;
    e.range("layout.cols", layout.cols >= 1, "must be at least 1")?;
    e.range(
        "layout.bc",
        layout.bc == default_bc,
        format!("{} requires {}", problem.as_str(), default_bc.as_str()),
    )?;

    let default_form = if poisson {
        Formulation::StrongCondensation
    } else {
        Formulation::ConstrainedResidual
    };
    let coupling = CouplingConfig {
        formulation: e.get(
            "coupling.formulation",
            default_form,
            "strong_condensation | dg_penalty | constrained_residual",
            |s| s.parse().ok(),
        )?,
        eta: e.parsed(
            "coupling.eta",
            ddfem_core::assembly::DEFAULT_ETA,
            "a number",
        )?,
        constraint_tol: e.parsed(
            "coupling.constraint_tol",
            ddfem_core::assembly::DEFAULT_CONSTRAINT_TOL,
            "a number",
        )?,
    };
    e.range(
        "coupling.eta",
        coupling.eta > 0.0 && coupling.eta.is_finite(),
        "must be positive",
    )?;
    e.range(
        "coupling.constraint_tol",
        coupling.constraint_tol > 0.0 && coupling.constraint_tol < 1.0,
        "must lie in (0, 1)",
    )?;
    e.range(
        "coupling.formulation",
        poisson || coupling.formulation == Formulation::ConstrainedResidual,
        "burgers supports constrained_residual only",
    )?;
    e.range(
        "coupling.formulation",
        coupling.formulation != Formulation::StrongCondensation || basis.port_split,
        "strong_condensation requires basis.port_split = true",
    )?;

    let test = TestConfig {
        source: e.get(
            "test.source",
            TestSource::Spiral,
            "spiral | sinusoidal",
            |s| s.parse().ok(),
        )?,
        omega: e.parsed("test.omega", 0.45, "a number")?,
        gamma: e.parsed("test.gamma", 1.0, "a number")?,
        seed: e.parsed("test.seed", 1000u64, "a non-negative integer")?,
    };
    e.range("test.omega", test.omega.is_finite(), "must be finite")?;
    e.range("test.gamma", test.gamma.is_finite(), "must be finite")?;

    let solve = SolveConfig {
        residual_tol: e.parsed("solve.residual_tol", 1e-10, "a number")?,
        extra_layouts: e.get(
            "solve.extra_layouts",
            Vec::new(),
            "a comma separated list of MxN",
            |s| parse_list(s, parse_layout),
        )?,
        parallel: e.get("solve.parallel", false, "true | false", parse_bool)?,
    };
    e.range(
        "solve.residual_tol",
        solve.residual_tol > 0.0 && solve.residual_tol < 1.0,
        "must lie in (0, 1)",
    )?;
    e.range(
        "solve.extra_layouts",
        solve.extra_layouts.iter().all(|&(m, n)| m >= 1 && n >= 1),
        "layouts need at least one row and column",
    )?;

    let default_sweep = vec![
        Epsilon::Energy(0.99),
        Epsilon::Energy(0.999),
        Epsilon::Energy(0.9999),
        Epsilon::Full,
    ];
    let sweep = SweepConfig {
        epsilons: e.get(
            "sweep.epsilons",
            default_sweep,
            "a comma separated list of numbers or `full`",
            |s| parse_list(s, parse_epsilon),
        )?,
    };
    e.range(
        "sweep.epsilons",
        !sweep.epsilons.is_empty() && sweep.epsilons.iter().all(|&x| epsilon_ok(x)),
        "needs at least one entry, each in (0, 1] or `full`",
    )?;

    let output = OutputConfig {
        dir: e.get("output.dir", "out".to_string(), "a path", |s| {
            Some(s.to_string())
        })?,
        dump_fields: e.get("output.dump_fields", true, "true | false", parse_bool)?,
    };
    e.range("output.dir", !output.dir.is_empty(), "must not be empty")?;

    Ok(PipelineConfig {
        problem,
        threads,
        n_cells,
        train,
        basis,
        layout,
        coupling,
        test,
        solve,
        sweep,
        output,
    })
}

impl PipelineConfig {
    /// Effective configuration in the input format; parsing it yields `self`.
    pub fn echo(&self) -> String {
        let mut out = String::from("# effective configuration\n");
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// `(key, value)` for every key in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let layouts: Vec<String> = self
            .solve
            .extra_layouts
            .iter()
            .map(|(m, n)| format!("{m}x{n}"))
            .collect();
        let eps: Vec<String> = self.sweep.epsilons.iter().map(|e| e.text()).collect();
        let values = [
            self.problem.as_str().to_string(),
            self.threads.to_string(),
            self.n_cells.to_string(),
            self.train.seed.to_string(),
            self.train.n_samples.to_string(),
            self.train.n_runs.to_string(),
            self.train.k_max.to_string(),
            self.train.nu.to_string(),
            self.train.dt.to_string(),
            self.train.t_final.to_string(),
            self.train.save_every.to_string(),
            self.basis.epsilon.text(),
            self.basis.fixed_r.to_string(),
            self.basis.port_split.to_string(),
            self.layout.rows.to_string(),
            self.layout.cols.to_string(),
            self.layout.bc.as_str().to_string(),
            self.coupling.formulation.to_string(),
            self.coupling.eta.to_string(),
            self.coupling.constraint_tol.to_string(),
            self.test.source.as_str().to_string(),
            self.test.omega.to_string(),
            self.test.gamma.to_string(),
            self.test.seed.to_string(),
            self.solve.residual_tol.to_string(),
            layouts.join(", "),
            self.solve.parallel.to_string(),
            eps.join(", "),
            self.output.dir.clone(),
            self.output.dump_fields.to_string(),
        ];
        KEYS.iter().copied().zip(values).collect()
    }

    pub fn burgers_params(&self) -> BurgersParams<f64> {
        BurgersParams {
            nu: self.train.nu,
            dt: self.train.dt,
            t_final: self.train.t_final,
            save_every: self.train.save_every,
        }
    }

    pub fn poisson_test(&self) -> PoissonTest<f64> {
        match self.test.source {
            TestSource::Spiral => PoissonTest::Spiral {
                omega: self.test.omega,
                gamma: self.test.gamma,
            },
            TestSource::Sinusoidal => {
                PoissonTest::Sinusoidal(sample_poisson_source(&mut child_rng(self.test.seed, 0)))
            }
        }
    }

    /// Study description consumed by the evaluation routines.
    pub fn study(&self, label: &str) -> StudyConfig<f64> {
        let problem = match self.problem {
            Problem::Poisson => ProblemSpec::Poisson {
                n_samples: self.train.n_samples,
                test: self.poisson_test(),
            },
            Problem::Burgers => ProblemSpec::Burgers {
                n_runs: self.train.n_runs,
                k_max: self.train.k_max,
                params: self.burgers_params(),
                test_seed: self.test.seed,
            },
        };
        StudyConfig {
            label: label.into(),
            problem,
            n_cells: self.n_cells,
            seed: self.train.seed,
            truncation: self.basis.truncation(),
            port_split: self.basis.port_split,
            coupling: self.coupling,
            residual_tol: self.solve.residual_tol,
            parallel: self.solve.parallel,
        }
    }

    /// The configured layout followed by any extra layouts.
    pub fn layouts(&self) -> Vec<(usize, usize)> {
        let mut v = vec![(self.layout.rows, self.layout.cols)];
        for l in &self.solve.extra_layouts {
            if !v.contains(l) {
                v.push(*l);
            }
        }
        v
    }
}
