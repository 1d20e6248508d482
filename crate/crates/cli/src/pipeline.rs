//! Pipeline stages. Each stage reads the artifacts of the previous one from
//! the output directory and writes its own, together with the effective
//! configuration and a manifest entry.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use ddfem_core::archive::{file_crc, save_field_dump};
use ddfem_core::assembly::ComponentLibrary;
use ddfem_core::basis::{load_basis, save_basis};
use ddfem_core::eval::{
    basis_spectra, emit_csv, emit_timings_csv, run_basis_sweep, run_layouts, LayoutOutcome,
    RunReport,
};
use ddfem_core::sampler::{load_snapshots, save_snapshots, SnapshotSet};
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, PipelineConfig, Problem, TestSource};
use crate::error::{io_at, CliError, Result};

pub const SNAPSHOTS_FILE: &str = "snapshots.ddfs";
pub const BASIS_FILE: &str = "basis.ddfb";
pub const REPORT_FILE: &str = "report.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_TIMINGS_FILE: &str = "sweep_timings.csv";
pub const REPRODUCE_FILE: &str = "reproduce.csv";
pub const ECHO_FILE: &str = "config.echo";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FIELDS_DIR: &str = "fields";

/// Replaces the training seed when `value` is set (the `DDFEM_SEED`
/// environment variable).
pub fn apply_seed_override(cfg: &mut PipelineConfig, value: Option<&str>) -> Result<()> {
    if let Some(v) = value {
        cfg.train.seed = v.trim().parse().map_err(|_| {
            CliError::Usage(format!(
                "DDFEM_SEED must be a non-negative integer, got {v:?}"
            ))
        })?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FileRecord {
    pub path: String,
    pub crc32: String,
}

/// Reproducibility record of one stage.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageRecord {
    pub tool: String,
    pub version: String,
    pub created_unix: u64,
    pub threads: usize,
    pub seeds: BTreeMap<String, u64>,
    pub tolerances: BTreeMap<String, f64>,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Singular value spectra of the trained blocks.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub spectra: BTreeMap<String, Vec<f64>>,
}

/// `manifest.json`: one record per stage that ran in the directory.
pub type Manifest = BTreeMap<String, StageRecord>;

pub fn read_manifest(out: &Path) -> Result<Manifest> {
    let path = out.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(Manifest::new());
    }
    let text = fs::read_to_string(&path).map_err(io_at(&path))?;
    Ok(serde_json::from_str(&text)?)
}

fn record(out: &Path, files: &[&Path]) -> Result<Vec<FileRecord>> {
    files
        .iter()
        .map(|p| {
            let rel = p.strip_prefix(out).unwrap_or(p);
            Ok(FileRecord {
                path: rel.display().to_string(),
                crc32: format!("{:08x}", file_crc(p)?),
            })
        })
        .collect()
}

fn finish_stage(
    cfg: &PipelineConfig,
    out: &Path,
    stage: &str,
    inputs: &[&Path],
    outputs: &[&Path],
    spectra: BTreeMap<String, Vec<f64>>,
) -> Result<()> {
    let echo = out.join(ECHO_FILE);
    fs::write(&echo, cfg.echo()).map_err(io_at(&echo))?;
    let rec = StageRecord {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        threads: rayon::current_num_threads(),
        seeds: BTreeMap::from([
            ("train".into(), cfg.train.seed),
            ("test".into(), cfg.test.seed),
        ]),
        tolerances: BTreeMap::from([
            ("residual_tol".into(), cfg.solve.residual_tol),
            ("constraint_tol".into(), cfg.coupling.constraint_tol),
            ("eta".into(), cfg.coupling.eta),
        ]),
        config: cfg
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        inputs: record(out, inputs)?,
        outputs: record(out, outputs)?,
        spectra,
    };
    let mut manifest = read_manifest(out)?;
    manifest.insert(stage.into(), rec);
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(io_at(&path))?;
    Ok(())
}

fn prepare(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(io_at(out))
}

fn require(out: &Path, file: &str, command: &'static str) -> Result<PathBuf> {
    let p = out.join(file);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::MissingPrerequisite { file: p, command })
    }
}

/// `gen-data`: solves the training patches and writes the snapshot archive.
pub fn cmd_gen_data(cfg: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    prepare(out)?;
    let snaps = cfg.study("gen-data").generate_snapshots()?;
    let path = out.join(SNAPSHOTS_FILE);
    save_snapshots(&snaps, &path)?;
    finish_stage(cfg, out, "gen-data", &[], &[&path], BTreeMap::new())?;
    Ok(path)
}

fn load_matching_snapshots(
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<(PathBuf, SnapshotSet<f64>)> {
    let path = require(out, SNAPSHOTS_FILE, "gen-data")?;
    let snaps = load_snapshots::<f64>(&path)?;
    let fields = match cfg.problem {
        Problem::Poisson => 1,
        Problem::Burgers => 2,
    };
    if snaps.n_cells != cfg.n_cells
        || snaps.fields_per_snapshot != fields
        || snaps.provenance.seed != cfg.train.seed
    {
        return Err(CliError::Usage(format!(
            "{} holds {}-field snapshots with n_cells = {} and seed {}, but the configuration asks for {} fields, \
             n_cells = {}, seed {}; rerun `ddfem gen-data`",
            path.display(),
            snaps.fields_per_snapshot,
            snaps.n_cells,
            snaps.provenance.seed,
            fields,
            cfg.n_cells,
            cfg.train.seed
        )));
    }
    Ok((path, snaps))
}

/// `train`: compresses the snapshot archive into a basis archive.
pub fn cmd_train(cfg: &PipelineConfig, out: &Path) -> Result<PathBuf> {
    let (snap_path, snaps) = load_matching_snapshots(cfg, out)?;
    let basis = cfg.study("train").train(&snaps)?;
    let path = out.join(BASIS_FILE);
    save_basis(&basis, &path)?;
    let spectra = basis_spectra(&basis).into_iter().collect();
    finish_stage(cfg, out, "train", &[&snap_path], &[&path], spectra)?;
    Ok(path)
}

fn load_library(cfg: &PipelineConfig, out: &Path) -> Result<(PathBuf, ComponentLibrary<f64>)> {
    let path = require(out, BASIS_FILE, "train")?;
    let basis = load_basis::<f64>(&path)?;
    basis.check_grid(cfg.n_cells)?;
    Ok((path, ComponentLibrary::single(basis)?))
}

fn evaluate(
    cfg: &PipelineConfig,
    library: &ComponentLibrary<f64>,
    label: &str,
) -> Result<Vec<LayoutOutcome<f64>>> {
    Ok(run_layouts(
        &cfg.study(label),
        library,
        &cfg.layouts(),
        cfg.coupling.formulation,
    )?)
}

fn dump_fields(out: &Path, outcomes: &[LayoutOutcome<f64>]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for o in outcomes {
        let tag = format!("{}x{}", o.report.rows, o.report.cols);
        for (name, field) in [("reduced", &o.reduced), ("fom", &o.reference)] {
            let p = out.join(FIELDS_DIR).join(format!("{name}_{tag}.ddff"));
            save_field_dump(&p, name, field.n_components(), field.values())?;
            files.push(p);
        }
    }
    Ok(files)
}

/// `solve`: assembles and solves every configured layout, compares with the
/// full-order model, and writes the report CSVs and optional field dumps.
pub fn cmd_solve(cfg: &PipelineConfig, out: &Path) -> Result<Vec<RunReport>> {
    let (basis_path, library) = load_library(cfg, out)?;
    let outcomes = evaluate(cfg, &library, "solve")?;
    let reports: Vec<RunReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let report = out.join(REPORT_FILE);
    let timings = out.join(TIMINGS_FILE);
    emit_csv(&reports, &report)?;
    emit_timings_csv(&reports, &timings)?;
    let dumps = if cfg.output.dump_fields {
        dump_fields(out, &outcomes)?
    } else {
        Vec::new()
    };
    let mut outputs: Vec<&Path> = vec![&report];
    outputs.extend(dumps.iter().map(|p| p.as_path()));
    finish_stage(cfg, out, "solve", &[&basis_path], &outputs, BTreeMap::new())?;
    Ok(reports)
}

/// `sweep`: one basis per `sweep.epsilons` entry from the same snapshots,
/// each evaluated on the configured layout.
pub fn cmd_sweep(cfg: &PipelineConfig, out: &Path) -> Result<Vec<RunReport>> {
    let (snap_path, snaps) = load_matching_snapshots(cfg, out)?;
    let truncations: Vec<_> = cfg.sweep.epsilons.iter().map(|e| e.truncation()).collect();
    let reports = run_basis_sweep(
        &cfg.study("sweep"),
        &snaps,
        &truncations,
        (cfg.layout.rows, cfg.layout.cols),
    )?;
    let csv = out.join(SWEEP_FILE);
    emit_csv(&reports, &csv)?;
    emit_timings_csv(&reports, &out.join(SWEEP_TIMINGS_FILE))?;
    finish_stage(cfg, out, "sweep", &[&snap_path], &[&csv], BTreeMap::new())?;
    Ok(reports)
}

/// Built-in studies run by `reproduce`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reproduction {
    PoissonSpiral,
    BurgersExtrapolation,
}

impl FromStr for Reproduction {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson-spiral" => Ok(Reproduction::PoissonSpiral),
            "burgers-extrapolation" => Ok(Reproduction::BurgersExtrapolation),
            other => Err(CliError::Usage(format!(
                "unknown study {other:?}; expected poisson-spiral or burgers-extrapolation"
            ))),
        }
    }
}

const POISSON_SPIRAL: &str = "\
problem = poisson
grid.n_cells = 16
train.seed = 42
train.n_samples = 500
basis.epsilon = 0.9999
basis.port_split = true
layout.rows = 8
layout.cols = 8
coupling.formulation = strong_condensation
test.source = spiral
test.omega = 0.45
test.gamma = 1
test.seed = 1000
";

const BURGERS_EXTRAPOLATION: &str = "\
problem = burgers
grid.n_cells = 8
train.seed = 42
train.n_runs = 200
train.k_max = 4
train.nu = 0.001
train.dt = 0.01
train.t_final = 0.5
train.save_every = 10
basis.epsilon = 0.9999
basis.port_split = true
layout.rows = 4
layout.cols = 4
coupling.formulation = constrained_residual
coupling.constraint_tol = 1e-10
test.seed = 1000
";

impl Reproduction {
    pub fn name(self) -> &'static str {
        match self {
            Reproduction::PoissonSpiral => "poisson-spiral",
            Reproduction::BurgersExtrapolation => "burgers-extrapolation",
        }
    }

    /// Pinned configuration text.
    pub fn config_text(self) -> &'static str {
        match self {
            Reproduction::PoissonSpiral => POISSON_SPIRAL,
            Reproduction::BurgersExtrapolation => BURGERS_EXTRAPOLATION,
        }
    }

    pub fn config(self) -> PipelineConfig {
        parse_config(self.config_text()).expect("built-in configuration is valid")
    }
}

/// One bound checked by `reproduce`.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `value <= bound` when true, `value >= bound` otherwise.
    pub upper: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            upper: true,
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            upper: false,
        }
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.bound
        } else {
            self.value >= self.bound
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (verdict, op) = match (self.passed(), self.upper) {
            (true, true) => ("PASS", "<="),
            (true, false) => ("PASS", ">="),
            (false, true) => ("FAIL", "<="),
            (false, false) => ("FAIL", ">="),
        };
        write!(
            f,
            "{verdict} {}: {:.4e} (bound {op} {:e})",
            self.name, self.value, self.bound
        )
    }
}

#[derive(Clone, Debug)]
pub struct Reproduced {
    pub reports: Vec<RunReport>,
    pub checks: Vec<Check>,
}

impl Reproduced {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// `reproduce`: gen-data, train and solve with a pinned configuration, then
/// checks the outcome against the acceptance bounds. The summary CSV holds
/// every evaluated report.
pub fn cmd_reproduce(
    which: Reproduction,
    out: &Path,
    seed_override: Option<&str>,
) -> Result<Reproduced> {
    let mut cfg = which.config();
    apply_seed_override(&mut cfg, seed_override)?;
    cfg.output.dir = out.display().to_string();
    cmd_gen_data(&cfg, out)?;
    cmd_train(&cfg, out)?;
    let mut reports: Vec<RunReport> = cmd_solve(&cfg, out)?
        .into_iter()
        .map(|r| RunReport {
            label: which.name().to_string(),
            ..r
        })
        .collect();
    let main = reports[0].clone();
    let mut checks = Vec::new();
    match which {
        Reproduction::PoissonSpiral => {
            let mut sin_cfg = cfg.clone();
            sin_cfg.test.source = TestSource::Sinusoidal;
            let (_, library) = load_library(&sin_cfg, out)?;
            let label = format!("{}/sinusoidal", which.name());
            let sin = evaluate(&sin_cfg, &library, &label)?;
            checks.push(Check::at_most(
                "spiral relative L2 error",
                main.final_error(),
                0.05,
            ));
            checks.push(Check::at_most(
                "sinusoidal relative L2 error",
                sin[0].report.final_error(),
                0.01,
            ));
            checks.push(Check::at_least("dof ratio", main.dof_ratio, 10.0));
            reports.extend(sin.into_iter().map(|o| o.report));
        }
        Reproduction::BurgersExtrapolation => {
            checks.push(Check::at_most(
                "final-time relative L2 error",
                main.final_error(),
                0.05,
            ));
            checks.push(Check::at_most(
                "constraint residual",
                main.constraint_residual.unwrap_or(f64::NAN),
                1e-10,
            ));
        }
    }
    let summary = out.join(REPRODUCE_FILE);
    emit_csv(&reports, &summary)?;
    Ok(Reproduced { reports, checks })
}
