//! Command-line runner for the phaseq simulator: TOML configuration, a
//! threaded executor and the on-disk result formats.

pub mod config;
pub mod error;
pub mod exec;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use phaseq_core::experiments::{
    run_calibrate_iq, run_gate_map, run_ramsey_filter, run_scurve, run_spectroscopy, run_tls_crossing,
    run_tsep_sweep, run_width_sweep, Executor, ExperimentResult,
};
use sha2::{Digest, Sha256};

pub use config::{parse_config, parse_snapshot, ExperimentKind, RunConfig};
pub use error::CliError;
pub use exec::Threaded;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "PHASEQ_OUTPUT_DIR";
/// Output root when neither `--out`, `output_dir` nor the environment set one.
pub const DEFAULT_OUTPUT_ROOT: &str = "runs";

/// Files written by one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub result: ExperimentResult,
}

/// Evaluates one protocol without touching the filesystem.
pub fn execute(cfg: &RunConfig, kind: ExperimentKind, exec: &dyn Executor) -> Result<ExperimentResult, CliError> {
    let result = match kind {
        ExperimentKind::Scurve => run_scurve(&cfg.lab()?, cfg.scurve.points)?,
        ExperimentKind::GateMap => run_gate_map(&cfg.lab()?, &cfg.gate_map_config()?, exec)?,
        ExperimentKind::TsepSweep => run_tsep_sweep(&cfg.lab()?, &cfg.tsep_grid()?, exec)?,
        ExperimentKind::RamseyFilter => {
            run_ramsey_filter(&cfg.lab()?, &cfg.ramsey_grid()?, cfg.ramsey_filter.fwhm, exec)?.result
        }
        ExperimentKind::WidthSweep => run_width_sweep(&cfg.lab()?, &cfg.width_grid()?, exec)?,
        ExperimentKind::Spectroscopy => run_spectroscopy(&cfg.lab()?, &cfg.spectroscopy_config()?, exec)?,
        ExperimentKind::TlsCrossing => {
            let mut lab = cfg.lab()?;
            lab.tls.enabled = true;
            run_tls_crossing(&lab, &cfg.tls_crossing_config()?, exec)?
        }
        ExperimentKind::CalibrateIq => run_calibrate_iq(&cfg.chain.model()?, &cfg.calibrate_iq.sidebands)?.0,
    };
    result.validate()?;
    Ok(result)
}

/// Content hash of the resolved configuration, used as the run directory name.
pub fn run_id(kind: ExperimentKind, snapshot: &str) -> String {
    let digest = Sha256::digest(snapshot.as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("{}-{hex}", kind.name())
}

/// Output root: `--out`, then `output_dir`, then the environment, then `runs`.
pub fn output_root(cfg: &RunConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Runs `kind` and writes its four output files under `<root>/<run id>/`.
pub fn run(kind: ExperimentKind, cfg: &RunConfig, out: Option<&Path>) -> Result<RunOutput, CliError> {
    if let Some(named) = cfg.experiment {
        if named != kind {
            return Err(CliError::invalid(
                "experiment",
                format!("config names {} but {} was requested", named.name(), kind.name()),
            ));
        }
    }
    let mut cfg = cfg.clone();
    cfg.experiment = Some(kind);
    let snapshot = cfg.snapshot_json()? + "\n";
    let run_id = run_id(kind, &snapshot);
    let dir = output_root(&cfg, out).join(&run_id);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let exec = Threaded::new(cfg.threads);
    let result = match execute(&cfg, kind, &exec) {
        Ok(r) => r,
        Err(CliError::Numeric(phaseq_core::Error::FitQuality { residual, x, y })) => {
            output::write_file(&dir, output::RAW_SCAN_CSV, &output::raw_scan_csv("t_sep_ns", &x, &y)?)?;
            return Err(CliError::Numeric(phaseq_core::Error::FitQuality { residual, x, y }));
        }
        Err(e) => return Err(e),
    };
    let files = vec![
        output::write_file(&dir, output::RESULT_CSV, &output::result_csv(&result)?)?,
        output::write_file(&dir, output::FITS_JSON, &output::fits_json(&result, &run_id)?)?,
        output::write_file(&dir, output::CONFIG_SNAPSHOT, &snapshot)?,
        output::write_file(&dir, output::SUMMARY_TXT, &format!("{}\n", result.summary))?,
    ];
    Ok(RunOutput { run_id, dir, files, result })
}

/// Reads a configuration file; `.json` files are treated as snapshots.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let Some(path) = path else {
        return parse_config("", overrides);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        if !overrides.is_empty() {
            return Err(CliError::Config("--set is not supported with JSON snapshots".into()));
        }
        return parse_snapshot(&text);
    }
    parse_config(&text, overrides)
}
