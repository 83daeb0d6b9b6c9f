//! The `winattn` command line.
//!
//! ```text
//! winattn [FLAGS] verify | simulate | analyze | patterns
//! ```
//!
//! A JSON run config (`--config`) supplies defaults; flags override it.
//! `--out` names a file for `verify`, `analyze` and `patterns` and a
//! directory for `simulate` (which writes `trace.csv` or `trace.json` plus
//! `summary.json`). Without `--out`, results go to stdout.
//!
//! Exit codes: 0 success, 1 verification failure, 2 config error, 3 I/O error.

mod commands;
mod config;

pub use commands::{
    cmd_analyze, cmd_patterns, cmd_simulate, cmd_verify, AnalyzeReport, PairCheck, SimulateReport, VerifyReport,
    CHUNKS_TOLERANCE, COSIM_TOLERANCE, STREAMING_TOLERANCE,
};
pub use config::{parse_index_list, Command, OutputFormat, RunConfig, TimingOverrides};

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, ValueEnum};

use crate::error::{Error, Result};
use crate::numerics::NumericMode;
use crate::pipeline::Precision;
use commands::write_file;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "winattn", version, about = "Fused FIFO sliding-window attention: verification, pipeline simulation, cost models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Raw,
    Stable,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Fp16,
    Fp32,
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON run config; flags given here take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seq_len: Option<usize>,
    #[arg(long, global = true, value_name = "H")]
    head_dim: Option<usize>,
    /// Half window `w`; each row attends `2w` tokens.
    #[arg(long, global = true, value_name = "W")]
    half_window: Option<usize>,
    /// Global token indices, e.g. `0,5,10-19`.
    #[arg(long, global = true, value_name = "LIST", value_parser = parse_globals)]
    globals: Option<IndexList>,
    #[arg(long, global = true, value_name = "R")]
    random_per_row: Option<usize>,
    /// Seed for the synthetic inputs (and the random pattern unless the config fixes it).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pipeline arithmetic; affects timing only.
    #[arg(long, global = true, value_enum)]
    precision: Option<PrecisionArg>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Divide scores by sqrt(H).
    #[arg(long, global = true)]
    scale_scores: bool,
    /// Inputs are uniform in [-scale, scale].
    #[arg(long, global = true, value_name = "SCALE")]
    input_scale: Option<f64>,
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

/// Parsed `--globals` value; a newtype so clap treats it as one value.
#[derive(Debug, Clone)]
struct IndexList(Vec<usize>);

fn parse_globals(text: &str) -> std::result::Result<IndexList, String> {
    parse_index_list(text).map(IndexList)
}

impl Flags {
    fn resolve(&self, command: Command) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        c.command = Some(command);
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { c.$field = v; })*
            };
        }
        set!(seq_len => seq_len, head_dim => head_dim, half_window => half_window,
             random_per_row => random_per_row, seed => seed,
             input_scale => input_scale, format => format);
        if let Some(IndexList(g)) = &self.globals {
            c.global_tokens.clone_from(g);
        }
        if let Some(p) = self.precision {
            c.precision = match p {
                PrecisionArg::Fp16 => Precision::Fp16,
                PrecisionArg::Fp32 => Precision::Fp32,
            };
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Raw => NumericMode::Raw,
                ModeArg::Stable => NumericMode::Stabilized,
            };
        }
        if self.scale_scores {
            c.scale_scores = true;
        }
        if self.out.is_some() {
            c.out.clone_from(&self.out);
        }
        c.validate()?;
        Ok(c)
    }
}

/// Exit code for an error that escaped a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericOverflow { .. } => EXIT_VERIFY_FAILED,
        Error::Io { .. } | Error::Csv(_) => EXIT_IO,
        Error::InvalidArgument(_) | Error::DimensionMismatch(_) | Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
    }
}

/// Parse `args` (including the program name) and run one command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match cli.flags.resolve(cli.command).and_then(|cfg| dispatch(&cfg, stdout)) {
        Ok(failures) if failures.is_empty() => EXIT_OK,
        Ok(failures) => {
            for f in failures {
                let _ = writeln!(stderr, "verification failed: {f}");
            }
            EXIT_VERIFY_FAILED
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

/// Run the configured command, returning the list of failed checks.
pub fn dispatch(config: &RunConfig, stdout: &mut dyn Write) -> Result<Vec<String>> {
    let command = config
        .command
        .ok_or_else(|| Error::Config("no command given".into()))?;
    let emit = |stdout: &mut dyn Write, text: &str| -> Result<()> {
        match &config.out {
            Some(path) => write_file(path, text),
            None => stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
        }
    };
    let say = |stdout: &mut dyn Write, line: String| -> Result<()> {
        writeln!(stdout, "{line}").map_err(|e| Error::io("<stdout>", e))
    };
    match command {
        Command::Verify => {
            let report = cmd_verify(config)?;
            emit(stdout, &report.render(config.format)?)?;
            if config.out.is_some() {
                for (pair, err) in &report.worst {
                    say(stdout, format!("{pair}: max relative error {err:e}"))?;
                }
            }
            Ok(report.failures)
        }
        Command::Simulate => {
            let report = cmd_simulate(config)?;
            let summary = report.summary_json()?;
            match &config.out {
                Some(dir) => {
                    let (name, body) = match config.format {
                        OutputFormat::Csv => ("trace.csv", &report.trace_csv),
                        OutputFormat::Json => ("trace.json", &report.trace_json),
                    };
                    write_file(&dir.join(name), body)?;
                    write_file(&dir.join("summary.json"), &summary)?;
                    let s = &report.summary;
                    say(
                        stdout,
                        format!(
                            "total_cycles={} closed_form={} ii={} fill={}",
                            s.total_cycles, s.closed_form_total_cycles, s.initiation_interval, s.fill_cycles
                        ),
                    )?;
                }
                None => say(stdout, summary.trim_end().to_string())?,
            }
            Ok(report.failures)
        }
        Command::Analyze => {
            let report = cmd_analyze(config)?;
            emit(stdout, &report.render(config.format)?)?;
            Ok(report.failures)
        }
        Command::Patterns => {
            emit(stdout, &cmd_patterns(config)?)?;
            Ok(Vec::new())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("winattn").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_and_bad_flags() {
        assert_eq!(call(&["--help"]).0, EXIT_OK);
        assert_eq!(call(&["verify", "--bogus"]).0, EXIT_CONFIG);
        assert_eq!(call(&[]).0, EXIT_CONFIG);
    }

    #[test]
    fn invalid_shape_is_config_error() {
        let (code, _, err) = call(&["patterns", "--seq-len", "8", "--half-window", "5"]);
        assert_eq!(code, EXIT_CONFIG);
        assert!(err.contains("error:"));
    }

    #[test]
    fn missing_config_file_is_io_error() {
        let (code, _, err) = call(&["verify", "--config", "/nonexistent/run.json"]);
        assert_eq!(code, EXIT_IO);
        assert!(err.contains("/nonexistent/run.json"));
    }

    #[test]
    fn overflow_is_verification_failure() {
        let (code, _, err) = call(&["verify", "--seq-len", "64", "--half-window", "8", "--mode", "raw", "--input-scale", "50"]);
        assert_eq!(code, EXIT_VERIFY_FAILED);
        assert!(err.contains("at row"), "{err}");
    }

    #[test]
    fn globals_flag() {
        let (code, out, _) = call(&["patterns", "--seq-len", "16", "--half-window", "2", "--head-dim", "4", "--globals", "0-1,9", "--format", "json"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("\"global\""));
        assert_eq!(call(&["patterns", "--globals", "a"]).0, EXIT_CONFIG);
    }

    #[test]
    fn flags_override_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"seq_len": 16, "half_window": 2, "head_dim": 4, "format": "json"}"#).unwrap();
        let (code, out, _) = call(&["patterns", "--config", path.to_str().unwrap(), "--half-window", "1"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("\"half_window\": 1"));
        assert!(out.contains("\"seq_len\": 16"));
    }
}
