//! The `sgc` command line: `cost`, `build`, `verify`, `simulate`, `sweep`.
//!
//! Exit codes: 0 pass, 2 infeasible, 3 construction failed, 4 verification
//! failed, 5 I/O, parse or usage error. Machine-readable output goes to
//! `--out` when given and to stdout otherwise; with `--out`, stdout carries a
//! short human-readable summary.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{self, AnalysisError, Axis, CostParams, SweepSpec};
use crate::engine::{EngineError, Simulator};
use crate::field::{make_field, SeededRng, DEFAULT_MODULUS};
use crate::scheme::{
    build_scheme, AssignmentJson, DataAssignment, SchemeArtifact, SchemeError, SchemeParams,
};
use crate::verifier::{certify, Certificate};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_CONSTRUCTION: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;
pub const EXIT_IO: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "sgc",
    version,
    about = "Secure gradient coding with uncoded groupwise keys"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact communication cost of one (N, Nr, M, S) tuple.
    Cost(CostArgs),
    /// Construct, certify and write a scheme artifact.
    Build(BuildArgs),
    /// Re-run every certificate check on an artifact.
    Verify(VerifyArgs),
    /// Run encode/decode rounds against a certified artifact.
    Simulate(SimulateArgs),
    /// Cost table along one parameter axis, as CSV.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long = "N")]
    pub servers: usize,
    #[arg(long = "Nr")]
    pub responders: usize,
    #[arg(long = "M")]
    pub replication: usize,
    #[arg(long = "S")]
    pub group_size: usize,
    /// Accepted for symmetry with `build`; the cost does not depend on it.
    #[arg(long = "K")]
    pub datasets: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long = "K")]
    pub datasets: usize,
    #[arg(long = "N")]
    pub servers: usize,
    #[arg(long = "Nr")]
    pub responders: usize,
    #[arg(long = "M")]
    pub replication: usize,
    #[arg(long = "S")]
    pub group_size: usize,
    #[arg(long, default_value_t = DEFAULT_MODULUS)]
    pub q: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON `{"D": [[...], ...]}`; cyclic when omitted.
    #[arg(long)]
    pub assignment: Option<PathBuf>,
    /// Artifact path; the certificate goes to `<stem>.cert.json` beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub artifact: PathBuf,
    /// Gradient length; defaults to `4n`.
    #[arg(long = "L")]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub rounds: usize,
    /// Comma-separated fixed responder set; rotates through all subsets when
    /// omitted.
    #[arg(long, value_delimiter = ',')]
    pub responders: Option<Vec<usize>>,
    /// Defaults to the artifact's construction seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub axis: String,
    #[arg(long)]
    pub from: usize,
    #[arg(long)]
    pub to: usize,
    /// Fixed parameters; the swept one may be omitted.
    #[arg(long = "N")]
    pub servers: Option<usize>,
    #[arg(long = "Nr")]
    pub responders: Option<usize>,
    #[arg(long = "M")]
    pub replication: Option<usize>,
    #[arg(long = "S")]
    pub group_size: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new(EXIT_IO, format!("{}: {e}", path.display()))
    }
}

impl From<SchemeError> for CliError {
    fn from(e: SchemeError) -> Self {
        let code = match e {
            SchemeError::Infeasible(_) => EXIT_INFEASIBLE,
            SchemeError::ConstructionFailed(_) => EXIT_CONSTRUCTION,
            SchemeError::Internal(_) => EXIT_VERIFICATION,
            _ => EXIT_IO,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        let code = match e {
            AnalysisError::GroupSizeTooSmall
            | AnalysisError::NonPositiveDenominator
            | AnalysisError::NoLinearScheme => EXIT_INFEASIBLE,
            _ => EXIT_IO,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::Singular | EngineError::Mismatch(_) => EXIT_VERIFICATION,
            _ => EXIT_IO,
        };
        CliError::new(code, e.to_string())
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_PASS
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_IO
                }
            };
        }
    };
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(command: &Command, stdout: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Cost(a) => cmd_cost(a, stdout),
        Command::Build(a) => cmd_build(a, stdout),
        Command::Verify(a) => cmd_verify(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
    }
}

fn say(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    writeln!(stdout, "{text}").map_err(|e| CliError::new(EXIT_IO, format!("stdout: {e}")))
}

/// Writes `text` to `out`, or to stdout when no path is given.
fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| CliError::io(path, e)),
        None => say(stdout, text.trim_end_matches('\n')),
    }
}

fn cmd_cost(a: &CostArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let params = CostParams::new(a.servers, a.responders, a.replication, a.group_size);
    let point = analysis::cost_point(&params);
    if let Some(reason) = point.reason.clone() {
        return Err(reason.into());
    }
    let (r, rn, ratio) = (
        point.r.as_ref().expect("feasible"),
        point.rn.as_ref().expect("feasible"),
        point.ratio.as_ref().expect("feasible"),
    );
    let summary = format!("R={r} Rn={rn} ratio={ratio} regime={}", point.regime);
    let json =
        serde_json::to_string_pretty(&point.to_json()).expect("json value serializes") + "\n";
    match &a.out {
        Some(path) => {
            emit(Some(path), &json, stdout)?;
            say(stdout, &summary)?;
        }
        None => {
            say(stdout, &summary)?;
            emit(None, &json, stdout)?;
        }
    }
    Ok(EXIT_PASS)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_assignment(path: &Path) -> Result<DataAssignment, CliError> {
    let json: AssignmentJson = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    Ok(DataAssignment::new(json.d))
}

/// `dir/name.json` becomes `dir/name.cert.json`.
pub fn certificate_path(artifact: &Path) -> PathBuf {
    let stem = artifact
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "artifact".to_string());
    artifact.with_file_name(format!("{stem}.cert.json"))
}

fn certificate_summary(cert: &Certificate) -> String {
    let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
    let mut lines = vec![
        format!(
            "decodability: {} ({} subsets checked)",
            mark(cert.decodability.pass),
            cert.decodability.subsets_checked
        ),
        format!(
            "encodability: {} ({} violations)",
            mark(cert.encodability.pass()),
            cert.encodability.violations.len()
        ),
        format!(
            "security: {} (mutual information {})",
            mark(cert.security.pass()),
            cert.security.mi_value
        ),
        format!("dimensions: {}", mark(cert.dims.identity_holds)),
    ];
    if let Some(u) = &cert.decodability.failing_subset {
        lines.push(format!("first singular responder set: {u:?}"));
    }
    if let Some(v) = cert.encodability.violations.first() {
        lines.push(format!(
            "first encodability violation: server {} column {} ({:?})",
            v.server, v.column, v.kind
        ));
    }
    lines.join("\n")
}

fn cmd_build(a: &BuildArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let modulus = make_field(a.q).map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
    let params = SchemeParams::new(
        a.datasets,
        a.servers,
        a.responders,
        a.replication,
        a.group_size,
        modulus,
    )?;
    let assignment = a.assignment.as_deref().map(read_assignment).transpose()?;
    let scheme = build_scheme(&params, assignment, a.seed)?;
    let cert = certify(&scheme);
    if !cert.passed() {
        say(stdout, &certificate_summary(&cert))?;
        return Err(CliError::new(
            EXIT_VERIFICATION,
            "certificate failed; no artifact written",
        ));
    }
    let cert_path = certificate_path(&a.out);
    fs::write(&a.out, scheme.to_json_string() + "\n").map_err(|e| CliError::io(&a.out, e))?;
    fs::write(&cert_path, cert.to_json_string() + "\n").map_err(|e| CliError::io(&cert_path, e))?;
    let (c_rows, c_cols) = scheme.coding.matrix().shape();
    say(
        stdout,
        &format!(
            "built (K,N,Nr,M,S)=({},{},{},{},{}) r={} n={} alpha={} C {}x{} F {}x{} retries={}\ncertified: {}\ncertificate: {}",
            params.datasets,
            params.servers,
            params.responders,
            params.replication,
            params.group_size,
            scheme.dims.r,
            scheme.dims.n,
            scheme.dims.alpha,
            c_rows,
            c_cols,
            scheme.dims.f_rows,
            scheme.dims.f_cols,
            scheme.retries_used,
            a.out.display(),
            cert_path.display()
        ),
    )?;
    Ok(EXIT_PASS)
}

fn load_artifact(path: &Path) -> Result<SchemeArtifact, CliError> {
    SchemeArtifact::from_json_str(&read_text(path)?)
        .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))
}

fn cmd_verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let scheme = load_artifact(&a.artifact)?;
    let cert = certify(&scheme);
    let json = cert.to_json_string() + "\n";
    if a.out.is_some() {
        emit(a.out.as_deref(), &json, stdout)?;
        say(stdout, &certificate_summary(&cert))?;
    } else {
        emit(None, &json, stdout)?;
    }
    Ok(if cert.passed() {
        EXIT_PASS
    } else {
        EXIT_VERIFICATION
    })
}

fn cmd_simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let scheme = load_artifact(&a.artifact)?;
    let cert = certify(&scheme);
    if !cert.passed() {
        return Err(CliError::new(
            EXIT_VERIFICATION,
            format!("artifact is not certified\n{}", certificate_summary(&cert)),
        ));
    }
    let length = a.length.unwrap_or(scheme.dims.n * 4);
    let base = SeededRng::new(a.seed.unwrap_or(scheme.seed));
    let mut sim = Simulator::new(&scheme);
    let mut reports = Vec::with_capacity(a.rounds);
    for i in 0..a.rounds {
        let mut rng = base.child(&format!("round-{i}"));
        reports.push(sim.run_round(length, i, a.responders.as_deref(), &mut rng)?);
    }
    let matches = reports.iter().filter(|r| r.matches).count();
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n";
    if a.out.is_some() {
        emit(a.out.as_deref(), &json, stdout)?;
        say(
            stdout,
            &format!(
                "{matches}/{} rounds decoded the exact sum (L={length})",
                reports.len()
            ),
        )?;
    } else {
        emit(None, &json, stdout)?;
    }
    Ok(if matches == reports.len() {
        EXIT_PASS
    } else {
        EXIT_VERIFICATION
    })
}

fn cmd_sweep(a: &SweepArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let axis: Axis = a.axis.parse()?;
    let pick = |given: Option<usize>, this: Axis, name: &str| -> Result<usize, CliError> {
        match given {
            Some(v) => Ok(v),
            None if this == axis => Ok(a.from),
            None => Err(CliError::new(
                EXIT_IO,
                format!("--{name} is required unless it is the swept axis"),
            )),
        }
    };
    let base = CostParams::new(
        pick(a.servers, Axis::Servers, "N")?,
        pick(a.responders, Axis::Responders, "Nr")?,
        pick(a.replication, Axis::Replication, "M")?,
        pick(a.group_size, Axis::GroupSize, "S")?,
    );
    let spec = SweepSpec {
        base,
        axis,
        from: a.from,
        to: a.to,
    };
    let csv = analysis::sweep_csv(&spec)?;
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| CliError::io(path, e))?;
            say(
                stdout,
                &format!(
                    "{} rows written to {}",
                    csv.lines().count() - 1,
                    path.display()
                ),
            )?;
        }
        None => {
            write!(stdout, "{csv}").map_err(|e| CliError::new(EXIT_IO, format!("stdout: {e}")))?
        }
    }
    Ok(EXIT_PASS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(
            std::iter::once("sgc").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn cost_summary() {
        let (code, out, _) = run_args(&["cost", "--N", "3", "--Nr", "3", "--M", "2", "--S", "2"]);
        assert_eq!(code, 0);
        assert!(
            out.starts_with("R=2/3 Rn=1/2 ratio=4/3 regime=S<=M\n"),
            "{out}"
        );
    }

    #[test]
    fn cost_infeasible() {
        let (code, _, err) = run_args(&["cost", "--N", "3", "--Nr", "2", "--S", "2", "--M", "2"]);
        assert_eq!(code, EXIT_INFEASIBLE);
        assert!(err.contains("feasibility S >= N-Nr+2 violated"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run_args(&["cost", "--N", "3"]).0, EXIT_IO);
        assert_eq!(run_args(&["frobnicate"]).0, EXIT_IO);
        assert_eq!(run_args(&["--help"]).0, EXIT_PASS);
        assert_eq!(run_args(&["--version"]).0, EXIT_PASS);
        let (code, _, err) = run_args(&["sweep", "--axis", "K", "--from", "1", "--to", "2"]);
        assert_eq!(code, EXIT_IO);
        assert!(err.contains("unknown sweep axis"));
    }

    #[test]
    fn sweep_to_stdout() {
        let (code, out, _) = run_args(&[
            "sweep", "--axis", "S", "--from", "9", "--to", "9", "--N", "14", "--Nr", "12", "--M",
            "8",
        ]);
        assert_eq!(code, 0);
        assert_eq!(
            out.lines().nth(1),
            Some("S,9,1/6,0.166666666667,1/6,0.166666666667,1,1,S>M")
        );
    }

    #[test]
    fn certificate_paths() {
        assert_eq!(
            certificate_path(Path::new("/tmp/x/scheme.json")),
            PathBuf::from("/tmp/x/scheme.cert.json")
        );
        assert_eq!(
            certificate_path(Path::new("scheme")),
            PathBuf::from("scheme.cert.json")
        );
    }
}
