//! File formats: problem files, initial-guess specs, iteration-history CSV,
//! sweep CSV and the JSON run report.
//!
//! Floats are written in Rust's shortest round-trip form, so every number
//! in an output file parses back to the exact value that was computed.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::examples::ControlError;
use crate::grid::{Grid, GridError, GridFunction};
use crate::problem::{Bounds, Cubic, CubicPlusLinear, Nonlinearity, ProblemError, ProblemInstance, State};
use crate::solver::{FailureReason, InitialResidual, IterationRecord, SolveReport, SolverConfig, Variant};

/// Largest `n` accepted from a problem file.
pub const MAX_FILE_N: usize = 2048;

/// Header of the iteration-history CSV.
pub const HISTORY_HEADER: [&str; 11] = [
    "k",
    "norm_F",
    "norm_ry",
    "norm_rp",
    "eta",
    "gmres_iters",
    "gmres_relres",
    "delta",
    "backtracks",
    "tau",
    "merit",
];

/// Header of the sweep CSV.
pub const SWEEP_HEADER: [&str; 9] = [
    "h",
    "c1",
    "variant",
    "norm_ry",
    "norm_rp",
    "iters",
    "wall_time",
    "peak_krylov_bytes",
    "failure_reason",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Invalid(msg.into()))
}

/// Shortest decimal string that parses back to `v`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// A bound as written in files: a number or one of the infinity keywords.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoundRepr", into = "BoundRepr")]
pub struct FileBound(pub f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BoundRepr {
    Number(f64),
    Word(String),
}

impl TryFrom<BoundRepr> for FileBound {
    type Error = String;

    fn try_from(r: BoundRepr) -> Result<Self, String> {
        match r {
            BoundRepr::Number(v) => Ok(FileBound(v)),
            BoundRepr::Word(w) => match w.trim() {
                "inf" | "+inf" | "Infinity" | "+Infinity" => Ok(FileBound(f64::INFINITY)),
                // accept the typographic minus as well
                "-inf" | "\u{2212}inf" | "-Infinity" => Ok(FileBound(f64::NEG_INFINITY)),
                other => Err(format!("bad bound '{other}' (expected a number, \"-inf\" or \"inf\")")),
            },
        }
    }
}

impl From<FileBound> for BoundRepr {
    fn from(b: FileBound) -> Self {
        if b.0 == f64::INFINITY {
            BoundRepr::Word("inf".into())
        } else if b.0 == f64::NEG_INFINITY {
            BoundRepr::Word("-inf".into())
        } else {
            BoundRepr::Number(b.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    Cubic,
    CubicPlusLinear,
}

impl NonlinearityKind {
    pub fn build(self) -> Arc<dyn Nonlinearity> {
        match self {
            NonlinearityKind::Cubic => Arc::new(Cubic),
            NonlinearityKind::CubicPlusLinear => Arc::new(CubicPlusLinear),
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        match label {
            "cubic" => Some(NonlinearityKind::Cubic),
            "cubic_plus_linear" => Some(NonlinearityKind::CubicPlusLinear),
            _ => None,
        }
    }
}

/// Right-hand side `f`: the keyword `"zero"` or inline values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FieldSpec {
    Keyword(String),
    Values(Vec<f64>),
}

/// On-disk problem description. Grid values are listed with `x1` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub alpha: f64,
    pub bounds: [FileBound; 2],
    pub nonlinearity: NonlinearityKind,
    pub f: FieldSpec,
    pub yd: Vec<f64>,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self, IoError> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn to_instance(&self) -> Result<ProblemInstance, IoError> {
        if self.n < 2 || self.n > MAX_FILE_N {
            return invalid(format!("n = {} outside [2, {MAX_FILE_N}]", self.n));
        }
        let grid = Grid::new(self.n)?;
        let f = match &self.f {
            FieldSpec::Keyword(k) if k == "zero" => GridFunction::zeros(grid),
            FieldSpec::Keyword(k) => return invalid(format!("unknown f keyword '{k}' (expected \"zero\")")),
            FieldSpec::Values(v) => GridFunction::from_values(grid, v.clone())?,
        };
        let yd = GridFunction::from_values(grid, self.yd.clone())?;
        let bounds = Bounds::new(self.bounds[0].0, self.bounds[1].0)?;
        Ok(ProblemInstance::new(
            grid,
            self.nonlinearity.build(),
            bounds,
            self.alpha,
            f,
            yd,
        )?)
    }

    /// File form of an instance whose nonlinearity has a file keyword.
    pub fn from_instance(inst: &ProblemInstance) -> Result<Self, IoError> {
        let label = inst.nonlinearity().label();
        let Some(nonlinearity) = NonlinearityKind::from_label(label) else {
            return invalid(format!("nonlinearity '{label}' has no file representation"));
        };
        let f = if inst.f().values().iter().all(|&v| v == 0.0) {
            FieldSpec::Keyword("zero".into())
        } else {
            FieldSpec::Values(inst.f().values().to_vec())
        };
        Ok(ProblemFile {
            n: inst.grid().n(),
            alpha: inst.alpha(),
            bounds: [FileBound(inst.bounds().lower()), FileBound(inst.bounds().upper())],
            nonlinearity,
            f,
            yd: inst.yd().values().to_vec(),
        })
    }
}

/// Parses a problem file straight into an instance.
pub fn parse_problem(text: &str) -> Result<ProblemInstance, IoError> {
    ProblemFile::parse(text)?.to_instance()
}

pub fn read_problem_file(path: &std::path::Path) -> Result<ProblemInstance, IoError> {
    let file = std::fs::File::open(path)?;
    ProblemFile::from_reader(std::io::BufReader::new(file))?.to_instance()
}

/// Starting point `z₀`: all zeros or the constant `c` in both `y` and `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    Zeros,
    Constant(f64),
}

impl InitialGuess {
    pub fn state(&self, grid: Grid) -> State {
        match *self {
            InitialGuess::Zeros => State::zeros(grid),
            InitialGuess::Constant(c) => State::constant(grid, c),
        }
    }
}

impl FromStr for InitialGuess {
    type Err = IoError;

    fn from_str(s: &str) -> Result<Self, IoError> {
        let s = s.trim();
        if s == "zeros" {
            return Ok(InitialGuess::Zeros);
        }
        let Some(rest) = s.strip_prefix("constant:") else {
            return invalid(format!("bad initial guess '{s}' (expected zeros or constant:<c>)"));
        };
        match rest.trim().parse::<f64>() {
            Ok(c) if c.is_finite() => Ok(InitialGuess::Constant(c)),
            _ => invalid(format!("bad constant '{rest}' in initial guess")),
        }
    }
}

impl fmt::Display for InitialGuess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialGuess::Zeros => write!(f, "zeros"),
            InitialGuess::Constant(c) => write!(f, "constant:{}", fmt_f64(*c)),
        }
    }
}

impl Serialize for InitialGuess {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InitialGuess {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Writes the iteration history, one row per Newton iteration.
pub fn write_history_csv<W: Write>(w: W, records: &[IterationRecord]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(HISTORY_HEADER)?;
    for r in records {
        out.write_record([
            r.k.to_string(),
            fmt_f64(r.norm_f),
            fmt_f64(r.norm_ry),
            fmt_f64(r.norm_rp),
            fmt_f64(r.eta),
            r.gmres_iters.to_string(),
            fmt_f64(r.gmres_relres),
            fmt_f64(r.delta),
            r.backtracks.to_string(),
            fmt_f64(r.tau),
            fmt_f64(r.merit),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a history CSV written by [`write_history_csv`].
pub fn read_history_csv<R: Read>(r: R) -> Result<Vec<IterationRecord>, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HISTORY_HEADER) {
        return invalid(format!("unexpected history header: {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        if row.len() != HISTORY_HEADER.len() {
            return invalid(format!("history row has {} fields", row.len()));
        }
        let float = |i: usize| -> Result<f64, IoError> {
            row[i]
                .parse::<f64>()
                .or_else(|_| invalid(format!("bad number '{}' in column {}", &row[i], HISTORY_HEADER[i])))
        };
        let int = |i: usize| -> Result<usize, IoError> {
            row[i]
                .parse::<usize>()
                .or_else(|_| invalid(format!("bad integer '{}' in column {}", &row[i], HISTORY_HEADER[i])))
        };
        out.push(IterationRecord {
            k: int(0)?,
            norm_f: float(1)?,
            norm_ry: float(2)?,
            norm_rp: float(3)?,
            eta: float(4)?,
            gmres_iters: int(5)?,
            gmres_relres: float(6)?,
            delta: float(7)?,
            backtracks: int(8)?,
            tau: float(9)?,
            merit: float(10)?,
        });
    }
    Ok(out)
}

/// Problem metadata echoed into the run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSummary {
    /// `example1`, `example1-printed`, `example2` or `file:<path>`.
    pub source: String,
    pub n: usize,
    pub h: f64,
    pub alpha: f64,
    pub nonlinearity: String,
    pub bounds: [FileBound; 2],
}

impl ProblemSummary {
    pub fn of(source: &str, inst: &ProblemInstance) -> Self {
        ProblemSummary {
            source: source.to_string(),
            n: inst.grid().n(),
            h: inst.grid().h(),
            alpha: inst.alpha(),
            nonlinearity: inst.nonlinearity().label().to_string(),
            bounds: [FileBound(inst.bounds().lower()), FileBound(inst.bounds().upper())],
        }
    }
}

/// JSON run report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub problem: ProblemSummary,
    pub initial_guess: InitialGuess,
    pub config: SolverConfig,
    pub converged: bool,
    pub newton_iterations: usize,
    pub initial: InitialResidual,
    pub iterations: Vec<IterationRecord>,
    pub final_norm_ry: f64,
    pub final_norm_rp: f64,
    pub final_norm_f: f64,
    /// Present when the problem has a known exact control.
    pub control_error: Option<ControlError>,
    pub wall_time: f64,
    pub peak_krylov_bytes: usize,
    pub failure_reason: Option<FailureReason>,
}

impl RunReport {
    pub fn new(
        problem: ProblemSummary,
        initial_guess: InitialGuess,
        config: SolverConfig,
        report: &SolveReport,
        control_error: Option<ControlError>,
    ) -> Self {
        let (ry, rp) = report.final_norms();
        RunReport {
            problem,
            initial_guess,
            config,
            converged: report.converged,
            newton_iterations: report.newton_iterations(),
            initial: report.initial,
            iterations: report.iterations.clone(),
            final_norm_ry: ry,
            final_norm_rp: rp,
            final_norm_f: ry.hypot(rp),
            control_error,
            wall_time: report.wall_time,
            peak_krylov_bytes: report.peak_krylov_bytes,
            failure_reason: report.failure_reason.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String, IoError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub c1: f64,
    pub variant: Variant,
    pub norm_ry: f64,
    pub norm_rp: f64,
    pub iters: usize,
    pub wall_time: f64,
    pub peak_krylov_bytes: usize,
    pub failure_reason: Option<String>,
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            fmt_f64(1.0 / r.n as f64),
            fmt_f64(r.c1),
            r.variant.name().to_string(),
            fmt_f64(r.norm_ry),
            fmt_f64(r.norm_rp),
            r.iters.to_string(),
            fmt_f64(r.wall_time),
            r.peak_krylov_bytes.to_string(),
            r.failure_reason.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_file(bounds: &str, f: &str) -> String {
        format!(
            r#"{{"n": 3, "alpha": 0.01, "bounds": {bounds}, "nonlinearity": "cubic", "f": {f}, "yd": [1, 2, 3, 4]}}"#
        )
    }

    #[test]
    fn parses_problem_file() {
        let inst = parse_problem(&tiny_file(r#"["-inf", "inf"]"#, r#""zero""#)).unwrap();
        assert_eq!(inst.grid().n(), 3);
        assert_eq!(inst.bounds().lower(), f64::NEG_INFINITY);
        assert_eq!(inst.bounds().upper(), f64::INFINITY);
        assert_eq!(inst.yd().values(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(inst.f().values().iter().all(|&v| v == 0.0));

        let inst = parse_problem(&tiny_file(r#"["−inf", 2.5]"#, "[0.5, 0, 0, 1]")).unwrap();
        assert_eq!(inst.bounds().lower(), f64::NEG_INFINITY);
        assert_eq!(inst.bounds().upper(), 2.5);
        assert_eq!(inst.f().values()[0], 0.5);
    }

    #[test]
    fn rejects_bad_problem_files() {
        for text in [
            tiny_file(r#"[1, 0]"#, r#""zero""#),
            tiny_file(r#"["inf", "inf"]"#, r#""zero""#),
            tiny_file(r#"["-inf", "big"]"#, r#""zero""#),
            tiny_file(r#"["-inf", "inf"]"#, r#""one""#),
            tiny_file(r#"["-inf", "inf"]"#, "[1, 2]"),
            r#"{"n": 1, "alpha": 1, "bounds": [0, 1], "nonlinearity": "cubic", "f": "zero", "yd": []}"#.into(),
            r#"{"n": 3, "alpha": 0, "bounds": [0, 1], "nonlinearity": "cubic", "f": "zero", "yd": [1,2,3,4]}"#.into(),
            r#"{"n": 3, "alpha": 1, "bounds": [0, 1], "nonlinearity": "exp", "f": "zero", "yd": [1,2,3,4]}"#.into(),
            r#"{"n": 3, "alpha": 1, "bounds": [0, 1], "nonlinearity": "cubic", "f": "zero", "yd": [1,2,3,4], "x": 1}"#.into(),
            r#"{"n": 100000, "alpha": 1, "bounds": [0, 1], "nonlinearity": "cubic", "f": "zero", "yd": []}"#.into(),
            "not json".into(),
        ] {
            assert!(parse_problem(&text).is_err(), "{text}");
        }
    }

    #[test]
    fn problem_file_round_trip() {
        let inst = crate::examples::example2(5, 1e-3).unwrap().instance;
        let file = ProblemFile::from_instance(&inst).unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_problem(&text).unwrap();
        assert_eq!(back.yd(), inst.yd());
        assert_eq!(back.f(), inst.f());
        assert_eq!(back.alpha(), inst.alpha());
        assert_eq!(back.nonlinearity().label(), "cubic_plus_linear");
    }

    #[test]
    fn initial_guess_parsing() {
        assert_eq!("zeros".parse::<InitialGuess>().unwrap(), InitialGuess::Zeros);
        assert_eq!("constant:1".parse::<InitialGuess>().unwrap(), InitialGuess::Constant(1.0));
        assert_eq!("constant:-2.5".parse::<InitialGuess>().unwrap(), InitialGuess::Constant(-2.5));
        for bad in ["", "zero", "constant:", "constant:abc", "constant:inf", "constant:NaN", "ones"] {
            assert!(bad.parse::<InitialGuess>().is_err(), "{bad}");
        }
        let g = InitialGuess::Constant(0.1);
        assert_eq!(g.to_string().parse::<InitialGuess>().unwrap(), g);
        let s = g.state(Grid::new(3).unwrap());
        assert!(s.as_slice().iter().all(|&v| v == 0.1));
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, 1.0, 3.0, 1.9312e-10, 0.1, 1.0 / 3.0, 6.02e23, f64::MIN_POSITIVE, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_f64(0.5), "0.5");
    }

    fn record(k: usize) -> IterationRecord {
        IterationRecord {
            k,
            norm_f: 1.0 / (k as f64 + 3.0),
            norm_ry: 0.1 + k as f64,
            norm_rp: 1e-11,
            eta: 0.9,
            gmres_iters: 17 * k,
            gmres_relres: 0.123456789,
            delta: 0.25,
            backtracks: 2,
            tau: 3.3e-9,
            merit: 2.0f64.sqrt(),
        }
    }

    #[test]
    fn history_csv_round_trip() {
        let recs: Vec<_> = (1..=4).map(record).collect();
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("k,norm_F,norm_ry,norm_rp,eta,gmres_iters,gmres_relres,delta,backtracks,tau,merit\n"));
        assert_eq!(text.lines().count(), 5);
        assert_eq!(read_history_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn history_csv_rejects_bad_input() {
        assert!(read_history_csv("a,b\n1,2\n".as_bytes()).is_err());
        let bad = "k,norm_F,norm_ry,norm_rp,eta,gmres_iters,gmres_relres,delta,backtracks,tau,merit\n1,x,1,1,1,1,1,1,1,1,1\n";
        assert!(read_history_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = vec![SweepRow {
            n: 64,
            c1: 0.5,
            variant: Variant::IssngL,
            norm_ry: 1e-10,
            norm_rp: 2e-11,
            iters: 3,
            wall_time: 0.5,
            peak_krylov_bytes: 1024,
            failure_reason: None,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "h,c1,variant,norm_ry,norm_rp,iters,wall_time,peak_krylov_bytes,failure_reason"
        );
        assert_eq!(lines.next().unwrap(), "0.015625,0.5,issng-l,1e-10,2e-11,3,0.5,1024,");
    }
}
