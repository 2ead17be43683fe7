//! Command-line front end: verification suites, table reproduction,
//! propagation, quantization, Wigner dumps and audits.
//!
//! Exit codes: 0 when every pass/fail check passes, 1 when any fails, 2 for
//! usage errors (bad flags, unreadable or invalid input files).

pub mod commands;
pub mod suites;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cmeta::hilbert_grid::GridSpec;
use cmeta::report::{Check, Status};
use serde::{Deserialize, Serialize};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "cmeta", version, about = "Complex metaplectic operators and off-diagonal Toeplitz quantization")]
pub struct Cli {
    #[command(flatten)]
    pub flags: GlobalFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Args, Debug, Clone, Default)]
pub struct GlobalFlags {
    /// Spatial dimension of the grid (1 or 2).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Grid points per axis (power of two).
    #[arg(long = "grid-N", global = true)]
    pub grid_n: Option<usize>,
    /// Grid half-width L.
    #[arg(long = "grid-L", global = true)]
    pub grid_l: Option<f64>,
    #[arg(long, global = true)]
    pub hbar: Option<f64>,
    /// Phase-space disc radius of the Toeplitz quadrature.
    #[arg(long, global = true)]
    pub radius: Option<f64>,
    /// Print the report as JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    /// Output file (reports, tables, operators) or directory (propagate).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run an invariant suite.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
    },
    /// Reproduce an example table with computed and printed columns.
    Table {
        #[arg(long, value_enum)]
        name: TableArg,
        #[arg(long)]
        t: f64,
    },
    /// Propagate a coherent state through the kernel of S and fit the result.
    Propagate {
        /// JSON file with {"n": 1, "rows": [[[re, im], ...], ...]}.
        #[arg(long = "s-file")]
        s_file: PathBuf,
        /// Width parameter as `re,im` (times the identity when n = 2).
        #[arg(long, default_value = "0,1")]
        alpha: String,
        /// Center as `q,p` (or `q1,q2,p1,p2`).
        #[arg(long, default_value = "0,0")]
        z: String,
    },
    /// Toeplitz-quantize a symbol file into a binary operator.
    Quantize {
        /// SymbolField JSON.
        #[arg(long)]
        symbol: PathBuf,
        #[arg(long, default_value = "0,1")]
        alpha: String,
    },
    /// Weyl symbol of a binary operator, written as CSV.
    Wigner {
        #[arg(long)]
        operator: PathBuf,
    },
    /// Run a convention audit and print every candidate.
    Audit {
        #[arg(long, value_enum)]
        kind: AuditKind,
    },
    /// Flow composition audit on the standard case set.
    Flow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Suite {
    Core,
    Metaplectic,
    Weyl,
    Offdiag,
    Ndim,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    Annb1,
    Annb2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AuditKind {
    Convention,
    Meta,
    Theorem1,
    Pushforward,
    Lagrangian,
}

/// Grid and quadrature parameters after applying the flags.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Environment {
    pub n: usize,
    pub grid_points: usize,
    pub half_width: f64,
    pub hbar: f64,
    pub radius: f64,
}

impl Environment {
    /// One-dimensional defaults `N = 512, L = 16, ħ = 0.5, R = 8`; the
    /// two-dimensional defaults are `N = 64, L = 8, ħ = 1`.
    pub fn from_flags(f: &GlobalFlags) -> Self {
        let n = f.n.unwrap_or(1);
        let (points, l, h, r) = if n == 2 { (64, 8.0, 1.0, 4.0) } else { (512, 16.0, 0.5, 8.0) };
        Self {
            n,
            grid_points: f.grid_n.unwrap_or(points),
            half_width: f.grid_l.unwrap_or(l),
            hbar: f.hbar.unwrap_or(h),
            radius: f.radius.unwrap_or(r),
        }
    }

    pub fn grid(&self) -> cmeta::Result<GridSpec> {
        GridSpec::new(self.n, self.half_width, self.grid_points, self.hbar)
    }

    /// The one-dimensional grid, ignoring `n`.
    pub fn grid_1d(&self) -> cmeta::Result<GridSpec> {
        if self.n == 1 {
            self.grid()
        } else {
            GridSpec::one_d(512, 16.0, 0.5)
        }
    }

    /// The two-dimensional grid, ignoring `n`.
    pub fn grid_2d(&self) -> cmeta::Result<GridSpec> {
        if self.n == 2 {
            self.grid()
        } else {
            GridSpec::new(2, 8.0, 64, 1.0)
        }
    }
}

/// Everything a command reports. The comparison payload is deterministic for
/// fixed flags; timing lives only in `duration_s`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub checks: Vec<Check>,
    pub environment: Environment,
    pub duration_s: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("cmeta {}\n", self.command.join(" "));
        for c in &self.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Informational => "INFO",
            };
            s.push_str(&format!(
                "{tag}  {}  residual {:.3e}  tol {:.1e}",
                c.name, c.residual, c.tolerance
            ));
            if !c.detail.is_empty() {
                s.push_str(&format!("  {}", c.detail));
            }
            s.push('\n');
        }
        let fails = self.checks.iter().filter(|c| c.status == Status::Fail).count();
        let gates = self.checks.iter().filter(|c| c.status != Status::Informational).count();
        s.push_str(&format!(
            "{} of {gates} checks passed, {} informational ({:.1}s)\n",
            gates - fails,
            self.checks.len() - gates,
            self.duration_s
        ));
        s
    }
}

/// A failure that maps to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<cmeta::Error> for UsageError {
    fn from(e: cmeta::Error) -> Self {
        Self(e.to_string())
    }
}

impl From<std::io::Error> for UsageError {
    fn from(e: std::io::Error) -> Self {
        Self(e.to_string())
    }
}

/// What a command produced besides its checks.
pub struct Output {
    pub checks: Vec<Check>,
    /// Printed instead of the check list in text mode (tables).
    pub text: Option<String>,
}

impl Output {
    pub fn checks(checks: Vec<Check>) -> Self {
        Self { checks, text: None }
    }
}

/// Parses arguments, runs the command and prints the outcome; returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    if let Some(t) = cli.flags.threads {
        // fails only if a pool already exists, as when run repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let env = Environment::from_flags(&cli.flags);
    let start = Instant::now();
    let result = match &cli.command {
        Command::Verify { suite } => suites::run_suite(*suite, &env).map(Output::checks),
        Command::Table { name, t } => commands::table(*name, *t, &env, &cli.flags),
        Command::Propagate { s_file, alpha, z } => commands::propagate_cmd(s_file, alpha, z, &cli.flags),
        Command::Quantize { symbol, alpha } => commands::quantize(symbol, alpha, &env, &cli.flags),
        Command::Wigner { operator } => commands::wigner(operator, &cli.flags),
        Command::Audit { kind } => commands::audit(*kind, &env),
        Command::Flow => commands::flow(),
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let report = RunReport {
        command: args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect(),
        checks: output.checks,
        environment: env,
        duration_s: start.elapsed().as_secs_f64(),
    };
    let rendered = if cli.flags.json {
        serde_json::to_string_pretty(&report).expect("serializable report")
    } else {
        match output.text {
            Some(t) => t,
            None => report.to_text(),
        }
    };
    println!("{rendered}");
    // Propagate writes into a directory; table and quantize handle their own files.
    if let (Some(path), Command::Verify { .. } | Command::Audit { .. } | Command::Flow) = (&cli.flags.out, &cli.command) {
        let body = serde_json::to_string_pretty(&report).expect("serializable report");
        if let Err(e) = std::fs::write(path, body) {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    }
    report.exit_code()
}
