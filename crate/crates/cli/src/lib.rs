//! Command line front end. Every command writes `report.json` (and CSV
//! tables) into the output directory and maps its outcome to an exit code:
//! 0 on success, 2 when a check fails, 1 on a usage error.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use platycosm_core::rng::ForkRng;

pub mod commands;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CHECK: i32 = 2;

pub const DEFAULT_SEED: u64 = 7;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read input `{path}`: {source}")]
    Input { path: String, source: std::io::Error },
    #[error("malformed JSON input: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Tolerances by name. Reads are recorded so a report embeds exactly the
/// values a command consulted.
#[derive(Debug, Clone)]
pub struct Tolerances {
    values: BTreeMap<&'static str, f64>,
    used: RefCell<BTreeMap<&'static str, f64>>,
}

const DEFAULT_TOLERANCES: [(&str, f64); 14] = [
    ("class", 1e-9),
    ("relation", 1e-9),
    ("solver", 1e-9),
    ("comm", 1e-8),
    ("closed", 1e-8),
    ("dterm", 1e-7),
    ("sheet", 1e-10),
    ("roundtrip", 1e-9),
    ("lagrangian", 1e-10),
    ("g2", 1e-12),
    ("parameter", 1e-6),
    ("invariant", 1e-9),
    ("calibration", 1e-8),
    ("section", 1e-9),
];

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { values: DEFAULT_TOLERANCES.into_iter().collect(), used: RefCell::new(BTreeMap::new()) }
    }
}

impl Tolerances {
    pub fn names() -> Vec<&'static str> {
        DEFAULT_TOLERANCES.iter().map(|(k, _)| *k).collect()
    }

    /// Apply `key=value` overrides.
    pub fn with_overrides(overrides: &[String]) -> Result<Self, CliError> {
        let mut t = Tolerances::default();
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("tolerance override `{o}` is not key=value")))?;
            let Some((key, _)) = DEFAULT_TOLERANCES.iter().find(|(name, _)| *name == k.trim()) else {
                return Err(CliError::Usage(format!(
                    "unknown tolerance `{k}` (known: {})",
                    Tolerances::names().join(", ")
                )));
            };
            let v: f64 = v.trim().parse().map_err(|_| CliError::Usage(format!("tolerance `{k}` needs a number, got `{v}`")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Usage(format!("tolerance `{k}` must be positive")));
            }
            t.values.insert(key, v);
        }
        Ok(t)
    }

    pub fn get(&self, key: &'static str) -> f64 {
        let v = self.values[key];
        self.used.borrow_mut().insert(key, v);
        v
    }

    pub fn used(&self) -> Value {
        json!(self.used.borrow().clone())
    }
}

/// A CSV table written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// What a command produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub result: Value,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn new(pass: bool, result: Value) -> Self {
        Outcome { pass, result, tables: Vec::new() }
    }

    /// A module error during a check: the report records it and the run fails.
    pub fn failed(err: impl std::fmt::Display) -> Self {
        Outcome::new(false, json!({ "error": err.to_string() }))
    }
}

/// Run context shared by all commands.
pub struct Ctx {
    pub seed: u64,
    pub tol: Tolerances,
}

impl Ctx {
    pub fn new(seed: u64, tol: Tolerances) -> Self {
        Ctx { seed, tol }
    }

    pub fn rng(&self, label: &str) -> ForkRng {
        platycosm_core::rng::SeedStream::new(self.seed).fork(label)
    }
}

#[derive(Debug, Parser)]
#[command(name = "platycosm", version, about = "Character varieties, harmonic Higgs fields and G2 data on flat 3-manifolds")]
pub struct Cli {
    /// seed for every stochastic step
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// output directory for report.json and CSV tables
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// tolerance override, `key=value` (repeatable)
    #[arg(long = "tol", global = true, value_name = "KEY=VALUE")]
    pub tol: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a presentation of a flat 3-manifold group.
    Verify { name: String },
    /// Character variety computations.
    #[command(subcommand)]
    Char(CharCommand),
    /// Harmonic metrics and Higgs fields.
    #[command(subcommand)]
    Higgs(HiggsCommand),
    /// Spectral covers and the spectral round trip.
    #[command(subcommand)]
    Spectral(SpectralCommand),
    /// G2 structures and the moduli crosscheck.
    #[command(subcommand)]
    G2(G2Command),
    /// The A1 hyperkahler quotient.
    #[command(subcommand)]
    Ale(AleCommand),
}

#[derive(Debug, Subcommand)]
pub enum CharCommand {
    /// Components of the holonomy-fixed locus, plus a sampling check.
    FixedLocus {
        #[arg(long, default_value = "g6")]
        manifold: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// number of sampled fixed classes
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Lift a fixed class to a representation of the whole group.
    Lift {
        #[arg(long, default_value = "g6")]
        manifold: String,
        /// class as JSON (inline or a file path): `[[re,im],[re,im],[re,im]]` or `{"n":..,"rows":..}`
        #[arg(long)]
        point: String,
    },
    /// Isolated classes with central lattice image.
    Rigid {
        #[arg(long, default_value = "g6")]
        manifold: String,
    },
    /// Components predicted by the twisted-sector formula.
    Conjecture {
        #[arg(long, default_value = "g6")]
        manifold: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        samples: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InitKind {
    Identity,
    Random,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct RepSource {
    /// representation as JSON (inline or a file path)
    #[arg(long)]
    pub rep: Option<String>,
    /// named representation fixture
    #[arg(long)]
    pub fixture: Option<String>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct FieldSource {
    /// Higgs field as JSON (inline or a file path)
    #[arg(long)]
    pub field: Option<String>,
    /// named field fixture
    #[arg(long)]
    pub fixture: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum HiggsCommand {
    /// Solve for the harmonic metric of a representation.
    Solve {
        #[command(flatten)]
        source: RepSource,
        #[arg(long, default_value_t = 8)]
        grid: usize,
        #[arg(long, value_enum, default_value_t = InitKind::Identity)]
        init: InitKind,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
    },
    /// Residuals of the Hitchin equations for a given field.
    Residuals {
        #[command(flatten)]
        source: FieldSource,
        /// grid size for fixtures
        #[arg(long, default_value_t = 8)]
        grid: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum SpectralCommand {
    /// Sheets, ramification and monodromy of the spectral cover.
    Cover {
        #[command(flatten)]
        source: FieldSource,
        #[arg(long, default_value_t = 8)]
        grid: usize,
    },
    /// Spectral data followed by reconstruction.
    Roundtrip {
        #[command(flatten)]
        source: FieldSource,
        #[arg(long, default_value_t = 8)]
        grid: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum G2Fixture {
    T3,
    G6,
}

#[derive(Debug, Subcommand)]
pub enum G2Command {
    /// Closedness and adiabatic residuals of a flat fixture.
    Check {
        #[arg(long, value_enum)]
        fixture: G2Fixture,
        #[arg(long, default_value_t = 4)]
        grid: usize,
    },
    /// Which smoothing a class or flat section selects.
    Classify {
        /// `{"Section":[a1,a2,a3]}` or `{"Class":{"n":2,"rows":..}}` (inline or a file path)
        #[arg(long)]
        input: String,
    },
    /// Match the character-variety lines with the flat-section rays.
    Duality {
        #[arg(long, default_value_t = 8)]
        grid: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum AleCommand {
    /// Sample a level set and report the invariant equation.
    Demo {
        /// `chi1,chi2,chi3`
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,0,0")]
        xi: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

impl Command {
    pub fn label(&self) -> String {
        match self {
            Command::Verify { .. } => "verify".into(),
            Command::Char(c) => format!(
                "char {}",
                match c {
                    CharCommand::FixedLocus { .. } => "fixed-locus",
                    CharCommand::Lift { .. } => "lift",
                    CharCommand::Rigid { .. } => "rigid",
                    CharCommand::Conjecture { .. } => "conjecture",
                }
            ),
            Command::Higgs(HiggsCommand::Solve { .. }) => "higgs solve".into(),
            Command::Higgs(HiggsCommand::Residuals { .. }) => "higgs residuals".into(),
            Command::Spectral(SpectralCommand::Cover { .. }) => "spectral cover".into(),
            Command::Spectral(SpectralCommand::Roundtrip { .. }) => "spectral roundtrip".into(),
            Command::G2(G2Command::Check { .. }) => "g2 check".into(),
            Command::G2(G2Command::Classify { .. }) => "g2 classify".into(),
            Command::G2(G2Command::Duality { .. }) => "g2 duality".into(),
            Command::Ale(_) => "ale demo".into(),
        }
    }
}

/// Read a JSON argument: inline when it starts with `{` or `[`, otherwise a file path.
pub fn read_json_arg(arg: &str) -> Result<Value, CliError> {
    let t = arg.trim_start();
    let text = if t.starts_with('{') || t.starts_with('[') {
        arg.to_string()
    } else {
        std::fs::read_to_string(arg).map_err(|source| CliError::Input { path: arg.to_string(), source })?
    };
    Ok(serde_json::from_str(&text)?)
}

/// Dispatch a parsed command.
pub fn execute(cmd: &Command, ctx: &Ctx) -> Result<Outcome, CliError> {
    use commands::*;
    match cmd {
        Command::Verify { name } => verify(ctx, name),
        Command::Char(CharCommand::FixedLocus { manifold, n, samples }) => char_fixed_locus(ctx, manifold, *n, *samples),
        Command::Char(CharCommand::Lift { manifold, point }) => char_lift(ctx, manifold, &read_json_arg(point)?),
        Command::Char(CharCommand::Rigid { manifold }) => char_rigid(ctx, manifold),
        Command::Char(CharCommand::Conjecture { manifold, n, samples }) => char_conjecture(ctx, manifold, *n, *samples),
        Command::Higgs(HiggsCommand::Solve { source, grid, init, max_iter }) => {
            let rep = load_rep(source)?;
            higgs_solve(ctx, &rep, *grid, *init, *max_iter)
        }
        Command::Higgs(HiggsCommand::Residuals { source, grid }) => higgs_residuals(ctx, &load_field(source, *grid)?),
        Command::Spectral(SpectralCommand::Cover { source, grid }) => spectral_cover(ctx, &load_field(source, *grid)?),
        Command::Spectral(SpectralCommand::Roundtrip { source, grid }) => spectral_roundtrip(ctx, &load_field(source, *grid)?),
        Command::G2(G2Command::Check { fixture, grid }) => g2_check(ctx, *fixture, *grid),
        Command::G2(G2Command::Classify { input }) => g2_classify(ctx, &read_json_arg(input)?),
        Command::G2(G2Command::Duality { grid }) => g2_duality(ctx, *grid),
        Command::Ale(AleCommand::Demo { xi, samples }) => {
            let xi: [f64; 3] = xi.as_slice().try_into().map_err(|_| CliError::Usage(format!("--xi needs three values, got {}", xi.len())))?;
            ale_demo(ctx, xi, *samples)
        }
    }
}

/// The report as written to disk: keys sorted, no timings.
pub fn report_json(label: &str, ctx: &Ctx, outcome: &Outcome) -> Value {
    json!({
        "command": label,
        "seed": ctx.seed,
        "tolerances": ctx.tol.used(),
        "pass": outcome.pass,
        "result": outcome.result,
    })
}

pub fn write_outputs(dir: &Path, report: &Value, tables: &[Table]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(dir.join("report.json"), text)?;
    for t in tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", t.name)))?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Parse `argv`, run the command, write the outputs, return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let tol = match Tolerances::with_overrides(&cli.tol) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let ctx = Ctx::new(cli.seed, tol);
    let outcome = match execute(&cli.command, &ctx) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let report = report_json(&cli.command.label(), &ctx, &outcome);
    if let Err(e) = write_outputs(&cli.out, &report, &outcome.tables) {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    if outcome.pass {
        EXIT_OK
    } else {
        eprintln!("check failed, see {}", cli.out.join("report.json").display());
        EXIT_CHECK
    }
}
