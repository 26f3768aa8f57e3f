//! Command-line front end: argument parsing, figure presets and table
//! rendering. The `qdc` binary is a thin wrapper around [`run`].

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adversary::AttackSpec;
use crate::analysis::{
    best_separation_omega, integrated_separation, linspace, mutual_info_maps, stolen_at_cutoff,
    survival_vs_stolen_curve, RunGrid, CODED_BOUND_NOTE,
};
use crate::error::QdcError;
use crate::lattice::{error_probability, omega_for_error, LatticeParams};
use crate::montecarlo::{run_suite, ExperimentPlan, Suite};
use crate::protocol::{ProtocolConfig, SessionLimit};

pub const TABLE_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "qdc", version, about = "Continuous-variable quantum direct communication simulator")]
pub struct Cli {
    /// Master seed for every stochastic step. `simulate` falls back to the
    /// plan's seed, other commands to 1.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-quadrature decoding error of the lattice, or the lattice for a target error.
    Epsilon(EpsilonArgs),
    /// Survival probability versus stolen bits for one or more attacks.
    Curve(CurveArgs),
    /// Mutual-information maps on the (omega, sigma2) plane.
    Heatmap(HeatmapArgs),
    /// Run the sessions of an experiment plan.
    Simulate(SimulateArgs),
    /// Run the Monte Carlo validation suite.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("lattice").required(true).args(["omega", "target_eps"]))]
pub struct EpsilonArgs {
    /// Lattice half-step.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Solve for the lattice half-step giving this error.
    #[arg(long)]
    pub target_eps: Option<f64>,
    /// Noise variance per quadrature (1 for heterodyne detection).
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Built-in preset (fig6, fig9, fig10) or a preset file.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Protocol configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Attack such as `ugqcm:0.05` or `intermittent:1/35:0.4`; repeatable.
    #[arg(long)]
    pub attack: Vec<String>,
    /// Survival level at which stolen bits are reported [default: 0.01].
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Smallest session length in runs [default: 100].
    #[arg(long)]
    pub n_min: Option<f64>,
    /// Largest session length in runs [default: 1e7].
    #[arg(long)]
    pub n_max: Option<f64>,
    /// Log-spaced grid points [default: 200].
    #[arg(long)]
    pub n_grid: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    /// Built-in preset (fig7-8) or a preset file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Repetition-code length.
    #[arg(long)]
    pub n: Option<u32>,
    /// `min:max` of the lattice half-step.
    #[arg(long)]
    pub omega_range: Option<String>,
    /// `min:max` of the cloner noise.
    #[arg(long)]
    pub sigma2_range: Option<String>,
    /// Points along both axes.
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment plan file (JSON).
    #[arg(long)]
    pub plan: PathBuf,
    /// Include the run-by-run transcript.
    #[arg(long)]
    pub transcript: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Default,
    Full,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// `full` multiplies every trial count by ten.
    #[arg(long, value_enum, default_value_t = SuiteArg::Default)]
    pub suite: SuiteArg,
    /// Compare against a deliberately corrupted constant; the suite must fail.
    #[arg(long)]
    pub canary: bool,
}

/// Error reported by the front end, with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<QdcError> for CliError {
    fn from(e: QdcError) -> Self {
        let code = match e {
            QdcError::Domain(_) => EXIT_DOMAIN,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

/// A cell of an output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(round_sig(x))
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Num(x as f64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

/// Round to 9 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Num(x) => x.to_string(),
        Cell::Text(s) => s.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Section {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Num(x) => Some(*x),
                Cell::Text(_) => None,
            })
            .collect()
    }
}

/// Header metadata plus named sections of rows. The CSV and JSON
/// renderings carry the same values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputTable {
    pub schema_version: u32,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub parameters: Vec<(String, String)>,
    pub notes: Vec<String>,
    pub sections: Vec<Section>,
}

impl OutputTable {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            schema_version: TABLE_SCHEMA_VERSION,
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            parameters: Vec::new(),
            notes: Vec::new(),
            sections: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.push((key.into(), value.to_string()));
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Comma-separated, `#` header lines, one `# section:` line before each
    /// section's column row.
    pub fn to_csv(&self) -> Result<String, QdcError> {
        let mut out = String::new();
        out.push_str(&format!("# command: {}\n", self.command));
        out.push_str(&format!("# schema_version: {}\n", self.schema_version));
        out.push_str(&format!("# version: {}\n", self.version));
        out.push_str(&format!("# seed: {}\n", self.seed));
        for (k, v) in &self.parameters {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        for n in &self.notes {
            out.push_str(&format!("# note: {n}\n"));
        }
        for s in &self.sections {
            out.push_str(&format!("# section: {}\n", s.name));
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(&s.columns).map_err(csv_err)?;
            for r in &s.rows {
                w.write_record(r.iter().map(cell_text)).map_err(csv_err)?;
            }
            let bytes = w.into_inner().map_err(|e| QdcError::Io(e.into_error()))?;
            out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, QdcError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn csv_err(e: csv::Error) -> QdcError {
    QdcError::Io(std::io::Error::other(e))
}

/// Curve recipe: configuration, attacks, cutoff and run grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePreset {
    #[serde(default)]
    pub description: String,
    pub config: ProtocolConfig,
    pub attacks: Vec<AttackSpec>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub grid: RunGrid,
}

fn default_cutoff() -> f64 {
    0.01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

/// Information-map recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapPreset {
    #[serde(default)]
    pub description: String,
    pub code_length: u32,
    pub omega: AxisSpec,
    pub sigma2: AxisSpec,
}

/// Built-in presets by name.
pub fn builtin_preset(name: &str) -> Option<&'static str> {
    match name {
        "fig6" => Some(include_str!("../presets/fig6.json")),
        "fig9" => Some(include_str!("../presets/fig9.json")),
        "fig10" => Some(include_str!("../presets/fig10.json")),
        "fig7-8" => Some(include_str!("../presets/fig7-8.json")),
        _ => None,
    }
}

fn load_preset_text(name: &str) -> Result<String, CliError> {
    if let Some(text) = builtin_preset(name) {
        return Ok(text.to_string());
    }
    std::fs::read_to_string(name).map_err(|e| CliError::usage(format!("cannot read preset {name}: {e}")))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid {what}: {e}")))
}

/// What a command produced: a table, or a native report for JSON output.
pub struct Output {
    pub table: OutputTable,
    pub json: Option<String>,
    /// Exit code for a successful run (non-zero when validation fails).
    pub code: i32,
}

impl Output {
    fn table(table: OutputTable) -> Self {
        Self { table, json: None, code: EXIT_OK }
    }

    pub fn render(&self, format: Format) -> Result<String, QdcError> {
        match (format, &self.json) {
            (Format::Csv, _) => self.table.to_csv(),
            (Format::Json, Some(j)) => Ok(j.clone()),
            (Format::Json, None) => self.table.to_json(),
        }
    }
}

pub const DEFAULT_SEED: u64 = 1;

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Epsilon(a) => cmd_epsilon(a, seed).map(Output::table),
        Command::Curve(a) => cmd_curve(a, seed).map(Output::table),
        Command::Heatmap(a) => cmd_heatmap(a, seed).map(Output::table),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Validate(a) => cmd_validate(a, seed),
    }
}

/// Parse, run and print; returns the process exit code.
pub fn main_with_args<I, T, W>(args: I, out: &mut W, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(if code == EXIT_OK { out as &mut dyn Write } else { err }, "{e}");
            return code;
        }
    };
    let output = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            return e.code;
        }
    };
    match output.render(cli.format) {
        Ok(text) => {
            if let Err(e) = out.write_all(text.as_bytes()) {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USAGE;
            }
            output.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            CliError::from(e).code
        }
    }
}

pub fn cmd_epsilon(a: &EpsilonArgs, seed: u64) -> Result<OutputTable, CliError> {
    let mut t = OutputTable::new("epsilon", seed);
    t.param("delta", a.delta);
    let (lat, eps) = match (a.omega, a.target_eps) {
        (Some(o), None) => {
            let lat = LatticeParams::new(o)?;
            (lat, error_probability(&lat, a.delta)?)
        }
        (None, Some(target)) => {
            t.param("target_eps", target);
            let lat = omega_for_error(target, a.delta)?;
            (lat, error_probability(&lat, a.delta)?)
        }
        _ => return Err(CliError::usage("give exactly one of --omega and --target-eps")),
    };
    let mut s = Section::new("epsilon", &["omega", "delta", "epsilon"]);
    s.push(vec![lat.omega().into(), a.delta.into(), eps.into()]);
    t.sections.push(s);
    Ok(t)
}

fn curve_preset(a: &CurveArgs) -> Result<CurvePreset, CliError> {
    let mut preset = match (&a.preset, &a.config) {
        (Some(name), _) => parse_json::<CurvePreset>(&load_preset_text(name)?, "preset")?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            let config: ProtocolConfig = parse_json(&text, "configuration")?;
            CurvePreset {
                description: String::new(),
                config,
                attacks: Vec::new(),
                cutoff: 0.01,
                grid: RunGrid::default(),
            }
        }
        (None, None) => return Err(CliError::usage("give --preset or --config")),
    };
    if !a.attack.is_empty() {
        preset.attacks = a
            .attack
            .iter()
            .map(|s| AttackSpec::parse(s).map_err(|e| CliError::usage(format!("bad attack {s:?}: {e}"))))
            .collect::<Result<_, _>>()?;
    }
    if preset.attacks.is_empty() {
        return Err(CliError::usage("no attack given"));
    }
    if let Some(c) = a.cutoff {
        preset.cutoff = c;
    }
    if let Some(v) = a.n_min {
        preset.grid.min = v;
    }
    if let Some(v) = a.n_max {
        preset.grid.max = v;
    }
    if let Some(v) = a.n_grid {
        preset.grid.points = v;
    }
    if !(preset.cutoff > 0.0 && preset.cutoff < 1.0) {
        return Err(CliError::usage(format!("cutoff must lie in (0, 1), got {}", preset.cutoff)));
    }
    for attack in &preset.attacks {
        if attack.channel_model().is_none() {
            return Err(CliError::usage(format!("curves need a cloner attack, got {}", attack.label())));
        }
    }
    Ok(preset)
}

pub fn cmd_curve(a: &CurveArgs, seed: u64) -> Result<OutputTable, CliError> {
    let preset = curve_preset(a)?;
    let cfg = preset.config;
    cfg.validate()?;
    let mut t = OutputTable::new("curve", seed);
    if let Some(p) = &a.preset {
        t.param("preset", p);
    }
    t.param("omega", cfg.lattice.omega());
    t.param("control_prob", cfg.control_prob);
    t.param("confidence", cfg.confidence);
    t.param("code_length", cfg.code_length);
    t.param("cutoff", preset.cutoff);
    t.param("n_min", preset.grid.min);
    t.param("n_max", preset.grid.max);
    t.param("n_grid", preset.grid.points);
    if cfg.code_length > 1 {
        t.notes.push(CODED_BOUND_NOTE.to_string());
    }
    let mut rows =
        Section::new("curve", &["attack", "omega_freq", "sigma2", "runs", "control_modes", "stolen_bits", "survival"]);
    let mut summary = Section::new("cutoff", &["attack", "omega_freq", "sigma2", "runs", "stolen_bits", "clipped"]);
    for attack in &preset.attacks {
        let curve = survival_vs_stolen_curve(&cfg, attack, &preset.grid)?;
        let label = attack.label();
        let freq = attack.frequency();
        let s2 = attack.sigma2().expect("cloner attack");
        for p in &curve {
            rows.push(vec![
                label.clone().into(),
                freq.into(),
                s2.into(),
                p.runs.into(),
                p.control_modes.into(),
                p.stolen_bits.into(),
                p.survival.into(),
            ]);
        }
        match stolen_at_cutoff(&curve, preset.cutoff) {
            Some(c) => summary.push(vec![
                label.into(),
                freq.into(),
                s2.into(),
                c.runs.into(),
                c.stolen_bits.into(),
                (c.clipped as u64).into(),
            ]),
            None => t.notes.push(format!("{label}: survival stays above the cutoff over the whole grid")),
        }
    }
    t.sections.push(summary);
    t.sections.push(rows);
    Ok(t)
}

fn parse_range(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| CliError::usage(format!("{what} must be min:max, got {s:?}")))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad number {x:?} in {what}")));
    Ok((parse(lo)?, parse(hi)?))
}

fn heatmap_preset(a: &HeatmapArgs) -> Result<HeatmapPreset, CliError> {
    let mut p = match &a.preset {
        Some(name) => parse_json::<HeatmapPreset>(&load_preset_text(name)?, "preset")?,
        None => HeatmapPreset {
            description: String::new(),
            code_length: 35,
            omega: AxisSpec { min: 0.5, max: 2.5, points: 41 },
            sigma2: AxisSpec { min: 0.01, max: 2.0, points: 60 },
        },
    };
    if let Some(n) = a.n {
        p.code_length = n;
    }
    if let Some(r) = &a.omega_range {
        (p.omega.min, p.omega.max) = parse_range(r, "--omega-range")?;
    }
    if let Some(r) = &a.sigma2_range {
        (p.sigma2.min, p.sigma2.max) = parse_range(r, "--sigma2-range")?;
    }
    if let Some(k) = a.resolution {
        p.omega.points = k;
        p.sigma2.points = k;
    }
    for (axis, name) in [(&p.omega, "omega"), (&p.sigma2, "sigma2")] {
        if axis.points == 0 || !(axis.min <= axis.max) || (axis.points > 1 && axis.min == axis.max) {
            return Err(CliError::usage(format!("empty {name} range {axis:?}")));
        }
        if !(axis.min > 0.0) {
            return Err(CliError::usage(format!("{name} range must be positive, got {axis:?}")));
        }
    }
    if p.code_length == 0 || p.code_length % 2 == 0 {
        return Err(CliError::usage(format!("code length must be odd, got {}", p.code_length)));
    }
    Ok(p)
}

pub fn cmd_heatmap(a: &HeatmapArgs, seed: u64) -> Result<OutputTable, CliError> {
    let p = heatmap_preset(a)?;
    let omegas = linspace(p.omega.min, p.omega.max, p.omega.points);
    let sigma2s = linspace(p.sigma2.min, p.sigma2.max, p.sigma2.points);
    let cells = mutual_info_maps(&omegas, &sigma2s, p.code_length as u64)?;
    let mut t = OutputTable::new("heatmap", seed);
    if let Some(name) = &a.preset {
        t.param("preset", name);
    }
    t.param("n", p.code_length);
    t.param("omega_range", format!("{}:{}", p.omega.min, p.omega.max));
    t.param("omega_points", p.omega.points);
    t.param("sigma2_range", format!("{}:{}", p.sigma2.min, p.sigma2.max));
    t.param("sigma2_points", p.sigma2.points);
    let mut map = Section::new("map", &["omega", "sigma2", "i_ab", "i_ae", "mu", "d"]);
    for c in &cells {
        map.push(vec![c.omega.into(), c.sigma2.into(), c.i_ab.into(), c.i_ae.into(), c.mu.into(), c.d.into()]);
    }
    let mut sep = Section::new("separation", &["omega", "integrated_d"]);
    for (o, d) in integrated_separation(&cells, sigma2s.len()) {
        sep.push(vec![o.into(), d.into()]);
    }
    if let Some((o, d)) = best_separation_omega(&cells, sigma2s.len()) {
        let mut best = Section::new("best_separation", &["omega", "integrated_d"]);
        best.push(vec![o.into(), d.into()]);
        t.sections.push(best);
    }
    t.sections.push(sep);
    t.sections.push(map);
    Ok(t)
}

pub fn cmd_simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<Output, CliError> {
    let text = std::fs::read_to_string(&a.plan)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", a.plan.display())))?;
    let mut plan: ExperimentPlan = parse_json(&text, "plan")?;
    if let Some(s) = seed {
        plan.seed = s;
    }
    let seed = plan.seed;
    plan.config.record_transcript |= a.transcript;
    let outcome = plan.run()?;
    let mut t = OutputTable::new("simulate", seed);
    t.param("plan", a.plan.display());
    t.param("attack", plan.attack.label());
    t.param("sessions", plan.sessions);
    t.param(
        "limit",
        match plan.limit {
            SessionLimit::Message => format!("message:{}", plan.message_bits),
            SessionLimit::Runs(n) => format!("runs:{n}"),
            SessionLimit::Controls(m) => format!("controls:{m}"),
        },
    );
    let mut s = Section::new(
        "sessions",
        &[
            "session",
            "systems_used",
            "control_modes",
            "message_modes",
            "aborted",
            "abort_at_run",
            "bits_delivered",
            "bob_logical_errors",
            "eve_logical_bits",
            "eve_logical_errors",
            "statistic",
            "statistic_count",
        ],
    );
    for (i, r) in outcome.sessions.iter().enumerate() {
        s.push(vec![
            (i as u64).into(),
            r.systems_used.into(),
            r.control_modes.into(),
            r.message_modes.into(),
            (r.aborted as u64).into(),
            r.abort_at_run.map_or(Cell::Text(String::new()), Cell::from),
            r.bits_delivered.into(),
            (r.bits_delivered - r.bits_correct_bob).into(),
            r.eve_logical_bits.into(),
            r.eve_logical_errors.into(),
            r.statistic.into(),
            r.statistic_count.into(),
        ]);
    }
    t.sections.push(s);
    let json = serde_json::to_string_pretty(&outcome).map_err(QdcError::from)? + "\n";
    Ok(Output { table: t, json: Some(json), code: EXIT_OK })
}

pub fn cmd_validate(a: &ValidateArgs, seed: u64) -> Result<Output, CliError> {
    let suite = match a.suite {
        SuiteArg::Default => Suite::Default,
        SuiteArg::Full => Suite::Full,
    };
    let report = run_suite(suite, seed, a.canary)?;
    let mut t = OutputTable::new("validate", seed);
    t.param("suite", format!("{suite:?}").to_lowercase());
    t.param("canary", a.canary);
    t.param("pass", report.pass());
    let mut s = Section::new(
        "checks",
        &["check", "trials", "empirical", "analytic", "standard_error", "p_value", "tolerance_se", "pass"],
    );
    for c in &report.checks {
        s.push(vec![
            c.name.clone().into(),
            c.trials.into(),
            c.empirical.into(),
            c.analytic.into(),
            c.standard_error.into(),
            c.p_value.map_or(Cell::Text(String::new()), Cell::from),
            c.tolerance_se.into(),
            (c.pass as u64).into(),
        ]);
    }
    t.sections.push(s);
    let json = serde_json::to_string_pretty(&report).map_err(QdcError::from)? + "\n";
    let code = if report.pass() { EXIT_OK } else { EXIT_VALIDATION };
    Ok(Output { table: t, json: Some(json), code })
}
