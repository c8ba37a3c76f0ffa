//! Command-line runs and the HTTP prediction service.

pub mod commands;
pub mod config;
pub mod query;
pub mod serve;

use std::collections::BTreeMap;
use std::ffi::OsString;

use clap::builder::PossibleValuesParser;
use clap::parser::ValueSource;
use clap::{Arg, ArgAction, ArgMatches, Command};

use config::{OptKind, RunConfig, COMMANDS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    /// Bad invocation; nothing has been written.
    #[error("{0}")]
    Usage(String),
    /// The inputs could not be processed.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    pacc::chem::ChemError,
    pacc::netprop::NetpropError,
    pacc::data::DataError,
    pacc::models::ModelError,
    pacc::train::TrainError,
    pacc::analysis::AnalysisError
);

pub fn cli() -> Command {
    let mut cmd = Command::new("pacc")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Drug-sensitivity prediction from SMILES and gene expression")
        .subcommand_required(true)
        .arg(Arg::new("config").long("config").global(true).value_name("PATH").help("flat key = value config; flags take precedence"))
        .arg(Arg::new("seed").long("seed").global(true).value_name("N").help("seed recorded in every output (default 0)"))
        .arg(Arg::new("out").long("out").global(true).value_name("DIR").help("run directory (default pacc-out)"));
    for spec in COMMANDS {
        let mut sub = Command::new(spec.name).about(spec.about);
        if let Some((name, values)) = spec.action {
            sub = sub.arg(Arg::new(name).required(true).value_parser(PossibleValuesParser::new(values.iter().copied())));
        }
        for o in spec.opts {
            let help = match o.default {
                Some(d) => format!("{} [default: {d}]", o.help),
                None => o.help.to_string(),
            };
            let mut arg = Arg::new(o.name).long(o.name).help(help);
            arg = match o.kind {
                OptKind::Path => arg.value_name("PATH"),
                OptKind::Value => arg.value_name("VALUE").allow_hyphen_values(true),
                OptKind::Switch => arg.value_name("BOOL").num_args(0..=1).default_missing_value("true"),
            };
            sub = sub.arg(arg);
        }
        if spec.model_overrides {
            sub = sub.arg(Arg::new("model").long("model").value_name("KEY=VALUE").action(ArgAction::Append).help("model spec override, repeatable"));
        }
        cmd = cmd.subcommand(sub);
    }
    cmd
}

fn from_command_line(m: &ArgMatches, id: &str) -> Option<String> {
    (m.value_source(id) == Some(ValueSource::CommandLine)).then(|| m.get_one::<String>(id).cloned()).flatten()
}

fn resolve(m: &ArgMatches) -> Result<RunConfig, CliError> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let spec = config::command(name).expect("subcommands come from the table");
    let file = match sub.get_one::<String>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("--config: {path}: {e}")))?;
            config::parse_config(&text)?
        }
        None => BTreeMap::new(),
    };
    let mut flags = BTreeMap::new();
    for key in ["seed", "out"].into_iter().chain(spec.opts.iter().map(|o| o.name)) {
        if let Some(v) = from_command_line(sub, key) {
            flags.insert(key.to_string(), v);
        }
    }
    if spec.model_overrides {
        for kv in sub.get_many::<String>("model").into_iter().flatten() {
            let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--model: expected KEY=VALUE, got {kv:?}")))?;
            flags.insert(format!("model.{}", k.trim()), v.trim().to_string());
        }
    }
    let action = spec.action.and_then(|(id, _)| sub.get_one::<String>(id).cloned());
    RunConfig::resolve(spec, action, file, flags, std::env::var("PACC_THREADS").ok())
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run<I, T>(argv: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = cli().try_get_matches_from(argv).map_err(|e| CliError::Usage(e.render().to_string()))?;
    let cfg = resolve(&matches)?;
    commands::execute(&cfg)
}

/// Runs `argv` and returns the process exit code, printing errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    match cli().try_get_matches_from(&argv) {
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) if e.kind() == clap::error::ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            let _ = e.print();
            return EXIT_USAGE;
        }
        _ => {}
    }
    match run(argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            match &e {
                CliError::Usage(m) if m.contains("Usage:") => eprint!("{m}"),
                CliError::Usage(m) => eprintln!("error: {m}\n\n{}", cli().render_usage()),
                CliError::Data(m) => eprintln!("error: {m}"),
            }
            e.exit_code()
        }
    }
}
