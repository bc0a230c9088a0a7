use std::path::PathBuf;
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use serde_json::{Map, Value};

use em_basin::{run_experiment, Error, Experiment, ExperimentConfig, Params};

const USAGE_ERROR: u8 = 2;

#[derive(Clone, Copy)]
enum Kind {
    Usize,
    U64,
    F64,
    UsizeList,
    Path,
    Choice(&'static [&'static str]),
}

/// Config key, value kind, help text. The flag is the key with dashes.
const KEYS: [(&str, Kind, &str); 26] = [
    ("d", Kind::Usize, "Dimension"),
    ("s", Kind::F64, "Signal-to-noise ratio |theta*|/sigma"),
    ("sigma", Kind::F64, "Noise standard deviation"),
    ("a", Kind::F64, "Half-space parameter of the basin D_{a,r}"),
    ("r", Kind::F64, "Ball radius of the basin, in units of |theta*|"),
    ("kappa1", Kind::F64, "Inner-product stability constant"),
    ("kappa2", Kind::F64, "Norm stability constant"),
    ("n", Kind::Usize, "Sample size"),
    ("n_grid", Kind::UsizeList, "Comma-separated sample sizes for the deviation curve"),
    ("probes", Kind::Usize, "Probe points in the region"),
    ("seeds", Kind::Usize, "Independent datasets or meta-seeds"),
    ("m", Kind::Usize, "Random starts per run (largest m for sweep)"),
    ("epsilon", Kind::F64, "Slack in the norm-estimate initializer and the T-hat tail"),
    ("delta", Kind::F64, "Failure probability in the deviation bound"),
    ("quadrature_order", Kind::Usize, "Gauss-Hermite order"),
    ("seed", Kind::U64, "Master seed"),
    ("max_iter", Kind::Usize, "EM iteration cap"),
    ("step_tol", Kind::F64, "Stop when |theta_{t+1} - theta_t| <= step_tol |theta*|"),
    ("draws", Kind::U64, "Monte Carlo draws or replicates"),
    ("c1", Kind::F64, "Validity window: minimum s"),
    ("c2", Kind::F64, "Validity window: r <= c2 s / sqrt(ln(e s))"),
    ("init", Kind::Choice(&["region", "known_norm", "estimated_norm"]), "Starting-point strategy"),
    ("moment_n", Kind::Usize, "Sample size for the T-hat moment check"),
    ("moment_reps", Kind::Usize, "Replicates for the T-hat moment check"),
    ("format", Kind::Choice(&["csv", "json"]), "Trace output format"),
    ("out_dir", Kind::Path, "Output directory"),
];

fn flag_name(key: &str) -> String {
    match key {
        "out_dir" => "out".into(),
        k => k.replace('_', "-"),
    }
}

fn default_text(p: &Params, key: &str) -> String {
    let v = serde_json::to_value(p).expect("params serialize");
    if p.experiment == Experiment::InitProb && key == "r" {
        return "2*sqrt(2d)".into();
    }
    if key == "epsilon" && p.experiment != Experiment::Concentration {
        return "sigma^2/2".into();
    }
    match &v[key] {
        Value::String(s) => s.clone(),
        Value::Array(xs) => xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

fn subcommand(e: Experiment) -> Command {
    let defaults = Params::defaults(e);
    let mut cmd = Command::new(e.as_str()).about(e.about()).arg(
        Arg::new("config")
            .long("config")
            .value_name("PATH")
            .value_parser(value_parser!(PathBuf))
            .help("JSON config file; flags override its values"),
    );
    for (key, kind, help) in KEYS {
        let mut arg = Arg::new(key)
            .long(flag_name(key))
            .help(format!("{help} [default: {}]", default_text(&defaults, key)));
        if key.contains('_') {
            arg = arg.alias(key);
        }
        if key == "out_dir" {
            arg = arg.alias("out-dir");
        }
        arg = match kind {
            Kind::Usize => arg.value_parser(value_parser!(usize)),
            Kind::U64 => arg.value_parser(value_parser!(u64)),
            Kind::F64 => arg.value_parser(value_parser!(f64)).allow_negative_numbers(true),
            Kind::UsizeList => arg.value_parser(value_parser!(usize)).value_delimiter(',').num_args(1..),
            Kind::Path => arg.value_parser(value_parser!(PathBuf)),
            Kind::Choice(options) => arg.value_parser(options.to_vec()),
        };
        cmd = cmd.arg(arg);
    }
    cmd.arg(
        Arg::new("threads")
            .long("threads")
            .value_parser(value_parser!(usize))
            .help("Worker threads (results do not depend on this) [default: all cores]"),
    )
    .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue).help("Print only failing assertions"))
}

fn cli() -> Command {
    Command::new("em-basin")
        .about("Experiments for EM on the symmetric two-component Gaussian mixture")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(Experiment::ALL.map(subcommand))
}

fn flag_overrides(e: Experiment, m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let mut map = Map::new();
    map.insert("experiment".into(), Value::from(e.as_str()));
    for (key, kind, _) in KEYS {
        if m.value_source(key) != Some(ValueSource::CommandLine) {
            continue;
        }
        let value = match kind {
            Kind::Usize => Value::from(*m.get_one::<usize>(key).expect("typed")),
            Kind::U64 => Value::from(*m.get_one::<u64>(key).expect("typed")),
            Kind::F64 => {
                let v = *m.get_one::<f64>(key).expect("typed");
                serde_json::Number::from_f64(v)
                    .map(Value::Number)
                    .ok_or_else(|| Error::Config(vec![format!("`--{}` must be finite", flag_name(key))]))?
            }
            Kind::UsizeList => Value::from(m.get_many::<usize>(key).expect("typed").copied().collect::<Vec<_>>()),
            Kind::Path => Value::from(m.get_one::<PathBuf>(key).expect("typed").to_string_lossy().into_owned()),
            Kind::Choice(_) => Value::from(m.get_one::<String>(key).expect("typed").as_str()),
        };
        map.insert(key.into(), value);
    }
    ExperimentConfig::from_value(Value::Object(map))
}

fn effective_config(e: Experiment, m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let flags = flag_overrides(e, m)?;
    let base = match m.get_one::<PathBuf>("config") {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(file_experiment) = base.experiment {
        if file_experiment != e {
            return Err(Error::Config(vec![format!(
                "config file is for `{file_experiment}` but the subcommand is `{e}`"
            )]));
        }
    }
    base.merged(&flags)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { USAGE_ERROR } else { 0 });
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let experiment: Experiment = name.parse().expect("registered subcommand");

    if let Some(&threads) = sub.get_one::<usize>("threads") {
        if threads == 0 {
            eprintln!("error: `--threads` must be at least 1");
            return ExitCode::from(USAGE_ERROR);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE_ERROR);
        }
    }
    let quiet = sub.get_flag("quiet");

    let report = match effective_config(experiment, sub).and_then(|c| run_experiment(&c)) {
        Ok(r) => r,
        Err(e) => {
            match &e {
                Error::Config(list) => {
                    eprintln!("error: invalid config");
                    for item in list {
                        eprintln!("  - {item}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            return ExitCode::from(USAGE_ERROR);
        }
    };
    for a in &report.summary.assertions {
        if quiet && a.pass {
            continue;
        }
        println!(
            "{} {}: observed {:.6e}, bound {:.6e}",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            a.observed,
            a.bound
        );
    }
    if !quiet {
        println!(
            "{}: {} artifacts in {} ({:.2}s)",
            experiment,
            report.artifacts.len(),
            report.out_dir.display(),
            report.runtime_seconds
        );
    }
    ExitCode::from(if report.all_pass() { 0 } else { 1 })
}
