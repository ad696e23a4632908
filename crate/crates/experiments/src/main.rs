use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{value_parser, Arg, ArgMatches, Command};
use coil::io::format_sig6;
use coil_experiments::commands::{self, ReconstructArgs};
use coil_experiments::config::{ExperimentConfig, MethodSpec, Settings, KEYS};

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).value_name("PATH").value_parser(value_parser!(PathBuf)).help(help)
}

fn cli() -> Command {
    let mut cmd = Command::new("coil")
        .about("Sparse-view CT experiments with coordinate-based measurement fields")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(path_arg("config", "key = value settings file").global(true));
    for &(key, default, help) in KEYS {
        let mut arg = Arg::new(key)
            .long(key)
            .global(true)
            .value_name("VALUE")
            .help_heading("Settings")
            .help(format!("{help} [default: {default}]"));
        if key == "output_dir" {
            arg = arg.visible_alias("output-dir");
        }
        cmd = cmd.arg(arg);
    }
    cmd.subcommand(Command::new("simulate").about("Write the phantom and the clean and noisy sinograms of every cell"))
        .subcommand(
            Command::new("train-field")
                .about("Fit a measurement field to a sinogram")
                .arg(path_arg("input", "sinogram to fit").required(true)),
        )
        .subcommand(
            Command::new("query-field")
                .about("Synthesise a dense sinogram from a trained field")
                .arg(path_arg("field", "trained field").required(true))
                .arg(
                    Arg::new("detectors")
                        .long("detectors")
                        .value_name("N")
                        .value_parser(value_parser!(usize))
                        .help("detector count of the target geometry [default: phantom_side]"),
                ),
        )
        .subcommand(
            Command::new("reconstruct")
                .about("Reconstruct an image from a measured sinogram")
                .arg(path_arg("measured", "measured sinogram").required(true))
                .arg(path_arg("field", "trained field used for the blended data term and fbp_coil"))
                .arg(path_arg("truth", "reference image for the SNR column"))
                .arg(Arg::new("method").long("method").required(true).help("fbp, fbp_coil, fista_tv, gm_red or pnp_fista"))
                .arg(
                    Arg::new("alpha")
                        .long("alpha")
                        .value_parser(value_parser!(f64))
                        .help("blending weight (default 0.5 with a field, else 0)"),
                )
                .arg(Arg::new("id").long("id").default_value("run").help("experiment id in the metrics row"))
                .arg(
                    Arg::new("input-snr")
                        .long("input-snr")
                        .value_parser(value_parser!(f64))
                        .help("input SNR recorded in the metrics row"),
                ),
        )
        .subcommand(Command::new("grid").about("Run simulate, train and reconstruct over every (views, SNR) cell"))
        .subcommand(Command::new("ffm-ablation").about("Compare fields trained with each Fourier feature mapping"))
        .subcommand(
            Command::new("evaluate")
                .about("SNR of one array against a reference")
                .arg(path_arg("estimate", "array to score").required(true))
                .arg(path_arg("reference", "reference array").required(true)),
        )
}

fn settings(m: &ArgMatches) -> Result<ExperimentConfig> {
    let mut s = Settings::default();
    if let Some(path) = m.get_one::<PathBuf>("config") {
        s.apply_file(path)?;
    }
    for &(key, _, _) in KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            s.set(key, v)?;
        }
    }
    ExperimentConfig::from_settings(&s)
}

fn path(m: &ArgMatches, name: &str) -> PathBuf {
    m.get_one::<PathBuf>(name).expect("required by clap").clone()
}

fn run(matches: &ArgMatches) -> Result<bool> {
    let (name, m) = matches.subcommand().expect("subcommand required");
    if name == "evaluate" {
        let snr = commands::evaluate(&path(m, "estimate"), &path(m, "reference"))?;
        println!("{}", format_sig6(snr));
        return Ok(true);
    }
    let cfg = settings(m)?;
    match name {
        "simulate" => {
            for p in commands::simulate(&cfg)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        "train-field" => {
            let (field, loss, last) = commands::train_field(&cfg, &path(m, "input"))?;
            println!("{}\n{}", field.display(), loss.display());
            eprintln!("final training loss {}", format_sig6(last));
            Ok(true)
        }
        "query-field" => {
            let detectors = m.get_one::<usize>("detectors").copied().unwrap_or(cfg.phantom_side);
            println!("{}", commands::query_field(&cfg, &path(m, "field"), detectors)?.display());
            Ok(true)
        }
        "reconstruct" => {
            let method = m.get_one::<String>("method").expect("required").parse()?;
            let args = ReconstructArgs {
                measured: path(m, "measured"),
                field: m.get_one::<PathBuf>("field").cloned(),
                method: MethodSpec::new(method, m.get_one::<f64>("alpha").copied())?,
                truth: m.get_one::<PathBuf>("truth").cloned(),
                experiment_id: m.get_one::<String>("id").expect("defaulted").clone(),
                input_snr_db: m.get_one::<f64>("input-snr").copied().unwrap_or(f64::NAN),
            };
            let (out, record) = commands::reconstruct(&cfg, &args)?;
            println!("{}", out.display());
            println!("{}", record.to_csv_row()?);
            Ok(true)
        }
        "grid" => commands::grid(&cfg),
        "ffm-ablation" => commands::ffm_ablation(&cfg),
        other => unreachable!("unhandled subcommand {other}"),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    match run(&matches) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: some cells failed; see the nan rows");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
