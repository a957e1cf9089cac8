//! `helfrich` command line driver.
//!
//! Every configuration key is also a long flag (`--kb 0.01`, `--cV 1`, ...);
//! flags override values read from `--config`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches, Command};
use helfrich::io::config::KEYS;
use helfrich::io::{parse_config, RunConfig};
use helfrich::Error;

/// Outcome of a subcommand that ran to completion.
pub enum Outcome {
    Success,
    /// The optimizer hit its iteration limit or the derivative check failed.
    NotConverged,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Degenerate(_) | Error::Curving(_) => 2,
        Error::Solver(_) => 3,
        Error::Config { .. } | Error::InvalidArgument(_) | Error::Io { .. } | Error::Parse { .. } | Error::Structural(_) => 1,
    }
}

fn config_args(cmd: Command) -> Command {
    let cmd = cmd.arg(
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("Configuration file"),
    );
    KEYS.iter().fold(cmd, |cmd, (section, key)| {
        let mut arg = Arg::new(*key)
            .long(*key)
            .value_name("VALUE")
            .allow_hyphen_values(true)
            .help(format!("Override [{section}] {key}"))
            .help_heading("Configuration overrides");
        if *key == "subdivisions" {
            arg = arg.visible_alias("subdiv");
        }
        cmd.arg(arg)
    })
}

fn cli() -> Command {
    let mesh = Command::new("mesh").about("Generate benchmark geometry and write it as OBJ").arg(
        Arg::new("output")
            .long("output")
            .short('o')
            .value_name("PATH")
            .value_parser(clap::value_parser!(PathBuf))
            .help("OBJ path [default: <directory>/mesh.obj]"),
    );
    let curvature = Command::new("curvature")
        .about("Solve for the lifted curvature and report energy and errors")
        .arg(
            Arg::new("vtk")
                .long("vtk")
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Also write κ and σ to this VTK file"),
        );
    let fdcheck = Command::new("fdcheck")
        .about("Compare the shape derivative with central differences")
        .arg(
            Arg::new("ladder")
                .long("ladder")
                .value_name("T,...")
                .default_value("1e-2,1e-3,1e-4")
                .help("Decreasing step sizes"),
        )
        .arg(
            Arg::new("probe_seed")
                .long("probe-seed")
                .value_name("N")
                .value_parser(clap::value_parser!(u64))
                .default_value("7")
                .help("Seed of the random smooth perturbation"),
        );
    let optimize = Command::new("optimize").about("Minimize the penalized bending energy");
    let sweep = Command::new("sweep")
        .about("Optimize from the prolate or oblate start at area 4π for several reduced volumes")
        .arg(
            Arg::new("volumes")
                .long("volumes")
                .value_name("V,...")
                .default_value("0.9,0.8,0.713")
                .help("Target reduced volumes"),
        );
    Command::new("helfrich")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Mean curvature and bending energy minimization on triangulated surfaces")
        .subcommand_required(true)
        .arg(
            Arg::new("verbose")
                .short('v')
                .long("verbose")
                .action(ArgAction::Count)
                .global(true)
                .help("More log output (-v info, -vv debug)"),
        )
        .subcommands([mesh, curvature, fdcheck, optimize, sweep].map(config_args))
}

fn load_config(m: &ArgMatches) -> helfrich::Result<RunConfig> {
    let mut config = match m.get_one::<PathBuf>("config") {
        Some(path) => parse_config(path)?,
        None => RunConfig::default(),
    };
    for (_, key) in KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            config.set(key, value).map_err(|message| Error::Config {
                line: None,
                message: format!("--{key}: {message}"),
            })?;
        }
    }
    config.validate()?;
    Ok(config)
}

fn run(m: &ArgMatches) -> helfrich::Result<Outcome> {
    let (name, sub) = m.subcommand().expect("subcommand is required");
    let config = load_config(sub)?;
    match name {
        "mesh" => commands::mesh(&config, sub.get_one::<PathBuf>("output")),
        "curvature" => commands::curvature(&config, sub.get_one::<PathBuf>("vtk")),
        "fdcheck" => commands::fdcheck(
            &config,
            &commands::parse_list(sub.get_one::<String>("ladder").expect("has default"), "ladder")?,
            *sub.get_one::<u64>("probe_seed").expect("has default"),
        ),
        "optimize" => commands::optimize(&config),
        "sweep" => commands::sweep(
            &config,
            &commands::parse_list(sub.get_one::<String>("volumes").expect("has default"), "volumes")?,
        ),
        _ => unreachable!("unknown subcommand {name}"),
    }
}

fn main() -> ExitCode {
    let m = cli().get_matches();
    let level = match m.get_count("verbose") {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(&m) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn overrides_apply_after_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "[physics]\nkb = 0.2\nH0 = 0.5\n[geometry]\nsubdivisions = 1\n").unwrap();
        let m = cli().get_matches_from([
            "helfrich",
            "optimize",
            "--config",
            path.to_str().unwrap(),
            "--kb",
            "0.5",
            "--subdiv",
            "3",
            "--H0",
            "-1.5",
        ]);
        let c = load_config(m.subcommand().unwrap().1).unwrap();
        assert_eq!(c.optimizer.params.bending_modulus, 0.5);
        assert_eq!(c.optimizer.params.spontaneous_curvature, -1.5);
        assert_eq!(c.geometry.subdivisions, 3);
    }

    #[test]
    fn exit_codes() {
        let m = cli().get_matches_from(["helfrich", "mesh", "--alpha", "-1"]);
        let e = load_config(m.subcommand().unwrap().1).unwrap_err();
        assert_eq!(exit_code(&e), 1);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 2);
        assert_eq!(exit_code(&Error::Solver("x".into())), 3);
    }
}
