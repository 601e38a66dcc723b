//! Drives the command-line entry point with a TOML configuration, the same
//! way the `micromacro` binary does.
//!
//! Usage: `config_run [config.toml] [command]`, command defaults to `run`.

fn main() {
    let dir = env!("CARGO_MANIFEST_DIR");
    let mut args = std::env::args().skip(1);
    let config = args.next().unwrap_or_else(|| format!("{dir}/examples/configs/fene_periodic.toml"));
    let command = args.next().unwrap_or_else(|| "run".into());
    let code = micromacro::cli::run_cli(["micromacro", command.as_str(), "--config", config.as_str()]);
    if code == 0 {
        println!("outputs written to the directory named in the config");
    }
    std::process::exit(code);
}
