fn main() {
    std::process::exit(micromacro::cli::run_cli(std::env::args_os()));
}
