fn main() {
    std::process::exit(origintrace_cli::run_cli(std::env::args_os()));
}
