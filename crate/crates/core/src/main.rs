fn main() {
    let code = memwave::harness::cli::cli(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
