fn main() {
    let mut stdout = std::io::stdout();
    std::process::exit(lbgnn::harness::cli::run_cli(std::env::args(), &mut stdout));
}
