fn main() {
    std::process::exit(taxoq_cli::run(std::env::args_os()));
}
