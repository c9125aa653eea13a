fn main() {
    std::process::exit(gmc_cli::run(std::env::args_os()));
}
