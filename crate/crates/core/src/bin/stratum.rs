fn main() {
    std::process::exit(stratum::cli::run(std::env::args_os()));
}
