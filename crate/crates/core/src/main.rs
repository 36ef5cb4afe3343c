fn main() {
    std::process::exit(membrane_sandwich::cli::run(std::env::args_os()));
}
