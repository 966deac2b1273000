fn main() {
    std::process::exit(svaseg::cli::run(std::env::args_os()));
}
