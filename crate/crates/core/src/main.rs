fn main() {
    std::process::exit(ssvep_core::cli::run(std::env::args_os()));
}
