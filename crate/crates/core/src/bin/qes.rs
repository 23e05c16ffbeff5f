fn main() {
    std::process::exit(qes_core::cli::run(std::env::args_os()));
}
