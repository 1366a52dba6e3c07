fn main() {
    std::process::exit(owb_core::cli::run(std::env::args_os()));
}
