fn main() {
    std::process::exit(posterior_ratio_harness::cli::main_with(std::env::args_os()));
}
