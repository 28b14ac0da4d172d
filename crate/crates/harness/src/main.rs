fn main() {
    std::process::exit(ldpr_harness::cli::run(std::env::args_os()));
}
