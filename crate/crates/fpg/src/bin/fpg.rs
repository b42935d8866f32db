fn main() {
    fpg::cli::init_threads();
    std::process::exit(fpg::cli::run(std::env::args_os()));
}
