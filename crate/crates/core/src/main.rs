fn main() {
    jointlap::cli::init_logging();
    std::process::exit(jointlap::cli::run(std::env::args_os()));
}
