fn main() {
    std::process::exit(repmix::cli::run(std::env::args_os()));
}
