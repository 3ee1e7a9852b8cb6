fn main() {
    std::process::exit(parsimix::cli::run(std::env::args_os()));
}
