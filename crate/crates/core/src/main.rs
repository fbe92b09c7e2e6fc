fn main() {
    std::process::exit(cmanet::cli::run(std::env::args_os()));
}
