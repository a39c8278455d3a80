fn main() {
    std::process::exit(perturbnet::cli::run(std::env::args_os()));
}
