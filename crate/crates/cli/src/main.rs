fn main() {
    std::process::exit(salbfgs_cli::run(std::env::args_os()));
}
