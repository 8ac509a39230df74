fn main() {
    orchard_cli::init_threads();
    std::process::exit(orchard_cli::run(std::env::args_os()));
}
