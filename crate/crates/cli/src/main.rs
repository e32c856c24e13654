fn main() {
    std::process::exit(measure_heat_cli::run(std::env::args_os()));
}
