fn main() {
    std::process::exit(oculobench_cli::run(std::env::args_os()));
}
