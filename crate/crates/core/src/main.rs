fn main() {
    std::process::exit(joganic::pipeline::run_cli(std::env::args_os()));
}
