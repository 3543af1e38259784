fn main() {
    std::process::exit(graphon_lqg_cli::run(std::env::args_os()));
}
