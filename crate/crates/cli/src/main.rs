fn main() {
    std::process::exit(ccim_cli::run(std::env::args_os()));
}
