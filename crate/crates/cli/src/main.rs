fn main() {
    std::process::exit(xmec_cli::run(std::env::args_os()));
}
