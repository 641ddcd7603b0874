fn main() {
    std::process::exit(soilfuse_cli::run(std::env::args_os()));
}
