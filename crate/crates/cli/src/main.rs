fn main() {
    std::process::exit(verbsense_cli::run(std::env::args_os()));
}
