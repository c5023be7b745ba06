fn main() {
    std::process::exit(inswitch::cli::run(std::env::args_os()));
}
