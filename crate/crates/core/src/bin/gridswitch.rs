fn main() {
    std::process::exit(gridswitch::cli::run(std::env::args_os()));
}
