fn main() {
    std::process::exit(virl::cli::run(std::env::args_os()));
}
