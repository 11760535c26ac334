fn main() {
    std::process::exit(sfid::cli::run(std::env::args_os()));
}
