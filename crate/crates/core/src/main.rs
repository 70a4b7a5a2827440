fn main() {
    std::process::exit(hurstlab::cli::run(std::env::args_os()));
}
