fn main() {
    std::process::exit(neuroisp::cli::dispatch(std::env::args_os()));
}
