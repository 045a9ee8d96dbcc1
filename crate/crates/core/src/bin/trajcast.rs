fn main() {
    std::process::exit(trajcast::cli::dispatch(std::env::args_os()));
}
