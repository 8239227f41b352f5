fn main() {
    std::process::exit(dyadic_cascade::cli::dispatch(std::env::args_os()));
}
