fn main() {
    std::process::exit(clozebias::cli::dispatch(std::env::args_os()));
}
