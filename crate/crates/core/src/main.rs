fn main() {
    std::process::exit(qacme::cli::dispatch(std::env::args_os()));
}
