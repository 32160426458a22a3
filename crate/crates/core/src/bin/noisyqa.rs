fn main() {
    std::process::exit(noisyqa::cli::dispatch(std::env::args_os()));
}
