fn main() {
    std::process::exit(rt_spectra::cli::main_from_args(std::env::args_os()));
}
