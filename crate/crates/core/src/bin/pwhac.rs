fn main() {
    std::process::exit(pwhac::cli::run(std::env::args_os()));
}
