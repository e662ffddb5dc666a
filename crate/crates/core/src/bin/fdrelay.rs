fn main() {
    std::process::exit(fdrelay::cli::cli_main(std::env::args_os()));
}
