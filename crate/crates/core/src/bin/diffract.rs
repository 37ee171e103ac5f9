fn main() {
    std::process::exit(diffract::cli::cli_main(std::env::args_os()));
}
