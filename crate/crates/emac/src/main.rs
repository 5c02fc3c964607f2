fn main() {
    std::process::exit(emac::bench::cli::cli_main(std::env::args_os()));
}
