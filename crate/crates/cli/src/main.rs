fn main() {
    std::process::exit(epimove::cli_main(std::env::args_os()));
}
