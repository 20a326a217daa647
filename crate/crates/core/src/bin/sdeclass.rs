fn main() {
    std::process::exit(sdeclass::harness::cli_main(std::env::args_os()));
}
