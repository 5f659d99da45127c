fn main() {
    std::process::exit(lowrex::xcli::cli_main(std::env::args_os()));
}
