fn main() {
    std::process::exit(jkext_cli::cli_dispatch(std::env::args_os()));
}
