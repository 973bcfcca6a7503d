fn main() {
    std::process::exit(lrvlasov::cli::main_with_args(std::env::args_os()));
}
