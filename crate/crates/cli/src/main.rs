fn main() {
    let code =
        exact_coreset_cli::main_with_args(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
