fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(fdime_cli::main_with(&argv));
}
