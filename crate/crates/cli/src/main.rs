fn main() {
    std::process::exit(polyloewner_cli::execute(std::env::args_os()));
}
