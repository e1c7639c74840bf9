fn main() {
    std::process::exit(azsearch_cli::run(std::env::args_os()));
}
