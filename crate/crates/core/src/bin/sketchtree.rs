fn main() {
    std::process::exit(sketchtree::cli::run(std::env::args_os()));
}
