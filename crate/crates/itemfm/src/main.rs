fn main() {
    std::process::exit(itemfm::cli::run(std::env::args_os()));
}
