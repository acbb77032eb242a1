fn main() {
    std::process::exit(lft::cli::run(std::env::args_os()));
}
