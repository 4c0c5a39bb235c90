fn main() {
    std::process::exit(chdarcy::cli::main_with(std::env::args_os()));
}
