fn main() {
    std::process::exit(stvmlu::cli::run(std::env::args_os()));
}
