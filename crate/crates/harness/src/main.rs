fn main() {
    std::process::exit(replaylab::cli::run(std::env::args_os()));
}
