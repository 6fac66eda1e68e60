fn main() {
    std::process::exit(speech_unlearn::cli::run(std::env::args_os()));
}
