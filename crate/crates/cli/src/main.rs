fn main() {
    std::process::exit(tweettopic_cli::run(std::env::args_os()));
}
