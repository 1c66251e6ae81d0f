fn main() {
    env_logger::init();
    let code = ensemble::cli::run(std::env::args(), ensemble::cli::Console::stdio());
    std::process::exit(code);
}
