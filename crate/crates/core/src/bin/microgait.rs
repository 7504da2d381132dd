fn main() {
    std::process::exit(microgait::cli::main(std::env::args_os()));
}
