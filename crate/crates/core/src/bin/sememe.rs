fn main() {
    std::process::exit(sememe_predict::cli::main(std::env::args_os()));
}
