fn main() {
    std::process::exit(coordgan::cli::main_with(std::env::args_os()));
}
