fn main() {
    std::process::exit(cdiou::cli::main_with(std::env::args_os()));
}
