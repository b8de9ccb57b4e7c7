fn main() {
    std::process::exit(fairmatch::cli::main_with_args(std::env::args_os()));
}
