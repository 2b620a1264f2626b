fn main() {
    std::process::exit(nugget_cli::main_with(std::env::args_os()));
}
