fn main() {
    std::process::exit(renass::cli::main_entry(std::env::args_os()));
}
