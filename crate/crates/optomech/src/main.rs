fn main() {
    std::process::exit(optomech::cli::main_entry());
}
