fn main() {
    std::process::exit(ttemb::cli::main_entry());
}
