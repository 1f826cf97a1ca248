fn main() {
    std::process::exit(riccidegen::cli::main_entry());
}
