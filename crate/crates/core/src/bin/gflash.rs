fn main() {
    std::process::exit(grassroots_flash::cli::main());
}
