fn main() {
    std::process::exit(sdqos_cli::app::main_entry());
}
