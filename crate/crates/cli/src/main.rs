fn main() {
    std::process::exit(packorder_cli::main_exit_code());
}
