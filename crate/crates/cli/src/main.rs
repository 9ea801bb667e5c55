fn main() {
    std::process::exit(varphys_cli::main_with_args(std::env::args_os()));
}
