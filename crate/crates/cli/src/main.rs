fn main() {
    std::process::exit(overlapsim_cli::run(std::env::args_os()));
}
