fn main() {
    std::process::exit(tkjump_tools::cli::run(std::env::args_os()));
}
