fn main() {
    std::process::exit(ampscope::cli::run(std::env::args_os()));
}
