fn main() {
    std::process::exit(fmvae::cli::run(std::env::args_os()));
}
