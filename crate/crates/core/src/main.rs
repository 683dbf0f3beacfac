fn main() {
    std::process::exit(so3vae::cli::run());
}
