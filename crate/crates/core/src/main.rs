fn main() {
    std::process::exit(deconv_hazard::cli::run(std::env::args_os()));
}
