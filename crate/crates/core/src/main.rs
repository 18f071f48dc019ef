fn main() {
    env_logger::init();
    std::process::exit(odv_saliency::cli::run(std::env::args().collect()));
}
