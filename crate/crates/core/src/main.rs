fn main() {
    std::process::exit(pcfg_core::cli::run());
}
