fn main() {
    std::process::exit(ebsd_cs::cli::run(std::env::args_os()));
}
