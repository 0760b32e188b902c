fn main() {
    std::process::exit(thermal_mbqc::cli::main_entry(std::env::args_os()));
}
