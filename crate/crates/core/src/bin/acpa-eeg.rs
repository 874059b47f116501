fn main() {
    std::process::exit(acpa_eeg::cli::run(std::env::args_os()));
}
