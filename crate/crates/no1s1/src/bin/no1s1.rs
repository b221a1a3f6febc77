fn main() {
    std::process::exit(no1s1::cli::run_main());
}
