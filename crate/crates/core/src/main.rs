fn main() {
    std::process::exit(cluster_dcg::cli::main_entry(std::env::args_os()));
}
