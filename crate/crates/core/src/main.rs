fn main() {
    std::process::exit(annotator_trust::cli::main_with_args(std::env::args_os()));
}
