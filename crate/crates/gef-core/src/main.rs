fn main() { gef_core::cli::main() }
