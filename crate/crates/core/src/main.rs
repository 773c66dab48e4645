fn main() { std::process::exit(qmeasure::cli::main()) }
