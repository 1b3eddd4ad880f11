fn main() { std::process::exit(hemoid::cli::run()) }
