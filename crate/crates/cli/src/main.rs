fn main() { std::process::exit(dualdress_cli::run(std::env::args().collect())) }
