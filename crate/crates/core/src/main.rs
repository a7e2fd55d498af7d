use clap::Parser;

fn main() {
    let cli = cvqpu::cli::Cli::parse();
    std::process::exit(cvqpu::cli::dispatch(cli));
}
