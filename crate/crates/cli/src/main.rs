use clap::Parser;

fn main() {
    let cli = astop_cli::Cli::parse();
    let (code, output) = astop_cli::run(cli);
    print!("{output}");
    std::process::exit(code);
}
