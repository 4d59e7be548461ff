use clap::Parser;

fn main() {
    let cli = quicfed::Cli::parse();
    if let Err(e) = quicfed::execute(&cli) {
        let msg = e.to_string().replace('\n', " ");
        eprintln!("error[{}]: {msg}", e.category());
        std::process::exit(1);
    }
}
