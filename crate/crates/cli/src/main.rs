use clap::Parser;

use perideval_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let record = run(&cli);
    match serde_json::to_string_pretty(&record) {
        Ok(text) => println!("{text}"),
        Err(e) => eprintln!("cannot serialize run record: {e}"),
    }
    if let Some(err) = &record.error {
        eprintln!("error: {err}");
    }
    std::process::exit(record.exit_code);
}
