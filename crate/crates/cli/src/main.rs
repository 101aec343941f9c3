use clap::Parser;
use flavorgraph_cli::{execute, Cli};

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    for line in execute(&cli)? {
        println!("{line}");
    }
    Ok(())
}
