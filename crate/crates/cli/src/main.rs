use clap::Parser;
use propdet_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
        }
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.as_str());
            std::process::exit(cat.exit_code());
        }
    }
}
