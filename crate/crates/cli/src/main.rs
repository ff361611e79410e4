use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = q2d_cli::Cli::parse();
    if let Err(e) = q2d_cli::run(cli) {
        eprintln!("q2d: {e}");
        std::process::exit(e.exit_code());
    }
}
