use clap::Parser;
use mutualfriends_cli::args::Cli;

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = mutualfriends_cli::run(cli);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    std::process::exit(mutualfriends_cli::exit_code(&result));
}
