use std::io;
use std::panic;

fn main() {
    let code = panic::catch_unwind(|| lm_psych::cli::run(std::env::args_os(), &mut io::stdout(), &mut io::stderr())).unwrap_or(1);
    std::process::exit(code);
}
