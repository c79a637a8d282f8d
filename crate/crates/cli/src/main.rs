use std::io::{self, Write};
use std::process::ExitCode;

use erlab_cli::{parse_config, run, ConfigError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let config = match parse_config(std::env::args_os()) {
        Ok(c) => c,
        Err(err) => {
            let code = err.exit_code();
            match err {
                ConfigError::Usage(e) => {
                    let _ = e.print();
                }
                other => eprintln!("error: {other}"),
            }
            return ExitCode::from(code as u8);
        }
    };

    let mut stdout = io::stdout().lock();
    match run(&config, &mut stdout) {
        Ok(summary) => {
            let text = summary.render();
            // data went to stdout, so keep the table out of the way
            if config.out.is_some() {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                eprint!("{text}");
            }
            ExitCode::from(summary.exit_status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
