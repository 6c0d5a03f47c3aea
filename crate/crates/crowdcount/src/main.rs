use std::io::{self, BufWriter};
use std::process::ExitCode;

use crowdcount::commands::{run, Io};

fn main() -> ExitCode {
    let stdin = io::stdin();
    let mut stdin = stdin.lock();
    let mut stdout = BufWriter::new(io::stdout().lock());
    let mut stderr = io::stderr().lock();
    let code = run(std::env::args_os(), Io { stdin: &mut stdin, stdout: &mut stdout, stderr: &mut stderr });
    drop(stdout);
    ExitCode::from(code as u8)
}
