use std::process::ExitCode;

fn main() -> ExitCode {
    contrastive_seq2seq::cli::main_with_args(std::env::args_os())
}
