use std::process::ExitCode;

fn main() -> ExitCode {
    // Die quietly when a pipe closes early (`clora ... | head`) instead of
    // panicking mid-print; Rust installs SIG_IGN for SIGPIPE by default.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    ExitCode::from(clora_cli::run(std::env::args_os()) as u8)
}
