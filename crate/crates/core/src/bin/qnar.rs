use std::sync::atomic::{AtomicBool, Ordering};

use qnar_core::cli::{run, Io};

static STOP: AtomicBool = AtomicBool::new(false);

fn main() {
    // A second interrupt while flushing falls back to the default behaviour.
    let _ = ctrlc::set_handler(|| {
        if STOP.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
    });
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    let code = run(std::env::args_os(), std::env::vars(), &STOP, &mut Io { stdout: &mut out, stderr: &mut err });
    drop(out);
    drop(err);
    std::process::exit(code);
}
