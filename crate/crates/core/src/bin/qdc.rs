use std::io::Write;

fn main() {
    #[cfg(feature = "parallel")]
    if let Some(n) = std::env::var("QDC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A pool can only be installed once; ignore the error if it was.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut out = std::io::stdout().lock();
    let code = qdc_core::cli::main_with_args(std::env::args_os(), &mut out, &mut std::io::stderr());
    let _ = out.flush();
    std::process::exit(code);
}
