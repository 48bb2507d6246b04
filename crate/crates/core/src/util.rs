use std::sync::OnceLock;

/// Worker-thread cap shared by the parallel kernels. `LMIM_THREADS` limits
/// it; unset or unparsable falls back to the available parallelism.
pub fn worker_threads() -> usize {
    static THREADS: OnceLock<usize> = OnceLock::new();
    *THREADS.get_or_init(|| {
        let available = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        match std::env::var("LMIM_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n >= 1 => n.min(available),
                _ => available,
            },
            Err(_) => available,
        }
    })
}
