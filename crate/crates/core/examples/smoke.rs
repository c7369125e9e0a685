fn main() {
    let cfg = uqrecon::config::ExperimentConfig::smoke(7);
    let out = std::path::PathBuf::from("/tmp/uq-smoke");
    let _ = std::fs::remove_dir_all(&out);
    let t0 = std::time::Instant::now();
    match uqrecon::pipeline::reproduce_table1(&cfg, &out) {
        Ok(s) => {
            println!("SMOKE OK in {:.1}s", t0.elapsed().as_secs_f64());
            for r in &s.table {
                println!("{} {} {} mean={:.3} std={:.3} degen={}", r.method, r.task, r.experiment, r.mean_r, r.std_r, r.degenerate_count);
            }
            for h in &s.health {
                println!("health {} run{} cov={:.3} mse_model={:.5} mse_id={:.5}", h.task, h.run, h.inn_coverage, h.val_mse_model, h.val_mse_identity);
            }
        }
        Err(e) => { println!("SMOKE FAILED after {:.1}s: {e}", t0.elapsed().as_secs_f64()); std::process::exit(1); }
    }
}
