use std::time::Instant;
use uqrecon::config::ExperimentConfig;
use uqrecon::evaluation::{Experiment, Task};
use uqrecon::pipeline::*;

fn main() {
    let task = if std::env::args().nth(1).as_deref() == Some("ct") { Task::Ct } else { Task::Denoise };
    let mut cfg = ExperimentConfig::desk_default();
    cfg.runs = 1;
    let out = std::path::PathBuf::from(format!("/tmp/uq-full-{task}"));
    let _ = std::fs::remove_dir_all(&out);

    let t0 = Instant::now();
    ensure_corpora(&cfg, &out).unwrap();
    println!("[{task}] corpora {:.0}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let (models, report) = run_train(&cfg, task, 0, &out).unwrap();
    println!("[{task}] full training {:.0}s: coverage={:.3} mse_model={:.5} mse_identity={:.5}",
        t0.elapsed().as_secs_f64(), report.inn_coverage, report.val_mse_model, report.val_mse_identity);
    for l in &report.logs {
        println!("  {}: best_val={:.6} at epoch {}; vals={:?}", l.model, l.best_val_loss, l.best_epoch,
          l.epochs.iter().map(|e| (e.val_loss*1e4).round()/1e4).collect::<Vec<_>>());
    }

    let corpus = Corpus::load(&RunPaths::new(&out, 0).corpus_dir(task)).unwrap();
    let mut cache = Default::default();
    let t0 = Instant::now();
    let adv = run_experiment(&cfg, task, Experiment::AdvDetect, 0, &models, &corpus, &out, &mut cache).unwrap();
    println!("[{task}] advdetect 30 samples {:.0}s", t0.elapsed().as_secs_f64());
    let mut ok20 = 0; let mut psnr_min: f64 = f64::INFINITY;
    for m in &adv.attack_metrics {
        let ratio = m.final_objective / m.initial_objective;
        if ratio <= 0.2 { ok20 += 1; }
        psnr_min = psnr_min.min(m.input_psnr_db);
    }
    println!("  attack: {}/{} reach <=20%, min psnr {:.1} dB", ok20, adv.attack_metrics.len(), psnr_min);
    let ratios: Vec<f64> = adv.attack_metrics.iter().map(|m| (m.final_objective/m.initial_objective*1000.0).round()/1000.0).collect();
    println!("  ratios: {ratios:?}");
    let iters: Vec<usize> = adv.attack_metrics.iter().map(|m| m.iterations).collect();
    println!("  iters: {iters:?}");

    let t0 = Instant::now();
    let art = run_experiment(&cfg, task, Experiment::ArtDetect, 0, &models, &corpus, &out, &mut cache).unwrap();
    println!("[{task}] artdetect {:.0}s", t0.elapsed().as_secs_f64());

    for (name, a) in [("advdetect", &adv), ("artdetect", &art)] {
        for m in [uqrecon::evaluation::Method::Inn, uqrecon::evaluation::Method::McDrop, uqrecon::evaluation::Method::ProbOut] {
            let rs: Vec<f64> = a.rows.iter().filter(|r| r.method == m).filter_map(|r| r.r).collect();
            let mean = rs.iter().sum::<f64>() / rs.len().max(1) as f64;
            println!("  {name} {m}: mean r = {mean:.3} over {} samples", rs.len());
        }
    }
}
