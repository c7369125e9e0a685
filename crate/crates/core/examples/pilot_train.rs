use std::time::Instant;
use uqrecon::config::ExperimentConfig;
use uqrecon::evaluation::Task;
use uqrecon::pipeline::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let task = if args.get(1).map(|s| s.as_str()) == Some("ct") { Task::Ct } else { Task::Denoise };
    let mut cfg = ExperimentConfig::desk_default();
    // single run, two epochs per stage for timing extrapolation
    cfg.runs = 1;
    match task {
        Task::Denoise => {
            cfg.denoise.train.epochs = 2;
            cfg.denoise.inn.epochs = 1;
            cfg.denoise.probout.epochs = 1;
        }
        Task::Ct => {
            cfg.ct.train.epochs = 2;
            cfg.ct.inn.epochs = 1;
            cfg.ct.probout.epochs = 1;
        }
    }
    let out = std::path::PathBuf::from(format!("/tmp/uq-pilot-{task}"));
    let _ = std::fs::remove_dir_all(&out);

    let t0 = Instant::now();
    ensure_corpora(&cfg, &out).unwrap();
    println!("[{task}] corpora: {:.1}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let (_, _, log) = train_baseline_cmd(&cfg, task, 0, &out).unwrap();
    println!("[{task}] baseline 2 epochs: {:.1}s ({:.1}s/epoch), val loss {:?}",
        t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64()/2.0,
        log.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>());

    let t0 = Instant::now();
    let (_, ilog) = train_inn_cmd(&cfg, task, 0, &out).unwrap();
    println!("[{task}] inn 1 epoch: {:.1}s, val {:?}", t0.elapsed().as_secs_f64(),
        ilog.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>());

    let t0 = Instant::now();
    let (_, _, plog) = train_probout_cmd(&cfg, task, 0, &out).unwrap();
    println!("[{task}] probout 1 epoch: {:.1}s, val {:?}", t0.elapsed().as_secs_f64(),
        plog.epochs.iter().map(|e| e.val_loss).collect::<Vec<_>>());

    // one attack timing
    let models = load_models(&cfg, task, 0, &out).unwrap();
    let corpus = Corpus::load(&RunPaths::new(&out, 0).corpus_dir(task)).unwrap();
    let mut cache = Default::default();
    let mut cfg2 = cfg.clone();
    cfg2.test_samples = 3;
    let t0 = Instant::now();
    let art = run_experiment(&cfg2, task, uqrecon::evaluation::Experiment::AdvDetect, 0, &models, &corpus, &out, &mut cache).unwrap();
    println!("[{task}] advdetect 3 samples: {:.1}s ({:.1}s/sample)", t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64()/3.0);
    for m in &art.attack_metrics {
        println!("  attack s{}: {:.3e} -> {:.3e} ({} iters, psnr {:.1})", m.sample_id, m.initial_objective, m.final_objective, m.iterations, m.input_psnr_db);
    }
    let t0 = Instant::now();
    let _ = run_experiment(&cfg2, task, uqrecon::evaluation::Experiment::ArtDetect, 0, &models, &corpus, &out, &mut cache).unwrap();
    println!("[{task}] artdetect 3 samples (cached clean): {:.1}s", t0.elapsed().as_secs_f64());
}
