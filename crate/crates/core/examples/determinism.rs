fn main() {
    let cfg = uqrecon::config::ExperimentConfig::smoke(99);
    for out in ["/tmp/uq-det-a", "/tmp/uq-det-b"] {
        let _ = std::fs::remove_dir_all(out);
        uqrecon::pipeline::reproduce_table1(&cfg, std::path::Path::new(out)).unwrap();
    }
    let a = std::fs::read("/tmp/uq-det-a/summary/table1.json").unwrap();
    let b = std::fs::read("/tmp/uq-det-b/summary/table1.json").unwrap();
    let ca = std::fs::read("/tmp/uq-det-a/summary/results.csv").unwrap();
    let cb = std::fs::read("/tmp/uq-det-b/summary/results.csv").unwrap();
    println!("summary identical: {}", a == b);
    println!("csv identical: {}", ca == cb);
    let ka = std::fs::read("/tmp/uq-det-a/runs/run_0/denoise/baseline.ckpt").unwrap();
    let kb = std::fs::read("/tmp/uq-det-b/runs/run_0/denoise/baseline.ckpt").unwrap();
    println!("checkpoint identical: {}", ka == kb);
    assert!(a == b && ca == cb && ka == kb);
    println!("DETERMINISM OK");
}
