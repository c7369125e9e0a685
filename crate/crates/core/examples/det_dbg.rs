fn main() {
    let cfg = uqrecon::config::ExperimentConfig::smoke(99);
    let _ = std::fs::remove_dir_all("/tmp/uq-det-a");
    if let Err(e) = uqrecon::pipeline::reproduce_table1(&cfg, std::path::Path::new("/tmp/uq-det-a")) {
        println!("ERR: {e}");
    } else { println!("OK"); }
}
