use std::time::Instant;
use uqrecon::nn::{forward, init_params, Layer, NetworkSpec};
use uqrecon::tensor::Tensor;

fn main() {
    // the denoise trunk layer: 32->32, 3x3, 64x64
    let spec = NetworkSpec::new(
        vec![32, 64, 64],
        vec![Layer::Conv { in_channels: 32, out_channels: 32, kernel: 3, padding: 1 }],
    ).unwrap();
    let params = init_params(&spec, 0);
    let x = Tensor::full(&[32, 64, 64], 0.5);
    // warmup
    for _ in 0..3 { let _ = forward(&spec, &params, &x, None).unwrap(); }
    let n = 30;
    let t0 = Instant::now();
    let mut sink = 0.0;
    for _ in 0..n { sink += forward(&spec, &params, &x, None).unwrap()[0]; }
    let dt = t0.elapsed().as_secs_f64() / n as f64;
    let macs = 32.0*32.0*9.0*64.0*64.0;
    println!("conv 32x32x3x3@64x64: {:.2} ms, {:.2} GFLOP/s (sink {sink:.3})", dt*1e3, 2.0*macs/dt/1e9);

    // pure FMA loop upper bound
    let a = vec![1.00000001f64; 4096];
    let mut b = vec![0.0f64; 4096];
    let t0 = Instant::now();
    let reps = 200_000;
    for r in 0..reps {
        let w = 1.0 + (r as f64)*1e-12;
        for (o, i) in b.iter_mut().zip(&a) { *o += w * *i; }
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("raw axpy bound: {:.2} GFLOP/s (sink {})", 2.0*4096.0*reps as f64/dt/1e9, b[0]);
}
