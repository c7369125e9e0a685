use uqrecon::operators::*;
use uqrecon::tensor::Tensor;
use std::time::Instant;

fn sector_energy(img: &Tensor, lo_deg: f64, hi_deg: f64) -> (f64, f64) {
    // 2-D DFT magnitude; energy in the directional sector vs total
    use num_complex::Complex;
    use rustfft::FftPlanner;
    let n = img.shape()[0];
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    // rows
    let mut rows: Vec<Vec<Complex<f64>>> = (0..n).map(|y| {
        let mut row: Vec<Complex<f64>> = (0..n).map(|x| Complex::new(img.at2(y, x), 0.0)).collect();
        fft.process(&mut row); row
    }).collect();
    // cols
    let mut total = 0.0; let mut sector = 0.0;
    for x in 0..n {
        let mut col: Vec<Complex<f64>> = (0..n).map(|y| rows[y][x]).collect();
        fft.process(&mut col);
        for (y, v) in col.iter().enumerate() {
            let fy = if y <= n/2 { y as f64 } else { y as f64 - n as f64 };
            let fx = if x <= n/2 { x as f64 } else { x as f64 - n as f64 };
            if fx == 0.0 && fy == 0.0 { continue; }
            let e = v.norm_sqr();
            total += e;
            let mut ang = fy.atan2(fx).to_degrees();
            if ang < 0.0 { ang += 180.0; }
            if ang >= lo_deg && ang < hi_deg { sector += e; }
        }
        for (y, v) in col.iter().enumerate() { rows[y][x] = *v; }
    }
    (sector, total)
}

fn main() {
    let size = 128;
    let phantom = make_phantom(PhantomKind::SheppLogan, size, 0).unwrap();
    let full = RadonGeometry::full(size, 180).unwrap();
    let wedge = RadonGeometry::with_missing_wedge(size, 180, (75.0, 105.0)).unwrap();

    let t0 = Instant::now();
    let sino = radon(&phantom, &full).unwrap();
    println!("radon 128x128/180 angles: {:.0} ms", t0.elapsed().as_secs_f64()*1000.0);
    let t0 = Instant::now();
    let rec_full = fbp(&sino, &full, Filter::Ramp).unwrap();
    println!("fbp: {:.0} ms", t0.elapsed().as_secs_f64()*1000.0);

    let psnr_full = rec_full.clamp(0.0,1.0).psnr(&phantom).unwrap();
    let alpha = rec_full.dot(&phantom).unwrap() / rec_full.dot(&rec_full).unwrap();
    println!("full-angle: PSNR={:.2} dB, lsq scale alpha={:.4}, rec range [{:.3},{:.3}]", psnr_full, alpha, rec_full.min_value(), rec_full.max_value());

    let sino_w = radon(&phantom, &wedge).unwrap();
    let rec_wedge = fbp(&sino_w, &wedge, Filter::Ramp).unwrap();
    let psnr_wedge = rec_wedge.clamp(0.0,1.0).psnr(&phantom).unwrap();
    println!("wedge: PSNR={:.2} dB, rec range [{:.3},{:.3}]", psnr_wedge, rec_wedge.min_value(), rec_wedge.max_value());

    // spectral sector analysis on the ERROR images, wedge sector [75,105)
    let err_full = rec_full.sub(&phantom).unwrap();
    let err_wedge = rec_wedge.sub(&phantom).unwrap();
    for (name, sec) in [("full", sector_energy(&err_full, 75.0, 105.0)), ("wedge", sector_energy(&err_wedge, 75.0, 105.0))] {
        println!("error sector [75,105): {name}: frac={:.4}", sec.0/sec.1);
    }
    // also the orthogonal sector as control
    for (name, sec) in [("full", sector_energy(&err_full, 165.0, 180.0)), ("wedge", sector_energy(&err_wedge, 165.0, 180.0))] {
        println!("error sector [165,180): {name}: frac={:.4}", sec.0/sec.1);
    }

    // corpus FBP output stats (for the fixed rescale window)
    let mut lo = f64::INFINITY; let mut hi = f64::NEG_INFINITY;
    let mut all_psnr = 0.0;
    let n_corp = 24;
    for s in 0..n_corp {
        let img = make_phantom(PhantomKind::RandomEllipses, size, s).unwrap();
        let rec = fbp(&radon(&img, &wedge).unwrap(), &wedge, Filter::Ramp).unwrap();
        lo = lo.min(rec.min_value()); hi = hi.max(rec.max_value());
        all_psnr += rec.clamp(0.0,1.0).psnr(&img).unwrap();
    }
    println!("corpus wedge-FBP: range [{lo:.3},{hi:.3}], mean clamped PSNR {:.2}", all_psnr / n_corp as f64);

    // operator norm + wedge witness
    let g32 = RadonGeometry::with_missing_wedge(48, 90, (75.0, 105.0)).unwrap();
    let mut x = Tensor::full(&[48,48], 1.0);
    let mut lam = 0.0;
    for _ in 0..60 {
        let y = backproject(&radon(&x, &g32).unwrap(), &g32).unwrap();
        lam = y.l2();
        x = y.scale(1.0/lam);
    }
    let sigma_max = lam.sqrt();
    // witness: horizontal stripes (frequency direction 90 deg)
    let mut w = Tensor::zeros(&[48,48]);
    for y in 0..48 { for xx in 0..48 { w.set2(y, xx, (2.0*std::f64::consts::PI*8.0*(y as f64)/48.0).sin()); } }
    let ratio = radon(&w, &g32).unwrap().l2() / (sigma_max * w.l2());
    println!("sigma_max={sigma_max:.2}, wedge witness ratio={ratio:.5}");
    let full48 = RadonGeometry::full(48, 90).unwrap();
    let mut xf = Tensor::full(&[48,48], 1.0);
    let mut lamf = 0.0;
    for _ in 0..60 { let y = backproject(&radon(&xf, &full48).unwrap(), &full48).unwrap(); lamf = y.l2(); xf = y.scale(1.0/lamf); }
    let ratio_full = radon(&w, &full48).unwrap().l2() / (lamf.sqrt() * w.l2());
    println!("full-angle witness ratio={ratio_full:.5}");
}
