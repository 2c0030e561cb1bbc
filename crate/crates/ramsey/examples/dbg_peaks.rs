use ramsey::double_barrier::p12_exact;
use ramsey::presets;

fn main() {
    // ultra-fine scan just above the cutoff
    let p = presets::direct_regime(0.0);
    let mut last = 0.0;
    let mut rising = false;
    let n = 2_000_000;
    let (lo, hi) = (-0.49999, -0.4);
    let mut peaks = Vec::new();
    for i in 0..n {
        let d = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let v = p12_exact(&p.with_delta(d)).unwrap();
        if rising && v < last {
            peaks.push((d, last));
        }
        rising = v > last;
        last = v;
    }
    for (d, h) in &peaks {
        println!("peak near {:>12.7} height {:>10.4e}  (q = {:.5})", d, h, (1.0_f64 + 2.0 * d).sqrt());
    }
}
