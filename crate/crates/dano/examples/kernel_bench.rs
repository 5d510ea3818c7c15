use std::time::Instant;

fn main() {
    let n = 16usize;
    let dim = 1usize << n;
    let mut amps = vec![0.0f64; dim];
    amps[0] = 1.0;

    // raw 1q pass cost
    let (s, c) = (0.3f64 / 2.0).sin_cos();
    let t = Instant::now();
    let reps = 2000;
    for r in 0..reps {
        let bit = r % n;
        let dist = 1usize << bit;
        for block in amps.chunks_exact_mut(2 * dist) {
            let (lo, hi) = block.split_at_mut(dist);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = c * x - s * y;
                *b = s * x + c * y;
            }
        }
    }
    std::hint::black_box(amps[1]);
    println!("1q real pass: {:.1} us", t.elapsed().as_secs_f64() * 1e6 / reps as f64);

    // marginal with per-bit loop (current)
    let shifts = [12usize, 11, 10, 9];
    let t = Instant::now();
    for _ in 0..200 {
        let mut probs = vec![0.0f64; 16];
        for (i, a) in amps.iter().enumerate() {
            let mut m = 0usize;
            for &sh in &shifts { m = (m << 1) | ((i >> sh) & 1); }
            probs[m] += a * a;
        }
        std::hint::black_box(probs[3]);
    }
    println!("marginal bit-loop: {:.1} us", t.elapsed().as_secs_f64() * 1e6 / 200.0);

    // marginal with contiguous shift-mask
    let t = Instant::now();
    for _ in 0..200 {
        let mut probs = vec![0.0f64; 16];
        for (i, a) in amps.iter().enumerate() {
            let m = (i >> 9) & 15;
            probs[m] += a * a;
        }
        std::hint::black_box(probs[3]);
    }
    println!("marginal shift-mask: {:.1} us", t.elapsed().as_secs_f64() * 1e6 / 200.0);

    // cnot pass
    let t = Instant::now();
    for r in 0..2000 {
        let cbit = r % n;
        let tbit = (r + 7) % n;
        if cbit == tbit { continue; }
        let (b_lo, b_hi) = if cbit < tbit { (cbit, tbit) } else { (tbit, cbit) };
        let quarter = dim >> 2;
        let lo_mask = (1usize << b_lo) - 1;
        let mid_mask = ((1usize << (b_hi - 1)) - 1) & !lo_mask;
        let cmask = 1usize << cbit;
        let tmask = 1usize << tbit;
        for x in 0..quarter {
            let spread = (x & lo_mask) | ((x & mid_mask) << 1) | ((x & !(lo_mask | mid_mask)) << 2);
            let i = spread | cmask;
            amps.swap(i, i | tmask);
        }
    }
    std::hint::black_box(amps[5]);
    println!("cnot pass: {:.1} us", t.elapsed().as_secs_f64() * 1e6 / 2000.0);
}
