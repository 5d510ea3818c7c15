use std::time::Instant;

const LANES: usize = 8;

fn fused_v1(psi: &mut [f64], phi: &mut [f64], dist: usize, s: f64, c: f64) -> f64 {
    let mut acc = [0.0f64; LANES];
    for (pb, ab) in phi.chunks_exact_mut(2 * dist).zip(psi.chunks_exact_mut(2 * dist)) {
        let (plo, phi_hi) = pb.split_at_mut(dist);
        let (alo, ahi) = ab.split_at_mut(dist);
        if dist >= LANES {
            for (((a0c, a1c), f0c), f1c) in alo.chunks_exact_mut(LANES)
                .zip(ahi.chunks_exact_mut(LANES))
                .zip(plo.chunks_exact_mut(LANES))
                .zip(phi_hi.chunks_exact_mut(LANES)) {
                for l in 0..LANES {
                    let (x, y) = (a0c[l], a1c[l]);
                    let p0 = c * x + s * y;
                    let p1 = -s * x + c * y;
                    a0c[l] = p0;
                    a1c[l] = p1;
                    let (f0, f1) = (f0c[l], f1c[l]);
                    acc[l] += f0 * (-s * p0 - c * p1) + f1 * (c * p0 - s * p1);
                    f0c[l] = c * f0 + s * f1;
                    f1c[l] = -s * f0 + c * f1;
                }
            }
        }
    }
    acc.iter().sum()
}

// separate simple passes
fn three_pass(psi: &mut [f64], phi: &mut [f64], dist: usize, s: f64, c: f64) -> f64 {
    // pass 1: psi = Ry(-t) psi
    for block in psi.chunks_exact_mut(2 * dist) {
        let (lo, hi) = block.split_at_mut(dist);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = c * x + s * y;
            *b = -s * x + c * y;
        }
    }
    // pass 2: acc = sum phi . (M psi)
    let mut acc = [0.0f64; LANES];
    for (pb, ab) in phi.chunks_exact(2 * dist).zip(psi.chunks_exact(2 * dist)) {
        let (plo, phi_hi) = pb.split_at(dist);
        let (alo, ahi) = ab.split_at(dist);
        for (((a0c, a1c), f0c), f1c) in alo.chunks_exact(LANES)
            .zip(ahi.chunks_exact(LANES))
            .zip(plo.chunks_exact(LANES))
            .zip(phi_hi.chunks_exact(LANES)) {
            for l in 0..LANES {
                acc[l] += f0c[l] * (-s * a0c[l] - c * a1c[l]) + f1c[l] * (c * a0c[l] - s * a1c[l]);
            }
        }
    }
    // pass 3: phi = Ry(-t) phi
    for block in phi.chunks_exact_mut(2 * dist) {
        let (lo, hi) = block.split_at_mut(dist);
        for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
            let (x, y) = (*a, *b);
            *a = c * x + s * y;
            *b = -s * x + c * y;
        }
    }
    acc.iter().sum()
}

fn main() {
    let n = 16usize;
    let dim = 1usize << n;
    let mut psi = vec![0.5f64; dim];
    let mut phi = vec![0.25f64; dim];
    let (s, c) = (0.15f64, 0.98f64);
    let reps = 1000;

    let t = Instant::now();
    let mut sink = 0.0;
    for r in 0..reps {
        sink += fused_v1(&mut psi, &mut phi, 1 << (r % (n - 4) + 4), s, c);
    }
    std::hint::black_box(sink);
    println!("fused_v1: {:.1} us/pass", t.elapsed().as_secs_f64() * 1e6 / reps as f64);

    let t = Instant::now();
    let mut sink = 0.0;
    for r in 0..reps {
        sink += three_pass(&mut psi, &mut phi, 1 << (r % (n - 4) + 4), s, c);
    }
    std::hint::black_box(sink);
    println!("three_pass: {:.1} us/pass", t.elapsed().as_secs_f64() * 1e6 / reps as f64);
}
