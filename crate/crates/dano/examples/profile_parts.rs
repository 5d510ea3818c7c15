use dano::data::synth::digits_feature_set;
use dano::model::{CircuitParams, Mode, ModelConfig};
use std::time::Instant;

fn main() {
    let data = digits_feature_set(64, 8, 1).unwrap();
    let cfg = ModelConfig::new(16, 4, 6, Mode::Dano, 16, 10).unwrap();
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let params = CircuitParams::random(6, 16, &mut rng);

    // These internals aren't public; emulate costs via public paths.
    let x: Vec<f64> = data.feature_row(0).to_vec();

    let t = Instant::now();
    for _ in 0..64 {
        let mut s = dano::model::encode(&x, 16).unwrap();
        dano::model::variational_layers(&mut s, &params).unwrap();
        std::hint::black_box(s.amplitudes()[0]);
    }
    println!("complex forward: {:.2} ms/run", t.elapsed().as_secs_f64() * 1e3 / 64.0);

    let mut s = dano::model::encode(&x, 16).unwrap();
    dano::model::variational_layers(&mut s, &params).unwrap();
    let windows = dano::model::sliding_windows(16, 4, 16).unwrap();
    let t = Instant::now();
    for _ in 0..64 {
        for w in &windows {
            std::hint::black_box(s.marginal_probabilities(w).unwrap()[0]);
        }
    }
    println!("complex marginals x16: {:.2} ms/run", t.elapsed().as_secs_f64() * 1e3 / 64.0);

    let obs = dano::model::Observables::initial(&cfg).unwrap();
    let t = Instant::now();
    for _ in 0..8 {
        std::hint::black_box(dano::grad::grad_theta_adjoint(&x, &params, &obs, &cfg).unwrap());
    }
    println!("complex per-output adjoint (16 outputs): {:.2} ms/run", t.elapsed().as_secs_f64() * 1e3 / 8.0);
}
