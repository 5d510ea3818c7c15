use dano::data::synth::digits_feature_set;
use dano::model::{Mode, ModelConfig};
use dano::train::{train, Hyperparams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(10);
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let data = digits_feature_set(1000, 200, 20250807).unwrap();
    for mode in [Mode::Vqc, Mode::Dano] {
        let k = if mode == Mode::Vqc { 1 } else { 4 };
        let cfg = ModelConfig::new(16, k, 6, mode, 16, 10).unwrap();
        for seed in 0..seeds {
            let hp = Hyperparams { epochs, threads: 2, lr, ..Default::default() };
            let t0 = std::time::Instant::now();
            let (_, hist) = train(&cfg, &data, &hp, seed).unwrap();
            let last = hist.last().unwrap();
            let best = hist.iter().map(|m| m.test_accuracy).fold(0.0f64, f64::max);
            println!(
                "{:?} k={} seed={} epochs={} lr={}: train_acc={:.3} test_acc={:.3} best_test={:.3} loss={:.3} ({:.1}s total, {:.2}s/epoch)",
                mode, k, seed, epochs, lr, last.train_accuracy, last.test_accuracy, best, last.train_loss,
                t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64() / epochs as f64
            );
        }
    }
}
