// Train the appearance encoder and GCN end to end through the matching
// layer on a synthetic sequence, then save and reload a checkpoint.
//
// ```text
// cargo run --release --example train_matchnet
// ```

use gmtrack::eval::{generate_scenario, training_samples, MotionPattern, ScenarioSpec};
use gmtrack::net::{load_checkpoint, save_checkpoint, train, GcnConfig, MatchNet, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ScenarioSpec::new("train", 5, 4, MotionPattern::Crossing);
    spec.feature_dim = 16;
    spec.feature_noise = 0.2;
    spec.center_cosine = 0.5;
    let scenario = generate_scenario(&spec)?;
    let samples = training_samples(&scenario.labeled_frames(), 3)?;
    println!("{} frame pairs", samples.len());

    let mut net = MatchNet::init(&mut ChaCha8Rng::seed_from_u64(0), 16, 32, 8, GcnConfig::default());
    let cfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::default()
    };
    let losses = train(&mut net, &samples, &cfg)?;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let k = 10.min(losses.len());
    println!(
        "{} steps, first {} mean {:.4}, last {} mean {:.4}",
        losses.len(),
        k,
        mean(&losses[..k]),
        k,
        mean(&losses[losses.len() - k..])
    );

    let path = std::env::temp_dir().join(format!("gmtrack_example_{}.ckpt", std::process::id()));
    save_checkpoint(&net, &path)?;
    let back = load_checkpoint(&path)?;
    std::fs::remove_file(&path)?;
    // weights are stored as f32
    let drift = net
        .tensors()
        .iter()
        .zip(back.tensors())
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    assert!(drift < 1e-6);
    println!("checkpoint round trip ok ({} parameters)", net.num_params());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
