// Run the online tracker frame by frame on a synthetic crossing sequence
// and print births, deaths and fallbacks as they happen.
//
// ```text
// cargo run --example track_synthetic
// ```

use gmtrack::eval::{evaluate, generate_scenario, MotionPattern, ScenarioSpec, Trajectories};
use gmtrack::track::{Matcher, Tracker, TrackerConfig};

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ScenarioSpec::new("crossing", 9, 4, MotionPattern::Crossing);
    spec.dropout = 0.05;
    let scenario = generate_scenario(&spec)?;

    let mut tracker = Tracker::new(TrackerConfig::for_camera(spec.camera), Matcher::GraphMatching)?;
    for f in &scenario.frames {
        let r = tracker.step(f.frame, &f.detections)?;
        if !r.births.is_empty() || !r.deaths.is_empty() || !r.fallback.is_empty() {
            println!(
                "frame {:>3}: {} matched, births {:?}, deaths {:?}, fallback {:?}",
                f.frame,
                r.matches.len(),
                r.births,
                r.deaths,
                r.fallback
            );
        }
    }
    let hyp = Trajectories::from_tracks(&tracker.tracks());
    let report = evaluate(&spec.name, &scenario.gt.trajectories, &hyp, 0.5)?;
    println!("{}", report.to_kv());
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
