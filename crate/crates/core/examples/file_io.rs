// Round trip a sequence through the on-disk formats: detections,
// features, a run config, and the tracker's result file.
//
// ```text
// cargo run --example file_io
// ```

use gmtrack::cli::scenario_records;
use gmtrack::eval::{generate_scenario, standard_suite};
use gmtrack::io::{
    attach_features, format_records, parse_detections, read_feature_file, sidecar_path, write_feature_file,
    write_results, RunConfig,
};
use gmtrack::track::{Matcher, Tracker};

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("gmtrack_file_io_{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let spec = standard_suite()
        .into_iter()
        .find(|s| s.name == "linear_0")
        .expect("suite has linear_0");
    let scenario = generate_scenario(&spec)?;
    let (dets, feats, _gt) = scenario_records(&scenario);
    std::fs::write(dir.join("det.txt"), format_records(&dets))?;
    write_feature_file(&feats, &dir.join("feat.bin"))?;

    let cfg = RunConfig::parse_str("tracker.interpolate = true\ntracker.delta = 20\n")?;
    println!(
        "config:\n{}",
        cfg.to_text().lines().take(6).collect::<Vec<_>>().join("\n")
    );

    let dets = parse_detections(&dir.join("det.txt"))?;
    let frames = attach_features(&dets, &read_feature_file(&dir.join("feat.bin"))?)?;
    let mut tracker = Tracker::new(cfg.tracker_config()?, Matcher::GraphMatching)?;
    let (first, last) = (*frames.keys().next().unwrap(), *frames.keys().last().unwrap());
    for f in first..=last {
        tracker.step(f, frames.get(&f).map(Vec::as_slice).unwrap_or(&[]))?;
    }
    let out = dir.join("res.txt");
    write_results(&tracker.tracks(), &out)?;
    let res = parse_detections(&out)?;
    let flagged = std::fs::read_to_string(sidecar_path(&out))
        .map(|s| s.lines().count())
        .unwrap_or(0);
    println!(
        "{} detections in, {} result lines out, {} interpolated",
        dets.len(),
        res.len(),
        flagged
    );
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
