// Compare matchers and tracker settings across the built-in scenario
// suite.
//
// ```text
// cargo run --release --example ablation
// ```

use gmtrack::eval::{evaluate, generate_scenario, run_tracker, standard_suite, MetricReport};
use gmtrack::track::{Matcher, TrackerConfig};

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let scenarios = standard_suite()
        .into_iter()
        .map(|s| generate_scenario(&s))
        .collect::<Result<Vec<_>, _>>()?;

    type Variant = (&'static str, Matcher, fn(&mut TrackerConfig));
    let variants: [Variant; 4] = [
        ("gm", Matcher::GraphMatching, |_| {}),
        ("hungarian", Matcher::HungarianOnAffinity, |_| {}),
        ("gm delta=5", Matcher::GraphMatching, |c| c.delta = 5),
        ("gm interpolate", Matcher::GraphMatching, |c| c.interpolate = true),
    ];
    println!("{}", MetricReport::table_header());
    for (name, matcher, tweak) in variants {
        let mut reports = Vec::new();
        for sc in &scenarios {
            let mut cfg = TrackerConfig::for_camera(sc.spec.camera);
            tweak(&mut cfg);
            let hyp = run_tracker(sc, &cfg, matcher, None)?;
            reports.push(evaluate(&sc.spec.name, &sc.gt.trajectories, &hyp, 0.5)?);
        }
        println!("{}", MetricReport::aggregate(name, &reports));
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
