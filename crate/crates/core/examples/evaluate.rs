// CLEAR-MOT and identity metrics on a hand-built sequence with one
// identity swap and one missed box.
//
// ```text
// cargo run --example evaluate
// ```

use gmtrack::eval::{evaluate, MetricReport, Trajectories};
use gmtrack::geometry::BBox;

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let a = |f: u32| BBox::new(100.0 + f as f64, 100.0, 20.0, 40.0);
    let b = |f: u32| BBox::new(300.0 - f as f64, 100.0, 20.0, 40.0);
    let mut gt = Trajectories::default();
    let mut hyp = Trajectories::default();
    for f in 1..=10 {
        gt.push(f, 1, a(f));
        gt.push(f, 2, b(f));
        // hypothesis ids swap halfway through; object 2 is missed at frame 4
        let (ia, ib) = if f <= 5 { (7, 8) } else { (8, 7) };
        hyp.push(f, ia, a(f));
        if f != 4 {
            hyp.push(f, ib, b(f));
        }
    }
    let report = evaluate("swap", &gt, &hyp, 0.5)?;
    println!("{}", MetricReport::table_header());
    println!("{report}");
    println!("{}", report.to_kv());
    assert_eq!(report.id_switches, 2);
    assert_eq!(report.fn_, 1);
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
