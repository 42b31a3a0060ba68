// Match a detection graph against a shuffled tracklet graph with the
// relaxed quadratic assignment, and compare with Hungarian on the vertex
// affinity alone.
//
// ```text
// cargo run --example graph_matching
// ```

use gmtrack::geometry::BBox;
use gmtrack::matching::{match_graphs, AffinityBundle, FrameGraph, GraphKind, MatchConfig, VertexData};
use gmtrack::track::hungarian_max;
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn run() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, d) = (5, 12);
    let base: Vec<DVector<f64>> = (0..n)
        .map(|_| DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let vertex = |k: usize, f: DVector<f64>, frame| VertexData {
        appearance: f,
        bbox: BBox::new(50.0 * k as f64 + 40.0, 100.0, 20.0, 40.0),
        source_id: k as i64,
        frame,
    };
    // detection i is tracklet perm[i] seen again with a little noise
    let det = FrameGraph::new(
        GraphKind::Detection,
        (0..n)
            .map(|i| {
                let noise = DVector::from_fn(d, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
                vertex(i, &base[perm[i]] + noise, 2)
            })
            .collect(),
    )?;
    let trk = FrameGraph::new(
        GraphKind::Tracklet,
        (0..n).map(|j| vertex(j, base[j].clone(), 1)).collect(),
    )?;

    let result = match_graphs(&det, &trk, &MatchConfig::default())?;
    println!("relaxed scores:\n{:.3}", result.scores);
    let correct = result.assignment.iter().filter(|&&(i, j)| perm[i] == j).count();
    println!("graph matching: {:?} ({correct}/{n} correct)", result.assignment);

    let bundle = AffinityBundle::build(&det, &trk)?;
    println!("hungarian:      {:?}", hungarian_max(&bundle.vertex));
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
