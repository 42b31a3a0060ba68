use gmtrack::eval::{evaluate, Trajectories};
use gmtrack::geometry::BBox;
use proptest::prelude::*;

/// Objects on a coarse grid so no two boxes ever overlap.
fn gt_strategy() -> impl Strategy<Value = (Trajectories, usize, u32)> {
    (1usize..=4, 4u32..=30).prop_map(|(objects, frames)| {
        let mut gt = Trajectories::default();
        for f in 1..=frames {
            for k in 0..objects {
                gt.push(
                    f,
                    k as u64 + 1,
                    BBox::new(100.0 * k as f64 + f as f64, 50.0, 20.0, 40.0),
                );
            }
        }
        (gt, objects, frames)
    })
}

proptest! {
    #[test]
    fn an_id_switch_lowers_mota_and_idf1((gt, objects, frames) in gt_strategy(), pick in any::<prop::sample::Index>(), at in any::<prop::sample::Index>()) {
        let perfect = evaluate("p", &gt, &gt, 0.5).unwrap();
        prop_assert_eq!(perfect.mota, 1.0);
        prop_assert_eq!(perfect.idf1, 1.0);
        let obj = pick.index(objects) as u64 + 1;
        let from = 2 + at.index(frames as usize - 1) as u32;
        let mut hyp = gt.clone();
        for (&f, v) in hyp.frames.iter_mut() {
            for (id, _) in v.iter_mut() {
                if *id == obj && f >= from {
                    *id = 1000;
                }
            }
        }
        let r = evaluate("s", &gt, &hyp, 0.5).unwrap();
        prop_assert_eq!(r.id_switches, 1);
        prop_assert!(r.mota < perfect.mota);
        prop_assert!(r.idf1 < perfect.idf1);
    }

    #[test]
    fn report_ranges((gt, _, frames) in gt_strategy(), drops in prop::collection::vec(any::<bool>(), 120), shifts in prop::collection::vec(-30.0f64..30.0, 120)) {
        let mut hyp = Trajectories::default();
        let mut k = 0;
        for (&f, v) in &gt.frames {
            for (id, b) in v {
                k += 1;
                if drops[k % drops.len()] {
                    continue;
                }
                let mut b = *b;
                b.cx += shifts[k % shifts.len()];
                hyp.push(f, (id * 7 + f as u64 / 5) % 9 + 1, b);
            }
        }
        // relabeling can create duplicate ids in a frame; keep the first
        for v in hyp.frames.values_mut() {
            let mut seen = std::collections::BTreeSet::new();
            v.retain(|(id, _)| seen.insert(*id));
        }
        let r = evaluate("r", &gt.clone().with_span(1, frames), &hyp, 0.5).unwrap();
        prop_assert!(r.mota <= 1.0);
        prop_assert!((0.0..=1.0).contains(&r.idf1));
        prop_assert_eq!(r.idtp + r.idfn, gt.num_boxes());
        prop_assert_eq!(r.idtp + r.idfp, hyp.num_boxes());
        prop_assert_eq!(r.mostly_tracked + r.partially_tracked + r.mostly_lost, r.num_gt_ids);
    }
}
