//! Every example must run to completion.

macro_rules! example {
    ($name:ident) => {
        mod $name {
            #![allow(dead_code)]
            include!(concat!(
                env!("CARGO_MANIFEST_DIR"),
                "/examples/",
                stringify!($name),
                ".rs"
            ));

            #[test]
            fn runs() {
                run().unwrap();
            }
        }
    };
}

example!(qp_solve);
example!(qp_backward);
example!(graph_matching);
example!(train_matchnet);
example!(track_synthetic);
example!(evaluate);
example!(ablation);
example!(file_io);
