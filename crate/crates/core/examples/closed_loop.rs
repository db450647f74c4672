//! Compare policies on held-out scenes, with and without a yawed front
//! camera. Pass a checkpoint to include the learned cost map.
//!
//! cargo run --release --example closed_loop [checkpoint.cmlw] [scenes]

use std::path::Path;

use camel::commands::{run_rollouts, summarize, summary_csv};
use camel::config::RunConfig;
use camel::model::CamelModel;
use camel::sim::{PolicyKind, Scene};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let model = args.next().map(|p| CamelModel::load(Path::new(&p))).transpose()?;
    let count: u64 = args.next().map_or(Ok(4), |s| s.parse())?;
    let scenes: Vec<Scene> = (0..count).map(|i| Scene::generate(10_000 + i, 0.5)).collect::<Result<_, _>>()?;

    let mut policies = vec![PolicyKind::Expert, PolicyKind::Handcrafted];
    if model.is_some() {
        policies.push(PolicyKind::Camel);
    }
    for yaw in [0.0, 5.0] {
        let cfg = RunConfig {
            front_camera_yaw_error_deg: yaw,
            ..Default::default()
        };
        let rows = run_rollouts(&cfg, &scenes, &policies, model.as_ref(), None)?;
        println!("front camera yaw error {yaw} deg");
        print!("{}", summary_csv(&summarize(&rows)));
    }
    Ok(())
}
