//! Drive the privileged expert and the handcrafted-cost policy through one
//! scene and write both trajectories.
//!
//! cargo run --release --example expert_rollout [scene-seed]

use camel::gridmap::GridSpec;
use camel::nav::NavContext;
use camel::sim::{rollout, trajectory_csv, CostSource, Expert, RolloutConfig, Scene, SensingDriver, SensorSetup, World};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(10_003), |s| s.parse())?;
    let scene = Scene::generate(seed, 0.5)?;
    println!(
        "scene {seed}: {} obstacles, {} patches, goal at ({:.1}, {:.1})",
        scene.obstacles.len(),
        scene.patches.len(),
        scene.goal[0],
        scene.goal[1]
    );
    let world = World::new(scene);
    let cfg = RolloutConfig::default();
    let nav = NavContext::default();

    let mut expert = Expert::new(nav, GridSpec::default());
    let mut handcrafted = SensingDriver {
        source: CostSource::Handcrafted,
        sensors: SensorSetup::default(),
        nav,
    };
    let dir = std::env::temp_dir().join("camel_rollout");
    std::fs::create_dir_all(&dir)?;
    for driver in [&mut expert as &mut dyn camel::sim::Driver, &mut handcrafted] {
        let res = rollout(driver, &world, world.scene.start, world.scene.goal, &cfg, 1)?;
        println!(
            "{:<12} reached {:<5} collided {:<5} {:>3} steps {:>6.1} m",
            res.policy,
            res.reached,
            res.collided,
            res.steps(),
            res.path_length
        );
        std::fs::write(dir.join(format!("{}.csv", res.policy)), trajectory_csv(&res.trajectory))?;
    }
    println!("trajectories in {}", dir.display());
    Ok(())
}
