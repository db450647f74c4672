//! Sense one synthetic scene and fuse it into the four-channel grid.
//!
//! cargo run --release --example grid_fusion [scene-seed]

use camel::gridmap::{build_layered_grid, project_semantics, save_grid, write_ply, GridSpec, CHANNELS};
use camel::sim::{render_mask, sample_pointcloud, CameraRig, LidarConfig, Scene, World};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let world = World::new(Scene::generate(seed, 0.5)?);
    let pose = world.scene.start;
    let spec = GridSpec::default();

    let cloud = sample_pointcloud(&world, &pose, &spec, &LidarConfig::default(), 7);
    let rig = CameraRig::default();
    let views: Vec<_> = rig
        .cameras
        .iter()
        .map(|cam| (cam.clone(), render_mask(&world.raster, &world.scene, &pose, cam)))
        .collect();
    let labelled = project_semantics(&cloud.points, &views)?;
    let agree = labelled.iter().zip(&cloud.truth).filter(|(p, t)| p.class == Some(**t)).count();
    println!(
        "{} returns, {:.1}% labelled with their true class",
        labelled.len(),
        100.0 * agree as f64 / labelled.len() as f64
    );

    let grid = build_layered_grid(&labelled, &spec)?;
    let observed = grid.occupancy.iter().filter(|&&o| o).count();
    println!("{}x{} grid, {observed} cells observed before filling", grid.rows, grid.cols);
    for (ch, name) in ["class/3", "height/2", "slope/(pi/2)", "intensity/255"].iter().enumerate().take(CHANNELS) {
        let v = grid.channel(ch);
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        println!("  {name:<14} min {lo:.3}  mean {mean:.3}  max {hi:.3}");
    }

    let dir = std::env::temp_dir().join("camel_grid_fusion");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("scan.ply"), write_ply(&labelled))?;
    save_grid(&dir.join("grid.cmlg"), &grid)?;
    println!("wrote scan.ply and grid.cmlg to {}", dir.display());
    Ok(())
}
