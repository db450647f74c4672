//! Cost map to drive command: goal kernel, local goal, path, steering.
//! Also compares the differentiable steering estimate across temperatures.

use camel::nav::{navigate, save_costmap_pgm, save_path_csv, soft_steering_value, CostMap, NavContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Cheap ground with a costly boulder ahead and to the right.
    let (rows, cols) = (40, 28);
    let cells = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64, (i % cols) as f64);
            let d = ((r - 14.0).powi(2) + (c - 13.0).powi(2)).sqrt();
            if d < 5.0 {
                0.95
            } else {
                0.1
            }
        })
        .collect();
    let map = CostMap::new(rows, cols, cells)?;
    let ctx = NavContext::default().with_bearing(0.1);

    let out = navigate(&map, &ctx)?;
    println!(
        "goal kernel {}, local goal {:?}, {} path cells costing {:.3}",
        out.goal_kernel,
        out.goal_cell,
        out.path.len(),
        out.path.cost()
    );
    println!(
        "throttle {:.3}, steering {:.3} (raw {:.3})",
        out.command.throttle, out.command.steering, out.command.steering_raw
    );
    for tau in [0.3, 0.1, 0.01, 0.001] {
        println!("  soft steering at tau {tau:<5}: {:.3}", soft_steering_value(&map, &ctx.with_tau(tau))?);
    }

    let dir = std::env::temp_dir().join("camel_navigation");
    std::fs::create_dir_all(&dir)?;
    save_costmap_pgm(&dir.join("cost.pgm"), &map)?;
    save_path_csv(&dir.join("path.csv"), &out.path)?;
    println!("wrote cost.pgm and path.csv to {}", dir.display());
    Ok(())
}
