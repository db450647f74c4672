//! Collect expert demonstrations and train the network on them through the
//! differentiable steering estimate. A small run; the CLI does the full one.
//!
//! cargo run --release --example imitation [instances] [epochs]

use camel::commands::collect_dataset;
use camel::config::RunConfig;
use camel::model::CamelModel;
use camel::sim::Scene;
use camel::train::{evaluate, split, train_loop, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let instances: usize = args.next().map_or(Ok(60), |s| s.parse())?;
    let epochs: usize = args.next().map_or(Ok(5), |s| s.parse())?;

    let cfg = RunConfig::default();
    let scenes: Vec<Scene> = (0..10).map(|s| Scene::generate(s, 0.5)).collect::<Result<_, _>>()?;
    let (records, _, drives) = collect_dataset(&cfg, &scenes, instances)?;
    let labels: Vec<f64> = records.iter().map(|r| r.steering).collect();
    println!(
        "{} demonstrations from {drives} drives, mean squared label {:.4}",
        records.len(),
        labels.iter().map(|y| y * y).sum::<f64>() / labels.len() as f64
    );

    let sets = split(records, cfg.seed)?;
    let tcfg = TrainConfig { epochs, ..cfg.train };
    let outcome = train_loop(&tcfg, &cfg.nav, CamelModel::init(tcfg.init_seed), &sets.train, &sets.val, |e, improved, _| {
        println!(
            "epoch {:>3}  train {:.4}  val {:.4}{}",
            e.epoch,
            e.train_mse,
            e.val_mse,
            if improved { "  *" } else { "" }
        );
        Ok(())
    })?;
    let nav = cfg.nav.with_tau(tcfg.tau);
    println!(
        "best val {:.4} at epoch {}; test {:.4}",
        outcome.best_val,
        outcome.best_epoch,
        evaluate(&outcome.best, &sets.test, &nav)?
    );
    Ok(())
}
