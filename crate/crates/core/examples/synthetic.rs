//! Writes a noisy synthetic M3 discharge at prototype scale, using the
//! identified parameters of the 1 A cell.
//!
//! ```text
//! cargo run --release -p lis0d --example synthetic -- out.csv [noise_V] [seed]
//! ```

use std::fs::File;

use lis0d::identify::{synthetic_experiment, SyntheticSpec};
use lis0d::similitude::ScaleFactor;
use lis0d::{nominal_parameters, ModelId, SimulationConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().ok_or("usage: synthetic <out.csv> [noise_V] [seed]")?;
    let noise: f64 = args.next().map_or(Ok(0.002), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let mut params = nominal_parameters(ModelId::M3);
    params.e0 = vec![2.467, 2.374, 2.342, 2.069];
    params.gamma = 0.483;
    params.omega = 0.613;
    params.m0[0] = 3.038;
    let spec = SyntheticSpec {
        model: ModelId::M3,
        params,
        mu: ScaleFactor::new(3.33e4)?,
        current: 0.03e-3,
        samples: 300,
        noise,
        seed,
        sim: SimulationConfig::new(1.0),
    };
    let data = synthetic_experiment(&spec)?;
    data.write_csv(File::create(&path)?)?;
    println!("{} samples over {:.0} s written to {path}", data.len(), data.duration());
    Ok(())
}
