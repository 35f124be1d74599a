//! Simulates the four nominal models at 0.3C and prints a short summary.

use std::time::Instant;

use lis0d::{build_model, nominal_parameters, simulate, ModelId, SimulationConfig};

fn main() {
    for id in ModelId::ALL {
        let model = build_model(id);
        let params = nominal_parameters(id);
        let config = SimulationConfig::for_c_rate(&params, 0.3);
        let start = Instant::now();
        let trace = simulate(&model, &params, &config).expect("valid nominal inputs");
        let elapsed = start.elapsed();
        println!(
            "{id}: {} after {:.0} s, {:.1} mAh/g, {} samples, {:.1} ms",
            trace.termination,
            trace.duration(),
            trace.specific_capacity,
            trace.samples.len(),
            elapsed.as_secs_f64() * 1e3
        );
    }
}
