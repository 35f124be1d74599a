use lis0d::io::{read_parameters, read_sim_config, write_parameters, write_sim_config};
use lis0d::{build_model, nominal_parameters, ModelId, ParameterSet, SimulationConfig};
use proptest::prelude::*;

proptest! {
    #[test]
    fn any_parameter_values_round_trip(k in 0..4usize, values in prop::collection::vec(any::<f64>(), 40)) {
        let id = ModelId::ALL[k];
        let model = build_model(id);
        let mut params = nominal_parameters(id);
        let paths = ParameterSet::paths(&model);
        for (path, &v) in paths.iter().zip(values.iter().filter(|v| v.is_finite())) {
            params.set(path, v);
        }
        let (back_id, back) = read_parameters(&write_parameters(&model, &params), None).unwrap();
        prop_assert_eq!(back_id, id);
        for path in &paths {
            prop_assert_eq!(back.get(path).to_bits(), params.get(path).to_bits());
        }
    }

    #[test]
    fn sim_config_round_trips(current in 1e-9f64..1e3, rtol in 1e-12f64..1e-2, dt_max in 1e-3f64..1e4) {
        let config = SimulationConfig { rtol, dt_max, ..SimulationConfig::new(current) };
        let back = read_sim_config(&write_sim_config(&config), SimulationConfig::new(1.0)).unwrap();
        prop_assert_eq!(back, config);
    }
}
