//! Text formats: trace CSV and the flat `key = value` configuration files.
//!
//! Floats are written in Rust's shortest round-trip form, so every value
//! read back is bit-identical to the one written.

use std::collections::HashSet;
use std::io::Write;

use crate::dae::{SimulationConfig, SimulationTrace};
use crate::error::ParseError;
use crate::model::{build_model, ModelId, ReactionModel};
use crate::params::{nominal_parameters, ParamPath, ParameterSet};

/// Shortest decimal that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

/// Column names of the trace CSV for `model`.
pub fn trace_header(model: &ReactionModel) -> Vec<String> {
    let mut h: Vec<String> = ["t_s", "V", "eps", "m_Sp"].iter().map(|s| s.to_string()).collect();
    h.extend(model.species().iter().map(|s| format!("m_{}", s.name)));
    let p = model.reaction_count();
    for prefix in ["i", "E", "eta"] {
        h.extend((1..=p).map(|j| format!("{prefix}_{j}")));
    }
    h.push("capacity_mAh_per_g".to_string());
    h
}

/// Writes one row per sample.
pub fn write_trace_csv<W: Write>(trace: &SimulationTrace, model: &ReactionModel, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(model))?;
    let capacity = trace.capacities();
    let mut row: Vec<String> = Vec::new();
    for (s, cap) in trace.samples.iter().zip(capacity) {
        row.clear();
        row.extend([s.state.t, s.outputs.voltage, s.state.eps, s.state.m_sp].map(format_float));
        row.extend(s.state.m.iter().map(|&x| format_float(x)));
        row.extend(s.outputs.currents.iter().map(|&x| format_float(x)));
        row.extend(s.outputs.potentials.iter().map(|&x| format_float(x)));
        row.extend(s.outputs.overpotentials.iter().map(|&x| format_float(x)));
        row.push(format_float(cap));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Splits `key = value # comment` lines, skipping blanks and comment lines.
/// Yields `(line_number, key, value)`.
fn entries(text: &str) -> impl Iterator<Item = Result<(usize, &str, &str), ParseError>> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return None;
        }
        Some(match line.split_once('=') {
            Some((key, value)) => Ok((k + 1, key.trim(), value.trim())),
            None => Err(ParseError::at_line(k + 1, format!("expected `key = value`, got `{line}`"))),
        })
    })
}

fn parse_float(line: usize, key: &str, value: &str) -> Result<f64, ParseError> {
    value
        .parse::<f64>()
        .map_err(|_| ParseError::at_line(line, format!("`{key}`: not a number: `{value}`")))
}

/// Renders a parameter file for `params`, every key present.
pub fn write_parameters(model: &ReactionModel, params: &ParameterSet) -> String {
    let mut s = format!("# lis0d parameter set\nmodel = {}\n", model.id());
    for path in ParameterSet::paths(model) {
        let key = path.display(model).to_string();
        s.push_str(&format!("{key} = {}  # {}\n", format_float(params.get(&path)), path.unit()));
    }
    s
}

/// Parses a parameter file.
///
/// The `model` key selects the reaction chain; it may be omitted when
/// `default_model` is given. Keys that are absent keep their nominal value.
/// Unknown and repeated keys are errors.
pub fn read_parameters(text: &str, default_model: Option<ModelId>) -> Result<(ModelId, ParameterSet), ParseError> {
    let mut model_id = default_model;
    let mut pending = Vec::new();
    for entry in entries(text) {
        let (line, key, value) = entry?;
        if key == "model" {
            let id: ModelId = value.parse().map_err(|e: ParseError| ParseError::at_line(line, e.message))?;
            if default_model.is_some_and(|d| d != id) {
                return Err(ParseError::at_line(
                    line,
                    format!("file is for {id}, but {} was requested", default_model.unwrap()),
                ));
            }
            model_id = Some(id);
        } else {
            pending.push((line, key, value));
        }
    }
    let id = model_id.ok_or_else(|| ParseError::new("missing `model` key"))?;
    let model = build_model(id);
    let mut params = nominal_parameters(id);
    let mut seen = HashSet::new();
    for (line, key, value) in pending {
        let path = ParamPath::parse(key, &model).map_err(|e| ParseError::at_line(line, e.message))?;
        if !seen.insert(path) {
            return Err(ParseError::at_line(line, format!("duplicate key `{key}`")));
        }
        params.set(&path, parse_float(line, key, value)?);
    }
    Ok((id, params))
}

const CONFIG_KEYS: [(&str, &str); 9] = [
    ("current", "A"),
    ("t_max", "s"),
    ("v_cutoff", "V"),
    ("eps_min", "-"),
    ("rtol", "-"),
    ("atol", "g"),
    ("dt_init", "s"),
    ("dt_max", "s"),
    ("constraint_tol", "A"),
];

fn config_slot<'a>(config: &'a mut SimulationConfig, key: &str) -> Option<&'a mut f64> {
    Some(match key {
        "current" => &mut config.current,
        "t_max" => &mut config.t_max,
        "v_cutoff" => &mut config.v_cutoff,
        "eps_min" => &mut config.eps_min,
        "rtol" => &mut config.rtol,
        "atol" => &mut config.atol,
        "dt_init" => &mut config.dt_init,
        "dt_max" => &mut config.dt_max,
        "constraint_tol" => &mut config.constraint_tol,
        _ => return None,
    })
}

/// Renders a simulation config in the same `key = value` format.
pub fn write_sim_config(config: &SimulationConfig) -> String {
    let mut copy = config.clone();
    let mut s = String::from("# lis0d simulation config\n");
    for (key, unit) in CONFIG_KEYS {
        let value = *config_slot(&mut copy, key).expect("known key");
        s.push_str(&format!("{key} = {}  # {unit}\n", format_float(value)));
    }
    s
}

/// Parses a simulation config; absent keys keep the values of `base`.
pub fn read_sim_config(text: &str, base: SimulationConfig) -> Result<SimulationConfig, ParseError> {
    let mut config = base;
    let mut seen = HashSet::new();
    for entry in entries(text) {
        let (line, key, value) = entry?;
        let v = parse_float(line, key, value)?;
        let slot = config_slot(&mut config, key)
            .ok_or_else(|| ParseError::at_line(line, format!("unknown key `{key}`")))?;
        *slot = v;
        if !seen.insert(key.to_string()) {
            return Err(ParseError::at_line(line, format!("duplicate key `{key}`")));
        }
    }
    Ok(config)
}
