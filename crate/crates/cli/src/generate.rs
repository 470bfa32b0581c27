//! `infbeta generate`: one scenario sample as a CSV file.

use crate::simulate::{load_scenario, SimulateOverrides};
use crate::write_file;
use anyhow::Result;
use robust_infbeta::simulation::scenario_sample;
use robust_infbeta::ObservationSet;
use std::path::Path;

/// Response first, then every non-intercept covariate once.
pub fn sample_csv(obs: &ObservationSet) -> Result<String> {
    let names = obs.names();
    let mut cols: Vec<(String, Vec<f64>)> = vec![("y".into(), obs.y().to_vec())];
    for (m, labels) in [(obs.s(), &names.discrete), (obs.x(), &names.mean), (obs.z(), &names.precision)] {
        for (j, label) in labels.iter().enumerate().skip(1) {
            if cols.iter().all(|(c, _)| c != label) {
                cols.push((label.clone(), m.column(j).iter().copied().collect()));
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(cols.iter().map(|c| c.0.as_str()))?;
    for i in 0..obs.n() {
        w.write_record(cols.iter().map(|c| c.1[i].to_string()))?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes replication `rep` of the scenario in `config` to `out`.
pub fn cmd_generate(config: &Path, out: &Path, rep: u64, seed: Option<u64>) -> Result<ObservationSet> {
    let spec = load_scenario(config, &SimulateOverrides { reps: None, seed })?;
    let obs = scenario_sample(&spec, rep)?;
    write_file(out, &sample_csv(&obs)?)?;
    Ok(obs)
}
