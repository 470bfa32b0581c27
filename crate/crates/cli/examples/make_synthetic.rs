//! Regenerates `data/cfr_synthetic.csv`: case fatality rates by region with
//! log population and a development index, a third of them exactly zero,
//! one exactly one, and a few regions with unusually high rates.
//!
//! cargo run -p infbeta-cli --example make_synthetic

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};

const N: usize = 150;

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(20_210_527);
    let pop_dist = Normal::new(9.0, 1.3)?;
    let kappa = [16.5, -1.56, -5.2];
    let beta = [0.7, -0.155, -3.63];
    let gamma = [-4.95, 0.657, 3.75];

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/cfr_synthetic.csv");
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["Region", "Pop", "HDI", "CFR"])?;
    for i in 0..N {
        let pop: f64 = pop_dist.sample(&mut rng);
        let hdi: f64 = rng.random_range(0.40..0.96);
        let theta = expit(kappa[0] + kappa[1] * pop + kappa[2] * hdi);
        let mu = expit(beta[0] + beta[1] * pop + beta[2] * hdi);
        let phi = (gamma[0] + gamma[1] * pop + gamma[2] * hdi).exp();
        let mut cfr = if rng.random::<f64>() < theta {
            0.0
        } else {
            Beta::new(mu * phi, (1.0 - mu) * phi)?.sample(&mut rng)
        };
        // A single case that was fatal, and three regions with inflated rates.
        if i == 38 {
            cfr = 1.0;
        } else if i == 71 || i == 104 || i == 129 {
            cfr = rng.random_range(0.20..0.35);
        }
        w.write_record([format!("R{:03}", i + 1), format!("{pop:.4}"), format!("{hdi:.3}"), format!("{cfr:.6}")])?;
    }
    w.flush()?;
    println!("wrote {N} rows to {path}");
    Ok(())
}
