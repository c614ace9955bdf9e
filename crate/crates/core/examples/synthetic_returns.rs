//! Writes a synthetic monthly return series for the bundled ten assets to
//! stdout, drawn from the joint lognormal model.
//!
//! cargo run -p kelly-core --example synthetic_returns -- 120 7 > returns.csv

use kelly_core::market_data::reference_inputs;
use kelly_core::monte_carlo::{sample_returns, CorrelationMode, JointReturnModel, SimConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let months: usize = args.next().map_or(Ok(120), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(7), |s| s.parse())?;

    let (stats, cov) = reference_inputs();
    let labels: Vec<String> = stats.iter().map(|s| s.label.clone()).collect();
    let model = JointReturnModel::new(stats, &cov, CorrelationMode::ReturnSpace)?;
    let config = SimConfig {
        sample_count: months,
        ..SimConfig::with_seed(seed)
    };
    let draws = sample_returns(&model, &config, 1)?;

    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record(&labels)?;
    for row in draws.iter_rows() {
        out.write_record(row.iter().map(|x| format!("{x:.6}")))?;
    }
    out.flush()?;
    Ok(())
}
