//! Writes a trace CSV with stride thinning, reads it back and emits the
//! plotting script, the same way the `simulate` and `plot` commands do.
//!
//! ```bash
//! cargo run --release --example trace_files
//! python3 <printed script path>   # needs matplotlib
//! ```

use delay_consensus::cli::{self, SimulateOptions};
use delay_consensus::export;

fn main() {
    let dir = std::env::temp_dir().join("delay-consensus-example");
    std::env::set_var(cli::OUT_DIR_ENV, &dir);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/leader6.json");
    let out = cli::cmd_simulate(path.as_ref(), &SimulateOptions { stride: 20, ..Default::default() }).unwrap();
    println!("trace   {}", out.trace_path.display());
    println!("metrics {}", out.metrics_path.display());

    let table = export::read_trace(&out.trace_path).unwrap();
    println!("{} rows x {} columns for {} agents with {} coordinates", table.rows.len(), table.header.len(), table.n_agents, table.dof);
    let last = table.rows.last().unwrap();
    println!("t = {}, q_1 = [{}, {}]", last[0], last[table.column("q_1_1").unwrap()], last[table.column("q_1_2").unwrap()]);

    let (script, manifest) = cli::cmd_plot(&out.trace_path, &[1, 2]).unwrap();
    println!("plot script {}\nmanifest    {}", script.display(), manifest.display());
}
