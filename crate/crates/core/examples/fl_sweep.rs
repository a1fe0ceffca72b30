//! A small f x L sweep and theory grid on circulant data, printed as CSV.

use sparse_nngp::experiments::{run_sweep, run_theory, sweep_csv, theory_csv, DatasetSource, SweepSpec};
use sparse_nngp::lookup::shared_tables;

fn main() -> sparse_nngp::Result<()> {
    let mut spec =
        SweepSpec::new(DatasetSource::Circulant { m_total: 200, n_blocks: 2 }, vec![0.1, 0.5], vec![1, 4, 8], 120);
    spec.trials = 2;
    let (rows, cells) = run_sweep(&spec, shared_tables())?;
    print!("{}", sweep_csv(&rows, &cells));
    print!("{}", theory_csv(&run_theory(&spec, shared_tables())?));
    Ok(())
}
