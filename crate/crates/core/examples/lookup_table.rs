//! Builds a cosine-map lookup table, checks it against direct evaluation and
//! round-trips it through a cache directory.

use sparse_nngp::kernel::KernelConfig;
use sparse_nngp::lookup::{build_lookup, TableCache, DEFAULT_GRID_SIZE};

fn main() -> sparse_nngp::Result<()> {
    let f = 0.1;
    let table = build_lookup(f, DEFAULT_GRID_SIZE, KernelConfig::new(f)?.sigma)?;
    println!("f = {f}: {} nodes, max error {:.2e}", table.len(), table.max_interp_error(10_001)?);
    for c in [-1.0, -0.5, 0.0, 0.5, 0.9, 1.0] {
        println!("  map({c:>5}) = {:.10}", table.eval(c)?);
    }
    let dir = std::env::temp_dir().join("sngp-example-tables");
    let cache = TableCache::with_dir(&dir, DEFAULT_GRID_SIZE);
    cache.get(f)?;
    println!("cached at {}", dir.join(TableCache::file_name(f, DEFAULT_GRID_SIZE)).display());
    Ok(())
}
