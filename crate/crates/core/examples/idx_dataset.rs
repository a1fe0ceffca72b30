//! Writes a tiny IDX image/label pair, loads it back and draws a seeded split.

use sparse_nngp::data::{load_idx, subsample, write_idx_images, write_idx_labels};

fn main() -> sparse_nngp::Result<()> {
    let dir = std::env::temp_dir().join("sngp-example-idx");
    std::fs::create_dir_all(&dir).map_err(|e| sparse_nngp::Error::Io { path: dir.clone(), source: e })?;
    let (img, lbl) = (dir.join("images"), dir.join("labels"));
    let pixels: Vec<u8> = (0..6 * 4 * 4).map(|i| (i * 11 % 256) as u8).collect();
    write_idx_images(&img, &pixels, 6, 4, 4)?;
    write_idx_labels(&lbl, &[0, 1, 2, 3, 4, 5])?;
    let ds = load_idx(&img, &lbl)?;
    println!("{} images of {} pixels, targets {}x{}", ds.len(), ds.x.ncols(), ds.y.nrows(), ds.y.ncols());
    let split = subsample(&ds, 4, 42)?;
    println!("train {:?} test {:?}", split.train_idx, split.test_idx);
    Ok(())
}
