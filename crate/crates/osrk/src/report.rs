//! Image montages and CSV reports.

use std::path::Path;

use osrk_core::eval::fmt_sig6;
use osrk_core::rpl::OpenPrediction;
use osrk_core::train::EpochLog;

use crate::error::{Error, Result};
use crate::fsio::atomic_write;

/// Grid of square tiles, each min-max scaled to 0..=255 on its own, separated
/// by one black pixel. Constant tiles render black.
pub fn montage(tiles: &[&[f64]], tile: usize, cols: usize) -> Result<image::GrayImage> {
    if tiles.is_empty() || tile == 0 || cols == 0 {
        return Err(Error::Data("montage needs at least one tile".into()));
    }
    if let Some(t) = tiles.iter().find(|t| t.len() != tile * tile) {
        return Err(Error::Data(format!("tile has {} values, expected {}", t.len(), tile * tile)));
    }
    let rows = tiles.len().div_ceil(cols);
    let (w, h) = (cols * (tile + 1) - 1, rows * (tile + 1) - 1);
    let mut img = image::GrayImage::new(w as u32, h as u32);
    for (i, t) in tiles.iter().enumerate() {
        let (lo, hi) = t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = hi - lo;
        let (ox, oy) = ((i % cols) * (tile + 1), (i / cols) * (tile + 1));
        for r in 0..tile {
            for c in 0..tile {
                let v = if span > 0.0 && span.is_finite() { (t[r * tile + c] - lo) / span } else { 0.0 };
                img.put_pixel((ox + c) as u32, (oy + r) as u32, image::Luma([(v * 255.0).round() as u8]));
            }
        }
    }
    Ok(img)
}

pub fn save_png(path: &Path, img: &image::GrayImage) -> Result<()> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Image { path: path.into(), source: e })?;
    atomic_write(path, &bytes)
}

/// Roughly square column count for `n` tiles.
pub fn grid_cols(n: usize) -> usize {
    (n as f64).sqrt().ceil().max(1.0) as usize
}

pub const LOSS_CSV_HEADER: &str = "epoch,total,classification,boundary";

pub fn loss_csv(logs: &[EpochLog]) -> String {
    let mut s = format!("{LOSS_CSV_HEADER}\n");
    for l in logs {
        s.push_str(&format!(
            "{},{},{},{}\n",
            l.epoch,
            fmt_sig6(l.total),
            fmt_sig6(l.classification),
            fmt_sig6(l.boundary)
        ));
    }
    s
}

/// `sample_id,true_label,predicted,gating_distance,e_1..e_m`; rejected
/// samples are predicted `UNKNOWN`.
pub fn embeddings_csv(
    ids: &[String],
    truth: &[String],
    predictions: &[OpenPrediction],
    class_names: &[String],
    embeddings: &[f64],
    dim: usize,
) -> String {
    let mut s = String::from("sample_id,true_label,predicted,gating_distance");
    for j in 1..=dim {
        s.push_str(&format!(",e_{j}"));
    }
    s.push('\n');
    for (i, p) in predictions.iter().enumerate() {
        let predicted = p.class.map_or("UNKNOWN", |k| class_names[k].as_str());
        s.push_str(&format!("{},{},{},{}", ids[i], truth[i], predicted, fmt_sig6(p.gating_distance)));
        for v in &embeddings[i * dim..(i + 1) * dim] {
            s.push(',');
            s.push_str(&fmt_sig6(*v));
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn montage_layout_and_scaling() {
        let a: Vec<f64> = (0..4).map(f64::from).collect();
        let flat = vec![7.0; 4];
        let img = montage(&[&a, &flat, &a], 2, 2).unwrap();
        assert_eq!(img.dimensions(), (5, 5));
        assert_eq!(img.get_pixel(0, 0).0[0], 0);
        assert_eq!(img.get_pixel(1, 1).0[0], 255);
        assert_eq!(img.get_pixel(4, 1).0[0], 0);
        assert_eq!(img.get_pixel(1, 4).0[0], 255);
        assert!(montage(&[&a[..3]], 2, 1).is_err());
    }

    #[test]
    fn loss_rows() {
        let logs = vec![EpochLog { epoch: 0, total: 1.5, classification: 1.0, boundary: 0.5, steps: vec![] }];
        assert_eq!(loss_csv(&logs), "epoch,total,classification,boundary\n0,1.50000,1.00000,0.500000\n");
    }
}
