//! Encodes landmarks as Gaussian heatmaps, decodes them by argmax, and
//! reports the round-trip error and the MSE between shifted maps.
//!
//! `cargo run --release --example heatmaps`

use synthex_forge::labels2d::{decode, default_sigma_px, encode, mse_heatmap_loss};

fn main() -> anyhow::Result<()> {
    let (w, h) = (360, 360);
    let sigma = default_sigma_px(w);
    println!("sigma at {w} px: {sigma:.2} px");

    for px in [[10.0, 20.0], [179.5, 179.5], [300.3, 12.8], [359.0, 359.0]] {
        let map = encode(Some(px), w, h, sigma)?;
        let d = decode(&map);
        let err = ((d.pixel[0] as f64 - px[0]).powi(2) + (d.pixel[1] as f64 - px[1]).powi(2)).sqrt();
        println!(
            "({:6.1}, {:6.1}) -> {:?}  confidence {:.3}  error {err:.3} px",
            px[0], px[1], d.pixel, d.confidence
        );
    }

    let hidden = encode(None, w, h, sigma)?;
    println!("invisible landmark map is all zero: {}", hidden.is_zero());

    let reference = encode(Some([180.0, 180.0]), w, h, sigma)?;
    for shift in [0.0, 1.0, 3.0, 10.0] {
        let moved = encode(Some([180.0 + shift, 180.0]), w, h, sigma)?;
        println!("shift {shift:4.1} px -> mse {:.3e}", mse_heatmap_loss(&moved, &reference)?);
    }
    Ok(())
}
