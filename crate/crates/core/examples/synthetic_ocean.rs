//! Draws a synthetic eddy field, samples it with nadir tracks and a wide
//! swath, and writes snapshots as 16-bit PGM images.

use std::path::PathBuf;

use dvarnet::io::write_pgm16;
use dvarnet::osse::{sample_all, simulate_truth, RegimeConfig, SamplingConfig};
use dvarnet::Grid;

fn main() -> dvarnet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synthetic_ocean".into()));
    let (t, h, w) = (20, 64, 64);
    let truth = simulate_truth(t, h, w, Grid::default(), &RegimeConfig::energetic(), 1)?;
    let (nadir, swath, all) = sample_all(&truth, &SamplingConfig::default(), 2)?;
    println!("truth rms {:.4} m over {t}x{h}x{w}", truth.rms());
    println!("nadir {} obs, swath {} obs, merged {} obs ({:.1}% of cells)",
        nadir.map_or(0, |o| o.count()),
        swath.map_or(0, |o| o.count()),
        all.count(),
        100.0 * all.count() as f64 / (t * h * w) as f64);

    let (lo, hi) = truth.data().iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    for day in [0, 3, 6] {
        write_pgm16(&out.join(format!("truth_{day:02}.pgm")), truth.frame(day), h, w, lo, hi)?;
        let seen: Vec<f64> = (0..h * w)
            .map(|c| if all.mask[day * h * w + c] { truth.frame(day)[c] } else { lo })
            .collect();
        write_pgm16(&out.join(format!("obs_{day:02}.pgm")), &seen, h, w, lo, hi)?;
    }
    println!("snapshots in {}", out.display());
    Ok(())
}
