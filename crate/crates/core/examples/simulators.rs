//! Renders one hip-phantom view with each simulator and writes the three
//! images side by side, with timings.
//!
//! `cargo run --release --example simulators -- out_dir`

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthex_forge::geometry::{default_carm, PoseSamplerConfig, PoseSampler, Task};
use synthex_forge::grid::Image;
use synthex_forge::phantom::{PhantomKind, PhantomSpec};
use synthex_forge::projector::{default_step, project_labels, Simulator, DEFAULT_MIN_LABEL_PATH_MM};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "simulators_out".into()));
    std::fs::create_dir_all(&out)?;

    let phantom = PhantomSpec::new(PhantomKind::Hip).build()?;
    let center = phantom.volume.geometry().center();
    let pose = PoseSampler::new(PoseSamplerConfig::new(Task::Hip, 3))?.next_pose()?;
    let g = pose.geometry(default_carm().at_resolution(360), &center, 1)?;
    let step = default_step(phantom.volume.geometry());

    let simulators = [
        Simulator::Naive,
        Simulator::Heuristic { air_threshold_hu: -300.0 },
        Simulator::Realistic(Box::default()),
    ];
    let mut panels = Vec::new();
    for sim in &simulators {
        let t = Instant::now();
        let drr = sim.render(&phantom.volume, &g, step, &mut ChaCha8Rng::seed_from_u64(0))?;
        println!("{:>9}: {:.2} s", sim.tag(), t.elapsed().as_secs_f64());
        drr.image.write_png16(&out.join(format!("{}.png", sim.tag())))?;
        panels.push(drr.image);
    }
    let t = Instant::now();
    let mask = project_labels(&phantom.labels, &g, DEFAULT_MIN_LABEL_PATH_MM, step)?;
    println!("   labels: {:.2} s", t.elapsed().as_secs_f64());
    mask.map(|&c| c * 80).write_png8(&out.join("labels.png"))?;

    let (w, h) = panels[0].dims();
    let strip = Image::from_fn(w * panels.len(), h, |x, y| *panels[x / w].get(x % w, y));
    strip.write_png16(&out.join("comparison.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
