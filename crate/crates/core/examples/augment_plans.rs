//! Draws regular and strong augmentation plans, prints them as JSON, and
//! applies each to a rendered radiograph with its mask and landmarks.
//!
//! `cargo run --release --example augment_plans -- out_dir`

use std::path::PathBuf;

use nalgebra::Vector3;
use synthex_forge::augment::{apply_labeled, plan, Labeled, Level};
use synthex_forge::geometry::{default_carm, ProjectionGeometry, RigidTransform};
use synthex_forge::phantom::{PhantomKind, PhantomSpec};
use synthex_forge::projector::{render_sample, RenderInputs, RenderSettings, Simulator};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "augment_out".into()));
    std::fs::create_dir_all(&out)?;

    let p = PhantomSpec::new(PhantomKind::Hip).build()?;
    let inputs = RenderInputs {
        volume: &p.volume,
        labels: &p.labels,
        landmarks: &p.landmarks,
        volume_id: "hip",
        subject_id: "phantom",
    };
    let g = ProjectionGeometry::new(
        default_carm().at_resolution(256),
        RigidTransform::from_translation(Vector3::new(0.0, 0.0, -750.0)),
        1,
    )?;
    let sample = render_sample(&inputs, &g, &RenderSettings::new(Simulator::Naive, 4.0), 0, 0)?;
    sample.image.write_png16(&out.join("original.png"))?;
    let target = Labeled {
        image: sample.image,
        mask: Some(sample.seg_mask),
        landmarks: sample.landmark_px,
    };

    for (name, level) in [("regular", Level::Regular), ("strong", Level::Strong)] {
        for seed in 0..4 {
            let plan = plan(level, seed);
            println!("{name} {seed}: {}", plan.to_json());
            let aug = apply_labeled(&target, &plan)?;
            aug.image.write_png16(&out.join(format!("{name}_{seed}.png")))?;
            if let Some(mask) = &aug.mask {
                mask.map(|&c| c * 80).write_png8(&out.join(format!("{name}_{seed}.seg.png")))?;
            }
            let visible = aug.landmarks.iter().filter(|l| l.is_some()).count();
            println!("  {visible} of {} landmarks still visible", aug.landmarks.len());
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}
