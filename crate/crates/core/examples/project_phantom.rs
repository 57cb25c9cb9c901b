//! Samples poses for each task and projects the hip phantom's landmarks and
//! labels through the pinhole camera.
//!
//! `cargo run --release --example project_phantom`

use synthex_forge::geometry::{default_carm, PoseSampler, PoseSamplerConfig, Task};
use synthex_forge::phantom::{PhantomKind, PhantomSpec};
use synthex_forge::projector::{default_step, project_labels, project_landmarks};

fn main() -> anyhow::Result<()> {
    let phantom = PhantomSpec::new(PhantomKind::Hip).build()?;
    let center = phantom.volume.geometry().center();
    let camera = default_carm().at_resolution(128);
    let step = default_step(phantom.volume.geometry());

    for task in [Task::Hip, Task::Tool, Task::Covid] {
        let mut sampler = PoseSampler::new(PoseSamplerConfig::new(task, 11))?;
        println!("{task:?}");
        for i in 0..3 {
            let pose = sampler.next_pose()?;
            let g = pose.geometry(camera, &center, 1)?;
            let euler = pose.transform.euler_xyz_deg();
            println!(
                "  pose {i}: rot [{:6.1} {:6.1} {:6.1}] deg, sid {:.0} mm, shear {:?}",
                euler[0], euler[1], euler[2], pose.source_to_isocenter_mm, pose.shear_deg
            );
            for (lm, px) in phantom.landmarks.entries().iter().zip(project_landmarks(&phantom.landmarks, &g)) {
                match px {
                    Some([x, y]) => println!("    {:<20} ({x:7.2}, {y:7.2})", lm.name),
                    None => println!("    {:<20} outside the detector", lm.name),
                }
            }
            let mask = project_labels(&phantom.labels, &g, 1.0, step)?;
            let mut counts = [0usize; 4];
            mask.as_slice().iter().for_each(|&c| counts[c as usize] += 1);
            println!("    label pixels (bg, left, right, pelvis): {counts:?}");
        }
    }
    Ok(())
}
