mod common;

use std::time::{Duration, Instant};

use common::{coordinator, reference_digest};
use pmco_core::checkpoint::{CheckpointImage, MarkerOutcome};
use pmco_core::decision::MigrationType;
use pmco_core::tasks::TaskSpec;

fn uninterrupted(task: &TaskSpec) -> Vec<u8> {
    let c = coordinator(1.0);
    let mut h = c.launch("t", task, MigrationType::NonAware).unwrap();
    h.wait().unwrap().result
}

#[test]
fn restart_from_every_marker_in_a_separate_process() {
    let c = coordinator(1.0);
    for n in [1usize, 7, 50] {
        let task = TaskSpec::Matmul { n, seed: 9 };
        let want = reference_digest(n, 9);
        assert_eq!(uninterrupted(&task), want);
        for stop_at in [1u32, 2] {
            let mut h = c.launch("t", &task, MigrationType::Aware).unwrap();
            let img = match h.await_marker(|m| m == stop_at).unwrap() {
                MarkerOutcome::Checkpoint(img) => img,
                MarkerOutcome::Finished(_) => panic!("no marker {stop_at} for n={n}"),
            };
            h.kill();
            // survives a trip through bytes, as it would over the wire
            let img = CheckpointImage::decode(&img.encode()).unwrap();
            assert_eq!(img.meta.marker_id, stop_at);
            let mut r = c.restart(&img, None).unwrap();
            assert_eq!(r.wait().unwrap().result, want, "n={n} marker={stop_at}");
        }
    }
}

#[test]
fn signaled_checkpoint_resumes_mid_computation() {
    let c = coordinator(1.0);
    let task = TaskSpec::Kernel {
        steps: 400,
        chunk: 2000,
        pace_ms: 2,
        markers: 0,
        seed: 3,
    };
    let want = uninterrupted(&task);
    let mut h = c.launch("k", &task, MigrationType::NonAware).unwrap();
    std::thread::sleep(Duration::from_millis(200));
    let img = h.signal_checkpoint().unwrap();
    h.kill();
    assert!(!img.migration_aware());
    let mut r = c.restart(&img, None).unwrap();
    assert_eq!(r.wait().unwrap().result, want);
}

#[test]
fn interval_restart_counts_images() {
    let c = coordinator(1.0);
    // about 1.2 s of paced work
    let task = TaskSpec::Kernel {
        steps: 120,
        chunk: 10,
        pace_ms: 10,
        markers: 0,
        seed: 1,
    };
    let mut h = c.launch("k", &task, MigrationType::NonAware).unwrap();
    let img = h.signal_checkpoint().unwrap();
    h.kill();
    let t = Instant::now();
    let mut r = c.restart(&img, Some(Duration::from_millis(300))).unwrap();
    let done = r.wait().unwrap();
    let d = t.elapsed().as_secs_f64();
    let count = done.interval_images + 1;
    let lo = (d / 0.3).floor() as u32;
    let hi = (d / 0.3).ceil() as u32 + 1;
    assert!((lo..=hi).contains(&count), "{count} images over {d:.3} s");
    assert_eq!(done.result, uninterrupted(&task));
}
