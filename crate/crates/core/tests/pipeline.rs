use std::fs;
use std::path::Path;

use landmark_gate::geometry::{self, NormalizationSpec};
use landmark_gate::heatmap::{self, Heatmap};
use landmark_gate::pipeline::{self, Corruption, PipelineConfig, PipelineError};
use landmark_gate::shapestats::{self, FitOptions, Topology};

fn fixture_stats(dir: &Path, n: usize) -> std::path::PathBuf {
    let train = dir.join("train");
    pipeline::synth_fixture(n, Corruption::None, 21, &train).unwrap();
    let ds = geometry::parse_annotations(train.join(pipeline::ANNOTATIONS_FILE), pipeline::FIXTURE_LANDMARKS).unwrap();
    let topo = Topology::load(train.join(pipeline::TOPOLOGY_FILE), pipeline::FIXTURE_LANDMARKS).unwrap();
    let stats = shapestats::fit_stats(&ds, Some(topo), &FitOptions::new(NormalizationSpec::new(0, 1))).unwrap();
    let path = dir.join("stats.txt");
    stats.save(&path).unwrap();
    path
}

#[test]
fn clean_fixture_peaks_match_annotations() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pipeline::synth_fixture(10, Corruption::None, 5, dir.path()).unwrap();
    assert_eq!(manifest.images.len(), 10);
    let ds = geometry::parse_annotations(dir.path().join(pipeline::ANNOTATIONS_FILE), pipeline::FIXTURE_LANDMARKS).unwrap();
    for (id, shape) in ds.ids.iter().zip(&ds.shapes) {
        let h = Heatmap::load_pgm(dir.path().join(format!("{id}.pgm"))).unwrap();
        let cands = heatmap::extract_candidates(&h, pipeline::FIXTURE_LANDMARKS, heatmap::DEFAULT_WINDOW, heatmap::DEFAULT_MIN_VALUE);
        assert_eq!(cands.len(), pipeline::FIXTURE_LANDMARKS);
        let px = geometry::mm_to_pixels(shape, pipeline::FIXTURE_MM_PER_PX).unwrap();
        for p in px.points() {
            let err = cands
                .iter()
                .map(|c| (c.position.x - p.x).abs().max((c.position.y - p.y).abs()))
                .fold(f64::INFINITY, f64::min);
            assert!(err <= 0.5, "{id}: {err}");
        }
    }
}

#[test]
fn coincident_fixture_shares_a_pixel() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = pipeline::synth_fixture(5, Corruption::Coincident, 6, dir.path()).unwrap();
    for img in &manifest.images {
        let h = Heatmap::load_pgm(dir.path().join(format!("{}.pgm", img.id))).unwrap();
        let cands = heatmap::extract_candidates(&h, 100, heatmap::DEFAULT_WINDOW, heatmap::DEFAULT_MIN_VALUE);
        assert_eq!(cands.len(), pipeline::FIXTURE_LANDMARKS - 1);
    }
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn fixture_is_deterministic_and_prefix_stable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    pipeline::synth_fixture(6, Corruption::Displaced, 9, a.path()).unwrap();
    pipeline::synth_fixture(6, Corruption::Displaced, 9, b.path()).unwrap();
    pipeline::synth_fixture(8, Corruption::Displaced, 9, c.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(fs::read(a.path().join("img_0004.pgm")).unwrap(), fs::read(c.path().join("img_0004.pgm")).unwrap());
}

#[test]
fn zero_images_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(pipeline::synth_fixture(0, Corruption::None, 1, dir.path()).is_err());
}

#[test]
fn empty_directory_is_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let stats = fixture_stats(dir.path(), 20);
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let cfg = PipelineConfig::new(&stats, &empty, pipeline::FIXTURE_MM_PER_PX, pipeline::fixture_gate_config());
    assert!(matches!(pipeline::gate_directory(&cfg), Err(PipelineError::EmptyInput(_))));
}

#[test]
fn missing_stats_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::new(dir.path().join("nope.txt"), dir.path(), 0.9, pipeline::fixture_gate_config());
    assert!(pipeline::gate_directory(&cfg).is_err());
}

#[test]
fn corrupt_file_is_isolated_and_jobs_do_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let stats = fixture_stats(dir.path(), 40);
    let imgs = dir.path().join("imgs");
    pipeline::synth_fixture(6, Corruption::None, 22, &imgs).unwrap();

    let mut cfg = PipelineConfig::new(&stats, &imgs, pipeline::FIXTURE_MM_PER_PX, pipeline::fixture_gate_config());
    cfg.jobs = 1;
    let before = pipeline::gate_directory(&cfg).unwrap();
    assert!(!before.has_failures());

    fs::write(imgs.join("img_0002b.pgm"), b"P5\n4 4\n65535\nshort").unwrap();
    cfg.jobs = 4;
    let after = pipeline::gate_directory(&cfg).unwrap();
    assert!(after.has_failures());
    assert_eq!(after.summary.images, 7);
    assert_eq!(after.summary.failed, 1);
    let broken = after.verdicts.iter().find(|v| v.id == "img_0002b").unwrap();
    assert!(broken.error.is_some() && broken.decision.is_none());
    let healthy: Vec<_> = after.verdicts.iter().filter(|v| v.id != "img_0002b").cloned().collect();
    assert_eq!(healthy, before.verdicts);
    let ids: Vec<&str> = after.verdicts.iter().map(|v| v.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
}

#[test]
fn config_file_drives_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let stats = fixture_stats(dir.path(), 30);
    let imgs = dir.path().join("imgs");
    pipeline::synth_fixture(3, Corruption::None, 23, &imgs).unwrap();
    let mut cfg = PipelineConfig::new(&stats, &imgs, pipeline::FIXTURE_MM_PER_PX, pipeline::fixture_gate_config());
    cfg.seed = 99;
    let path = dir.path().join("cfg.txt");
    fs::write(&path, cfg.to_text()).unwrap();
    let loaded = PipelineConfig::load(&path).unwrap();
    assert_eq!(loaded, cfg);
    assert_eq!(pipeline::gate_directory(&loaded).unwrap(), pipeline::gate_directory(&cfg).unwrap());
}
