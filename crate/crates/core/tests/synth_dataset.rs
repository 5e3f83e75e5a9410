use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use speckle_core::dataset::{DatasetIndex, Split};
use speckle_core::imaging::{read_image, ImageFormat};
use speckle_core::synth::{generate_dataset, synth_speckle_detailed, SynthDatasetSpec};

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn four_class_layout_and_split_counts() {
    let dir = tempfile::tempdir().unwrap();
    let index = generate_dataset(&SynthDatasetSpec::material_fixture(60, 64, 650.0, 7), dir.path()).unwrap();
    assert_eq!(index.classes, ["acrylic", "cardboard", "leather", "plywood"]);
    for (split, per_class) in [(Split::Train, 42), (Split::Val, 12), (Split::Test, 6)] {
        let records = index.split(split);
        assert_eq!(records.len(), 4 * per_class);
        for label in 0..4 {
            assert_eq!(records.iter().filter(|r| r.label == label).count(), per_class);
        }
    }
    let files = tree(dir.path());
    assert_eq!(files.keys().filter(|k| k.ends_with(".ppm")).count(), 240);
    assert!(files.contains_key("dataset.json"));
    assert!(files.contains_key("val/leather/42.ppm"));
    assert_eq!(ImageFormat::detect(&files["train/acrylic/0.ppm"]), Some(ImageFormat::Ppm));
    let manifest: serde_json::Value = serde_json::from_slice(&files["dataset.json"]).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["laser_wavelength_nm"], 650.0);
    assert_eq!(manifest["split_counts"]["val"], 12);

    let img = read_image(&index.train[0].path).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (64, 64, 3));
    assert_eq!(DatasetIndex::scan(dir.path()).unwrap(), index);
}

#[test]
fn regeneration_is_byte_identical() {
    let spec = SynthDatasetSpec::material_fixture(10, 32, 532.0, 3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_dataset(&spec, a.path()).unwrap();
    generate_dataset(&spec, b.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
}

#[test]
fn thirty_class_directories() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&SynthDatasetSpec::with_classes(30, 10, 8, 650.0, 1), dir.path()).unwrap();
    for split in Split::ALL {
        let n = fs::read_dir(dir.path().join(split.dir_name())).unwrap().count();
        assert_eq!(n, 30, "{split:?}");
    }
}

#[test]
fn adjacent_classes_are_three_sigma_apart() {
    let spec = SynthDatasetSpec::material_fixture(200, 64, 650.0, 7);
    let stats: Vec<(f64, f64)> = spec
        .classes
        .iter()
        .map(|class| {
            let counts: Vec<f64> = (0..200)
                .map(|i| synth_speckle_detailed(class, 650.0, 64, 7, i).unwrap().spot_count as f64)
                .collect();
            let mean = counts.iter().sum::<f64>() / 200.0;
            let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 199.0;
            (mean, var.sqrt())
        })
        .collect();
    let mut by_density: Vec<_> = spec.classes.iter().zip(&stats).collect();
    by_density.sort_by(|a, b| a.0.spot_density.total_cmp(&b.0.spot_density));
    for pair in by_density.windows(2) {
        let ((_, &(m0, s0)), (_, &(m1, s1))) = (pair[0], pair[1]);
        assert!(m1 - m0 >= 3.0 * s0.max(s1), "means {m0} vs {m1}, sds {s0} {s1}");
    }
}

#[test]
fn missing_tree_is_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        DatasetIndex::scan(dir.path()),
        Err(speckle_core::Error::EmptyDataset)
    ));
}
