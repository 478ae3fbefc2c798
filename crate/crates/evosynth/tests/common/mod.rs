//! Shared fixtures for the integration and acceptance suites.

use std::path::{Path, PathBuf};

use evosynth::harness::{DataPaths, ExperimentConfig};
use evosynth::synthesis::{Alignment, EnvironmentalFactors, MatingPolicy};
use evosynth::trainer::TrainConfig;

/// Directory holding the four MNIST IDX files: `$MNIST_DIR` if set,
/// otherwise `data/mnist` at the workspace root.
#[allow(dead_code)]
pub fn mnist_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("MNIST_DIR") {
        return PathBuf::from(dir);
    }
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/mnist")
        .canonicalize()
        .unwrap_or_else(|_| PathBuf::from("data/mnist"))
}

#[allow(dead_code)]
pub fn require_mnist() -> DataPaths {
    let paths = DataPaths::in_dir(mnist_dir());
    assert!(
        paths.train_images.exists(),
        "MNIST IDX files not found under {}: download them there or set MNIST_DIR (see README)",
        mnist_dir().display()
    );
    paths
}

/// The desk-scale reference experiment: 784-64-10, population 10, m = 5,
/// R = 50/50, seven generations, three epochs per network.
#[allow(dead_code)]
pub fn reference_config(
    alignment: Alignment,
    master_seed: u64,
    output_dir: PathBuf,
) -> ExperimentConfig {
    ExperimentConfig {
        layer_widths: vec![784, 64, 10],
        population_size: 10,
        generations: 7,
        policy: MatingPolicy::new(alignment, 5),
        env: EnvironmentalFactors::default(),
        train_cfg: TrainConfig::default(),
        master_seed,
        data: require_mnist(),
        output_dir,
    }
}

/// Hand-rolled IDX writer, independent of the parser under test.
#[allow(dead_code)]
pub fn write_idx_pair(
    dir: &Path,
    pixels: &[Vec<u8>],
    labels: &[u8],
    rows: u32,
    cols: u32,
) -> (PathBuf, PathBuf) {
    let mut img = Vec::new();
    img.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    img.extend_from_slice(&(pixels.len() as u32).to_be_bytes());
    img.extend_from_slice(&rows.to_be_bytes());
    img.extend_from_slice(&cols.to_be_bytes());
    for image in pixels {
        assert_eq!(image.len(), (rows * cols) as usize);
        img.extend_from_slice(image);
    }
    let mut lbl = Vec::new();
    lbl.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    lbl.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lbl.extend_from_slice(labels);

    let images_path = dir.join("images-idx3-ubyte");
    let labels_path = dir.join("labels-idx1-ubyte");
    std::fs::write(&images_path, img).unwrap();
    std::fs::write(&labels_path, lbl).unwrap();
    (images_path, labels_path)
}

/// Small synthetic classification task written as IDX files: 4x4 images
/// where the label is encoded by which quadrant is bright. Learnable by a
/// tiny network, fast to train.
#[allow(dead_code)]
pub fn synthetic_task(dir: &Path, n: usize, seed: u64) -> DataPaths {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..10u8);
        let mut image = vec![0u8; 16];
        for (j, px) in image.iter_mut().enumerate() {
            let bright = (label as usize + j).is_multiple_of(4);
            *px = if bright {
                200 + rng.random_range(0..56)
            } else {
                rng.random_range(0..64)
            };
        }
        pixels.push(image);
        labels.push(label);
    }
    let train_dir = dir.join("train");
    let test_dir = dir.join("test");
    std::fs::create_dir_all(&train_dir).unwrap();
    std::fs::create_dir_all(&test_dir).unwrap();
    let split = n * 3 / 4;
    let (timg, tlbl) = write_idx_pair(&train_dir, &pixels[..split], &labels[..split], 4, 4);
    let (eimg, elbl) = write_idx_pair(&test_dir, &pixels[split..], &labels[split..], 4, 4);
    DataPaths {
        train_images: timg,
        train_labels: tlbl,
        test_images: eimg,
        test_labels: elbl,
    }
}

/// A small, fast experiment over the synthetic task.
#[allow(dead_code)]
pub fn tiny_config(
    data: DataPaths,
    alignment: Alignment,
    master_seed: u64,
    output_dir: PathBuf,
) -> ExperimentConfig {
    ExperimentConfig {
        layer_widths: vec![16, 6, 10],
        population_size: 4,
        generations: 2,
        policy: MatingPolicy::new(alignment, 2),
        env: EnvironmentalFactors::default(),
        train_cfg: TrainConfig {
            epochs: 1,
            batch_size: 8,
            learning_rate: 0.1,
            seed: 0,
        },
        master_seed,
        data,
        output_dir,
    }
}
