mod common;

use std::collections::HashSet;

use hybridnet::data::{batches, load_idx, parse_idx_images, parse_idx_labels, Dataset, DataError, IdxImages, IdxLabels, Split};
use proptest::prelude::*;

proptest! {
    #[test]
    fn idx_images_round_trip(count in 0usize..5, rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let pixels: Vec<u8> = (0..count * rows * cols).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
        let img = IdxImages { count, rows, cols, pixels };
        let bytes = img.to_bytes();
        prop_assert_eq!(bytes.len(), 16 + count * rows * cols);
        prop_assert_eq!(&parse_idx_images(&bytes, "x").unwrap(), &img);
        if !bytes.is_empty() {
            let cut = (seed as usize) % bytes.len();
            let is_truncated = matches!(parse_idx_images(&bytes[..cut], "x"), Err(DataError::Truncated { .. }));
            prop_assert!(is_truncated);
        }
    }

    #[test]
    fn idx_labels_round_trip(labels in proptest::collection::vec(0u8..10, 0..40)) {
        let l = IdxLabels { labels };
        prop_assert_eq!(parse_idx_labels(&l.to_bytes(), "y").unwrap(), l);
    }

    #[test]
    fn batches_partition_the_split(n in 3usize..60, size in 1usize..17, seed in any::<u64>()) {
        let images = vec![0.5; n * 2];
        let labels = (0..n).map(|i| i % 2).collect();
        let d = Dataset::from_parts(
            hybridnet::data::ImageSet { shape: hybridnet::nn::Shape::flat(2), pixels: images, labels },
            hybridnet::data::ImageSet { shape: hybridnet::nn::Shape::flat(2), pixels: vec![0.1; 4], labels: vec![0, 1] },
            2,
        ).unwrap();
        let b = batches(&d, Split::Train, size, seed).unwrap();
        let flat: Vec<usize> = b.iter().flatten().copied().collect();
        prop_assert_eq!(flat.len(), n);
        prop_assert_eq!(flat.iter().copied().collect::<HashSet<_>>().len(), n);
        prop_assert!(b[..b.len() - 1].iter().all(|x| x.len() == size));
        prop_assert_eq!(b, batches(&d, Split::Train, size, seed).unwrap());
    }
}

#[test]
fn load_pair_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let img = IdxImages { count: 2, rows: 2, cols: 3, pixels: vec![0, 255, 51, 0, 0, 0, 1, 2, 3, 4, 5, 6] };
    std::fs::write(dir.path().join("i"), img.to_bytes()).unwrap();
    std::fs::write(dir.path().join("l"), IdxLabels { labels: vec![7, 1] }.to_bytes()).unwrap();
    let set = load_idx(&dir.path().join("i"), &dir.path().join("l")).unwrap();
    assert_eq!(set.labels, vec![7, 1]);
    assert_eq!(&set.pixels[..3], &[0.0, 1.0, 0.2]);
    assert_eq!(IdxImages::from_reals(2, 2, 3, &set.pixels), img);

    std::fs::write(dir.path().join("l"), IdxLabels { labels: vec![7] }.to_bytes()).unwrap();
    assert!(matches!(
        load_idx(&dir.path().join("i"), &dir.path().join("l")),
        Err(DataError::CountMismatch { images: 2, labels: 1 })
    ));
    let mut bad = img.to_bytes();
    bad[3] = 0x01;
    std::fs::write(dir.path().join("i"), &bad).unwrap();
    let err = load_idx(&dir.path().join("i"), &dir.path().join("l")).unwrap_err();
    assert!(err.to_string().contains("bad magic"), "{err}");
}

#[test]
fn real_mnist_files() {
    if !common::mnist_available() {
        eprintln!("MNIST not found; skipped");
        return;
    }
    let d = Dataset::mnist(&common::mnist_dir(), None, None).unwrap();
    assert_eq!(d.split(Split::Train).unwrap().len(), 60_000);
    assert_eq!(d.split(Split::Eval).unwrap().len(), 10_000);
    assert_eq!(d.shape().size(), 784);
    let mut counts = [0usize; 10];
    for &i in d.split(Split::Train).unwrap() {
        counts[d.label(i)] += 1;
    }
    // Every digit holds between 5.4k and 6.8k training images.
    assert!(counts.iter().all(|&c| (5_400..=6_800).contains(&c)), "{counts:?}");
    let px = d.image(0);
    assert!(px.iter().all(|&x| (0.0..=1.0).contains(&x)));
    assert_eq!(d.label(0), 5);
}
