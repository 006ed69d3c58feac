use ohc::io::{self, PlyEncoding};
use ohc::pipeline::LabeledCloud;
use ohc::{Point3, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(
        (0..n)
            .map(|_| Point3::new(rng.gen_range(-1e3..1e3), rng.gen_range(-1.0..1.0), rng.gen_range(-1e-3..1e-3)))
            .collect(),
    )
    .unwrap()
}

#[test]
fn binary_ply_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(500, 1);
    let path = dir.path().join("cloud.ply");
    io::write_ply(&path, &cloud, PlyEncoding::BinaryLittleEndian).unwrap();
    assert_eq!(io::read_cloud(&path).unwrap(), cloud);
}

#[test]
fn labeled_ply_round_trips_to_nine_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(300, 2);
    let labels: Vec<u32> = (0..300).map(|i| (i % 40) as u32).collect();
    let ground = labels.iter().map(|&l| l == 0).collect();
    let path = dir.path().join("labeled.ply");
    io::write_labeled_ply(&path, &LabeledCloud { cloud: cloud.clone(), labels, ground }).unwrap();
    let back = io::read_ply(&path).unwrap();
    assert_eq!(back.len(), cloud.len());
    for (a, b) in cloud.points().iter().zip(back.points()) {
        for k in 0..3 {
            let printed: f64 = format!("{:.8e}", a[k]).parse().unwrap();
            assert_eq!(b[k], printed);
        }
    }
}

#[test]
fn xyz_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(100, 3);
    let path = dir.path().join("cloud.xyz");
    io::write_xyz(&path, &cloud).unwrap();
    assert_eq!(io::read_cloud(&path).unwrap(), cloud);
}

#[test]
fn segmentation_dendrogram_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = random_cloud(120, 4);
    let seg = ohc::run(&cloud, ohc::OhcParams::default()).unwrap();
    let path = dir.path().join("tree.json");
    io::write_dendrogram(&path, &seg.dendrogram).unwrap();
    assert_eq!(io::read_dendrogram(&path).unwrap(), seg.dendrogram);
}
