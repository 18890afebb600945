use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::{Dataset, Split};
use crate::error::{Error, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;
const CIFAR_PIXELS: usize = 3072;
const DATASET_MAGIC: &[u8; 4] = b"PBDS";
const DATASET_VERSION: u32 = 1;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn truncated(path: &Path, detail: impl Into<String>) -> Error {
    Error::Truncated { path: path.to_path_buf(), detail: detail.into() }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| truncated(path, format!("header ends before byte {}", at + 4)))
}

/// Loads an MNIST-format image/label pair. Pixels are scaled by 1/255 and the
/// dataset is tagged as a 10-class training split.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read(images)?;
    let magic = be_u32(&img, 0, images)?;
    if magic != IDX_IMAGES {
        return Err(Error::BadMagic { path: images.to_path_buf(), expected: IDX_IMAGES, found: magic });
    }
    let n = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let d = rows * cols;
    let body = &img[16..];
    if body.len() < n * d {
        return Err(truncated(images, format!("expected {} pixel bytes, found {}", n * d, body.len())));
    }

    let lab = read(labels)?;
    let magic = be_u32(&lab, 0, labels)?;
    if magic != IDX_LABELS {
        return Err(Error::BadMagic { path: labels.to_path_buf(), expected: IDX_LABELS, found: magic });
    }
    let n_labels = be_u32(&lab, 4, labels)? as usize;
    if lab.len() - 8 < n_labels {
        return Err(truncated(labels, format!("expected {n_labels} labels, found {}", lab.len() - 8)));
    }
    if n_labels != n {
        return Err(Error::CountMismatch { images: n, labels: n_labels });
    }

    let x = Array2::from_shape_fn((n, d), |(i, j)| body[i * d + j] as f64 / 255.0);
    let y = lab[8..8 + n].iter().map(|&b| b as usize).collect();
    Dataset::new(x, y, 10, Split::Train)
}

/// Loads and concatenates CIFAR-10 binary batches (1 label byte followed by
/// 3072 channel-major pixel bytes per record).
pub fn load_cifar_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let record = CIFAR_PIXELS + 1;
    let mut pixels = Vec::new();
    let mut y = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let bytes = read(path)?;
        if bytes.is_empty() || bytes.len() % record != 0 {
            return Err(truncated(path, format!("length {} is not a positive multiple of {record}", bytes.len())));
        }
        for chunk in bytes.chunks_exact(record) {
            y.push(chunk[0] as usize);
            pixels.extend(chunk[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    let x = Array2::from_shape_vec((y.len(), CIFAR_PIXELS), pixels).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Dataset::new(x, y, 10, Split::Train)
}

/// Writes the internal dataset file: magic, version, `n`, `d`, `k`, split
/// byte, then `n·d` little-endian f64 features and `n` little-endian u32 labels.
pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    let mut buf = Vec::with_capacity(33 + d.len() * (d.dim() * 8 + 4));
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(d.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(d.dim() as u64).to_le_bytes());
    buf.extend_from_slice(&(d.classes() as u64).to_le_bytes());
    buf.push(match d.split() {
        Split::Train => 0,
        Split::Test => 1,
    });
    for v in d.x().iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &l in d.y() {
        buf.extend_from_slice(&(l as u32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = read(path)?;
    if bytes.len() < 33 {
        return Err(truncated(path, "header"));
    }
    if &bytes[0..4] != DATASET_MAGIC {
        let found = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: u32::from_be_bytes(*DATASET_MAGIC), found });
    }
    let le_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize;
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported dataset version {version}")));
    }
    let (n, d, k) = (le_u64(8), le_u64(16), le_u64(24));
    let split = match bytes[32] {
        0 => Split::Train,
        1 => Split::Test,
        b => return Err(Error::InvalidArgument(format!("unknown split tag {b}"))),
    };
    let body = &bytes[33..];
    if body.len() != n * d * 8 + n * 4 {
        return Err(truncated(path, format!("body is {} bytes", body.len())));
    }
    let values: Vec<f64> = body[..n * d * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let y = body[n * d * 8..].chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize).collect();
    let x = Array2::from_shape_vec((n, d), values).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Dataset::new(x, y, k, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    fn idx_images() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255, 51, 102, 255, 0, 0, 204]);
        b
    }

    #[test]
    fn idx_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images());
        let lab = write(dir.path(), "lab", &[0, 0, 8, 1, 0, 0, 0, 2, 7, 3]);
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!(d.x(), &array![[0.0, 1.0, 0.2, 0.4], [1.0, 0.0, 0.0, 0.8]]);
        assert_eq!(d.y(), &[7, 3]);
        assert_eq!(d.classes(), 10);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images());
        let bad = write(dir.path(), "bad", &[0, 0, 8, 3, 0, 0, 0, 2, 7, 3]);
        assert!(matches!(load_idx(&img, &bad), Err(Error::BadMagic { .. })));
        let empty = write(dir.path(), "empty", &[]);
        assert!(matches!(load_idx(&empty, &bad), Err(Error::Truncated { .. })));
        let three = write(dir.path(), "three", &[0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3]);
        assert!(matches!(load_idx(&img, &three), Err(Error::CountMismatch { images: 2, labels: 3 })));
        let short = write(dir.path(), "short", &idx_images()[..20]);
        let lab = write(dir.path(), "lab", &[0, 0, 8, 1, 0, 0, 0, 2, 7, 3]);
        assert!(matches!(load_idx(&short, &lab), Err(Error::Truncated { .. })));
        let missing = dir.path().join("nope");
        assert!(matches!(load_idx(&missing, &lab), Err(Error::Io { .. })));
    }

    fn cifar_record(label: u8) -> Vec<u8> {
        let mut r = vec![label];
        r.extend((0..CIFAR_PIXELS).map(|i| (i % 256) as u8));
        r
    }

    #[test]
    fn cifar_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let one = write(dir.path(), "b1", &cifar_record(4));
        let d = load_cifar_bin(&[&one]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.y(), &[4]);
        for (i, v) in d.x().row(0).iter().enumerate() {
            assert_eq!(*v, (i % 256) as f64 / 255.0);
        }

        let mut two = cifar_record(1);
        two.extend(cifar_record(9));
        let two = write(dir.path(), "b2", &two);
        let d = load_cifar_bin(&[&one, &two]).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.y(), &[4, 1, 9]);

        let short = write(dir.path(), "short", &vec![0u8; 3072]);
        assert!(matches!(load_cifar_bin(&[&short]), Err(Error::Truncated { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn dataset_file_round_trip(
            n in 1usize..20,
            d in 1usize..6,
            seed in any::<u64>(),
            test_split in any::<bool>(),
        ) {
            let mut rng = crate::kernel::rng_from(seed);
            use rand::Rng;
            let x = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() * 1e3 - 5e2);
            let y = (0..n).map(|_| rng.random_range(0..4)).collect();
            let split = if test_split { Split::Test } else { Split::Train };
            let ds = Dataset::new(x, y, 4, split).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("ds.bin");
            write_dataset(&p, &ds).unwrap();
            let back = read_dataset(&p).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
