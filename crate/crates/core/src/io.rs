//! Persistence: tensor blobs with checksums, a strict JSON model
//! manifest, IDX image/label files, and synthetic dataset generation.
//!
//! Blob layout: magic "QTNS1", u8 dtype code (0 = f32), u8 rank,
//! rank × u32 little-endian dims, payload of little-endian f32, and a
//! trailing CRC32 over everything before it.

use crate::error::{Error, Result};
use crate::graph::{LayerSpec, ModelGraph};
use crate::quant::QuantSpec;
use crate::tensor::{Rng, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

const BLOB_MAGIC: &[u8; 5] = b"QTNS1";
const DTYPE_F32: u8 = 0;
const FORMAT_VERSION: u32 = 1;
/// Pixels are stored as bytes and mapped to [0,1] by dividing by 255;
/// no mean/std normalization. Recorded in the manifest so training and
/// evaluation cannot drift apart.
const NORMALIZATION: &str = "scale_1_255";

// ── Tensor blobs ──────────────────────────────────────────────────────

pub fn write_tensor_blob(t: &Tensor, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(16 + 4 * t.numel());
    buf.extend_from_slice(BLOB_MAGIC);
    buf.push(DTYPE_F32);
    buf.push(t.rank() as u8);
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_tensor_blob(path: &Path) -> Result<Tensor> {
    let name = path.display();
    let buf = fs::read(path)?;
    let fail = |what: &str| Error::Format(format!("blob {name}: {what}"));
    if buf.len() < BLOB_MAGIC.len() + 2 + 4 {
        return Err(fail("truncated header"));
    }
    if &buf[..5] != BLOB_MAGIC {
        return Err(fail("bad magic"));
    }
    if buf[5] != DTYPE_F32 {
        return Err(fail(&format!("unsupported dtype code {}", buf[5])));
    }
    let rank = buf[6] as usize;
    let dims_end = 7 + 4 * rank;
    if buf.len() < dims_end + 4 {
        return Err(fail("truncated dims"));
    }
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 7 + 4 * i;
        shape.push(u32::from_le_bytes(buf[off..off + 4].try_into().unwrap()) as usize);
    }
    let numel: usize = shape.iter().product();
    let payload_end = dims_end + 4 * numel;
    if buf.len() != payload_end + 4 {
        return Err(fail(&format!(
            "expected {} bytes for shape {shape:?}, got {}",
            payload_end + 4,
            buf.len()
        )));
    }
    let stored_crc = u32::from_le_bytes(buf[payload_end..].try_into().unwrap());
    let actual = crc32fast::hash(&buf[..payload_end]);
    if stored_crc != actual {
        return Err(fail(&format!(
            "checksum mismatch (stored {stored_crc:08x}, computed {actual:08x})"
        )));
    }
    let data = buf[dims_end..payload_end]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data)
}

// ── Model manifest ────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorRef {
    file: String,
    crc32: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    normalization: String,
    input_shape: Vec<usize>,
    classes: usize,
    layers: Vec<LayerSpec>,
    tensors: BTreeMap<String, TensorRef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    weight_quant: BTreeMap<String, QuantSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    act_quant: BTreeMap<String, QuantSpec>,
}

fn blob_crc(path: &Path) -> Result<u32> {
    let buf = fs::read(path)?;
    if buf.len() < 4 {
        return Err(Error::Format(format!("blob {} too short", path.display())));
    }
    Ok(u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap()))
}

/// Writes `manifest.json` plus one checksummed blob per tensor into `dir`.
pub fn save_model(model: &ModelGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tensors = BTreeMap::new();
    for (key, t) in &model.params {
        let file = format!("{key}.bin");
        let path = dir.join(&file);
        write_tensor_blob(t, &path)?;
        tensors.insert(
            key.clone(),
            TensorRef {
                crc32: blob_crc(&path)?,
                file,
            },
        );
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        normalization: NORMALIZATION.into(),
        input_shape: model.input_shape.clone(),
        classes: model.classes,
        layers: model.layers.clone(),
        tensors,
        weight_quant: model.weight_quant.clone(),
        act_quant: model.act_quant.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Loads a model directory written by `save_model`. Bit-exact inverse.
pub fn load_model(dir: &Path) -> Result<ModelGraph> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.is_file() {
        return Err(Error::Format(format!(
            "no manifest.json under {}",
            dir.display()
        )));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "manifest format version {} unsupported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    if manifest.normalization != NORMALIZATION {
        return Err(Error::Format(format!(
            "unknown normalization '{}'",
            manifest.normalization
        )));
    }
    let mut params = BTreeMap::new();
    for (key, tref) in &manifest.tensors {
        let path = dir.join(&tref.file);
        if !path.is_file() {
            return Err(Error::Format(format!(
                "manifest references missing blob '{}' for tensor '{key}'",
                tref.file
            )));
        }
        let t = read_tensor_blob(&path)?;
        let crc = blob_crc(&path)?;
        if crc != tref.crc32 {
            return Err(Error::Format(format!(
                "tensor '{key}': manifest crc {:08x} != blob crc {crc:08x}",
                tref.crc32
            )));
        }
        params.insert(key.clone(), t);
    }
    Ok(ModelGraph {
        layers: manifest.layers,
        params,
        input_shape: manifest.input_shape,
        classes: manifest.classes,
        act_quant: manifest.act_quant,
        weight_quant: manifest.weight_quant,
    })
}

// ── Datasets ──────────────────────────────────────────────────────────

/// Images in [0,1] with integer labels; axis 0 of `images` is the sample
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub images: Tensor,
    pub labels: Vec<u32>,
    pub classes: usize,
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], off: usize, what: &str) -> Result<u32> {
    buf.get(off..off + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Reads the standard big-endian IDX image/label pair. Pixels map to
/// [0,1] by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<DatasetHandle> {
    let ibuf = fs::read(images_path)?;
    let iname = images_path.display().to_string();
    let magic = be_u32(&ibuf, 0, &iname)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{iname}: bad image magic {magic:#010x}"
        )));
    }
    let n = be_u32(&ibuf, 4, &iname)? as usize;
    let rows = be_u32(&ibuf, 8, &iname)? as usize;
    let cols = be_u32(&ibuf, 12, &iname)? as usize;
    let expect = 16 + n * rows * cols;
    if ibuf.len() != expect {
        return Err(Error::Format(format!(
            "{iname}: {} bytes but {n}×{rows}×{cols} images need {expect}",
            ibuf.len()
        )));
    }
    let data: Vec<f32> = ibuf[16..].iter().map(|&b| b as f32 / 255.0).collect();
    let images = Tensor::new(vec![n, 1, rows, cols], data)?;

    let lbuf = fs::read(labels_path)?;
    let lname = labels_path.display().to_string();
    let lmagic = be_u32(&lbuf, 0, &lname)?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{lname}: bad label magic {lmagic:#010x}"
        )));
    }
    let ln = be_u32(&lbuf, 4, &lname)? as usize;
    if lbuf.len() != 8 + ln {
        return Err(Error::Format(format!(
            "{lname}: {} bytes but {ln} labels need {}",
            lbuf.len(),
            8 + ln
        )));
    }
    if ln != n {
        return Err(Error::Format(format!(
            "{n} images but {ln} labels"
        )));
    }
    let labels: Vec<u32> = lbuf[8..].iter().map(|&b| b as u32).collect();
    let classes = labels.iter().copied().max().map_or(1, |m| m as usize + 1);
    Ok(DatasetHandle {
        images,
        labels,
        classes,
    })
}

/// Writes the dataset as an IDX image/label file pair (pixels rounded to
/// bytes).
pub fn save_idx(ds: &DatasetHandle, images_path: &Path, labels_path: &Path) -> Result<()> {
    let shape = ds.images.shape();
    if shape.len() != 4 || shape[1] != 1 {
        return Err(Error::Shape(format!(
            "IDX writer expects N×1×H×W images, got {shape:?}"
        )));
    }
    let (n, rows, cols) = (shape[0], shape[2], shape[3]);
    let mut ibuf = Vec::with_capacity(16 + n * rows * cols);
    ibuf.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [n, rows, cols] {
        ibuf.extend_from_slice(&(d as u32).to_be_bytes());
    }
    ibuf.extend(
        ds.images
            .data()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(images_path, ibuf)?;

    let mut lbuf = Vec::with_capacity(8 + n);
    lbuf.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbuf.extend_from_slice(&(n as u32).to_be_bytes());
    lbuf.extend(ds.labels.iter().map(|&l| l as u8));
    fs::write(labels_path, lbuf)?;
    Ok(())
}

/// Class-conditional blob images: each class is a Gaussian bump at a
/// fixed position on a ring, with per-sample position jitter, brightness
/// jitter, and pixel noise. Classes are separable by their mean image but
/// noisy enough that quantization error shows up in accuracy.
pub fn synth_dataset(rng: &mut Rng, n: usize, classes: usize) -> DatasetHandle {
    let (h, w) = (28usize, 28usize);
    let mut data = vec![0.0f32; n * h * w];
    let mut labels = Vec::with_capacity(n);
    let ring = 8.5f64;
    let sigma = 2.5f64;
    for i in 0..n {
        let class = i % classes;
        labels.push(class as u32);
        let angle = std::f64::consts::TAU * class as f64 / classes as f64;
        let cx = 13.5 + ring * angle.cos() + rng.normal(0.0, 0.9);
        let cy = 13.5 + ring * angle.sin() + rng.normal(0.0, 0.9);
        let bright = 0.75 + 0.5 * rng.uniform();
        let img = &mut data[i * h * w..(i + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = bright * (-d2 / (2.0 * sigma * sigma)).exp()
                    + rng.normal(0.0, 0.12);
                img[y * w + x] = (v as f32).clamp(0.0, 1.0);
            }
        }
    }
    DatasetHandle {
        images: Tensor::new(vec![n, 1, h, w], data).expect("sized by construction"),
        labels,
        classes,
    }
}

/// Harder variant used for the quantization benchmarks. Every image shows
/// the same two concentric rings; the class is the *brightness balance*
/// between them, laid out on a logarithmic ladder from 0.3 to 3.0. Total
/// brightness is jittered per sample, so absolute intensity carries no
/// label information and the classifier must read the inner/outer ratio.
/// That readout is exactly what rounding bias breaks: a coherent per-unit
/// shift (all-down or all-up rounding) corrupts the balance estimate
/// directly, while zero-mean rounding noise mostly averages out — so
/// quantization quality differences show up sharply in accuracy.
pub fn synth_ring_dataset(rng: &mut Rng, n: usize, classes: usize) -> DatasetHandle {
    let (h, w) = (28usize, 28usize);
    let mut data = vec![0.0f32; n * h * w];
    let mut labels = Vec::with_capacity(n);
    let (r_out, r_in) = (9.0f64, 4.8f64);
    let (sig_out, sig_in) = (1.6f64, 1.4f64);
    let span = (3.0f64 / 0.3).ln();
    let steps = (classes - 1).max(1) as f64;
    for i in 0..n {
        let class = i % classes;
        labels.push(class as u32);
        let rho = (0.3f64.ln() + span * class as f64 / steps + rng.normal(0.0, 0.038)).exp();
        let bright = 0.52 + 0.48 * rng.uniform();
        let b_out = 1.25 * bright / (1.0 + rho);
        let b_in = 1.25 * bright * rho / (1.0 + rho);
        let img = &mut data[i * h * w..(i + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let (ux, uy) = (x as f64 - 13.5, y as f64 - 13.5);
                let rad = (ux * ux + uy * uy).sqrt();
                let g_out = (-(rad - r_out).powi(2) / (2.0 * sig_out * sig_out)).exp();
                let g_in = (-(rad - r_in).powi(2) / (2.0 * sig_in * sig_in)).exp();
                let v = b_out * g_out + b_in * g_in + rng.normal(0.0, 0.078);
                img[y * w + x] = (v as f32).clamp(0.0, 1.0);
            }
        }
    }
    DatasetHandle {
        images: Tensor::new(vec![n, 1, h, w], data).expect("sized by construction"),
        labels,
        classes,
    }
}

/// Uniform sample of `k` items without replacement.
pub fn take_calibration(ds: &DatasetHandle, k: usize, rng: &mut Rng) -> Result<DatasetHandle> {
    let n = ds.len();
    if k > n {
        return Err(Error::Size(format!(
            "requested {k} calibration samples from a set of {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    Ok(DatasetHandle {
        images: ds.images.gather_samples(&idx),
        labels: idx.iter().map(|&i| ds.labels[i]).collect(),
        classes: ds.classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{train_baseline, LayerKind, TrainConfig};
    use crate::tensor::rng_normal;

    #[test]
    fn blob_roundtrip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::from_seed(1);
        let t = rng_normal(&mut rng, 0.0, 1.0, 60).reshape(vec![3, 4, 5]).unwrap();
        let path = dir.path().join("t.bin");
        write_tensor_blob(&t, &path).unwrap();
        assert_eq!(read_tensor_blob(&path).unwrap(), t);
    }

    #[test]
    fn blob_corruption_detected() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let path = dir.path().join("t.bin");
        write_tensor_blob(&t, &path).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        let err = read_tensor_blob(&path).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn blob_truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let t = Tensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let path = dir.path().join("t.bin");
        write_tensor_blob(&t, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(read_tensor_blob(&path), Err(Error::Format(_))));
    }

    fn sample_model() -> ModelGraph {
        let mut rng = Rng::from_seed(2);
        let mut m = ModelGraph::small_cnn(&mut rng).unwrap();
        m.weight_quant
            .insert("conv1".into(), QuantSpec::new(4, 0.03, true, 0.5).unwrap());
        m.act_quant
            .insert("relu1".into(), QuantSpec::new(8, 0.02, false, 0.5).unwrap());
        m
    }

    #[test]
    fn model_roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_model();
        save_model(&m, dir.path()).unwrap();
        let loaded = load_model(dir.path()).unwrap();
        assert_eq!(loaded, m);
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample_model(), dir.path()).unwrap();
        let mpath = dir.path().join("manifest.json");
        let json = fs::read_to_string(&mpath)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        fs::write(&mpath, json).unwrap();
        let err = load_model(dir.path()).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn missing_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample_model(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("conv1.w.bin")).unwrap();
        let err = load_model(dir.path()).unwrap_err();
        assert!(err.to_string().contains("conv1.w"), "{err}");
    }

    #[test]
    fn unknown_manifest_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_model(&sample_model(), dir.path()).unwrap();
        let mpath = dir.path().join("manifest.json");
        let json = fs::read_to_string(&mpath)
            .unwrap()
            .replacen('{', "{\n  \"surprise\": true,", 1);
        fs::write(&mpath, json).unwrap();
        assert!(load_model(dir.path()).is_err());
    }

    #[test]
    fn idx_roundtrip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::from_seed(3);
        let mut ds = synth_dataset(&mut rng, 12, 3);
        // force a known extreme pixel
        ds.images.data_mut()[0] = 1.0;
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lbl.idx");
        save_idx(&ds, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.images.data()[0], 1.0);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.images.shape(), ds.images.shape());
        // all pixels faithful to one byte step
        for (a, b) in ds.images.data().iter().zip(back.images.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn idx_bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lbl.idx");
        fs::write(&ip, [0u8, 0, 8, 4, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1]).unwrap();
        fs::write(&lp, [0u8, 0, 8, 1, 0, 0, 0, 0]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format(_))));
    }

    #[test]
    fn idx_label_length_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = Rng::from_seed(4);
        let ds = synth_dataset(&mut rng, 4, 2);
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lbl.idx");
        save_idx(&ds, &ip, &lp).unwrap();
        let mut lbuf = fs::read(&lp).unwrap();
        lbuf.truncate(8 + 3);
        lbuf[7] = 3; // claim 3 labels
        fs::write(&lp, &lbuf).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(err.to_string().contains("labels"), "{err}");
    }

    #[test]
    fn synth_is_deterministic_and_bounded() {
        let a = synth_dataset(&mut Rng::from_seed(5), 64, 10);
        let b = synth_dataset(&mut Rng::from_seed(5), 64, 10);
        assert_eq!(a.images, b.images);
        assert_eq!(a.labels, b.labels);
        assert!(a.images.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
        let empty = synth_dataset(&mut Rng::from_seed(5), 0, 10);
        assert_eq!(empty.len(), 0);
    }

    #[test]
    fn synth_two_classes_linearly_separable() {
        let mut rng = Rng::from_seed(6);
        let ds = synth_dataset(&mut rng, 200, 2);
        let probe = ModelGraph::new(
            vec![
                LayerSpec { name: "f".into(), kind: LayerKind::Flatten },
                LayerSpec {
                    name: "fc".into(),
                    kind: LayerKind::Linear { inp: 784, out: 2, bias: true },
                },
            ],
            vec![1, 28, 28],
            2,
            &mut rng,
        )
        .unwrap();
        let cfg = TrainConfig { epochs: 30, lr: 0.1, batch: 32, ..Default::default() };
        let (_m, acc) = train_baseline(&probe, &ds, &ds, &cfg, &mut rng).unwrap();
        assert!(acc >= 0.99, "linear probe accuracy {acc}");
    }

    #[test]
    fn calibration_subset_sampling() {
        // images carry their own index so the subset is inspectable
        let n = 60_000;
        let ds = DatasetHandle {
            images: Tensor::new(vec![n, 1], (0..n).map(|i| i as f32).collect()).unwrap(),
            labels: (0..n).map(|i| (i % 10) as u32).collect(),
            classes: 10,
        };
        let mut rng = Rng::from_seed(7);
        let sub = take_calibration(&ds, 1024, &mut rng).unwrap();
        assert_eq!(sub.len(), 1024);
        let mut seen: Vec<u32> = sub.images.data().iter().map(|&v| v as u32).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 1024, "duplicate calibration indices");

        // identical seed → identical subset
        let again = take_calibration(&ds, 1024, &mut Rng::from_seed(7)).unwrap();
        assert_eq!(again.images, sub.images);

        // k = N is a permutation
        let small = DatasetHandle {
            images: Tensor::new(vec![10, 1], (0..10).map(|i| i as f32).collect()).unwrap(),
            labels: (0..10).map(|i| i as u32 % 2).collect(),
            classes: 2,
        };
        let perm = take_calibration(&small, 10, &mut rng).unwrap();
        let mut vals: Vec<u32> = perm.images.data().iter().map(|&v| v as u32).collect();
        vals.sort_unstable();
        assert_eq!(vals, (0..10).collect::<Vec<_>>());

        assert!(matches!(
            take_calibration(&small, 11, &mut rng),
            Err(Error::Size(_))
        ));
    }
}
