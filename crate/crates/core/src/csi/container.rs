//! Binary container for labeled CSI datasets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CSI1" | u32 version | u32 A | u32 K | u32 T | u64 sample_count | u32 C
//! C x (u16 byte_len | utf-8 class name)
//! u64 metadata_len | utf-8 JSON metadata
//! sample_count x (u32 label | A*K*T x (f32 re | f32 im))   index order (a, k, t), t fastest
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex32;

use super::{CsiTensor, DataError, Dataset, DatasetMetadata, Dims, LabeledSample};

pub const MAGIC: [u8; 4] = *b"CSI1";
pub const VERSION: u32 = 1;

pub fn write_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    ds.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset_to(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset_to(ds: &Dataset, w: &mut impl Write) -> Result<(), DataError> {
    ds.validate()?;
    let dims = ds.dims();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for n in [dims.antennas, dims.subcarriers, dims.packets] {
        w.write_all(&to_u32(n, "dimension")?.to_le_bytes())?;
    }
    w.write_all(&(ds.len() as u64).to_le_bytes())?;
    w.write_all(&to_u32(ds.class_count(), "class count")?.to_le_bytes())?;
    for name in ds.class_names() {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
    }
    let meta = serde_json::to_vec(ds.metadata())?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(&meta)?;

    let mut buf = Vec::with_capacity(dims.len() * 8);
    for s in ds.samples() {
        w.write_all(&s.label.to_le_bytes())?;
        buf.clear();
        for z in s.csi.values() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let mut r = BufReader::new(File::open(path)?);
    read_dataset_from(&mut r)
}

pub fn read_dataset_from(r: &mut impl Read) -> Result<Dataset, DataError> {
    let mut magic = [0u8; 4];
    header(r.read_exact(&mut magic), "magic")?;
    if magic != MAGIC {
        return Err(DataError::BadMagic { found: magic });
    }
    let version = read_u32(r, "version")?;
    if version != VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let antennas = read_u32(r, "antenna count")? as usize;
    let subcarriers = read_u32(r, "subcarrier count")? as usize;
    let packets = read_u32(r, "packet count")? as usize;
    let dims = Dims::new(antennas, subcarriers, packets);
    if dims.validate().is_err() {
        return Err(DataError::MalformedHeader(format!(
            "non-positive dimensions {antennas}x{subcarriers}x{packets}"
        )));
    }
    let sample_count = read_u64(r, "sample count")?;
    let classes = read_u32(r, "class count")?;
    if classes == 0 {
        return Err(DataError::MalformedHeader("zero classes".into()));
    }

    let mut class_names = Vec::with_capacity(classes as usize);
    for c in 0..classes {
        let mut len = [0u8; 2];
        header(r.read_exact(&mut len), "class name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
        header(r.read_exact(&mut name), "class name")?;
        let name = String::from_utf8(name)
            .map_err(|_| DataError::MalformedHeader(format!("class name {c} is not utf-8")))?;
        class_names.push(name);
    }

    let meta_len = read_u64(r, "metadata length")?;
    let mut meta = Vec::new();
    let got = r.by_ref().take(meta_len).read_to_end(&mut meta)?;
    if got as u64 != meta_len {
        return Err(DataError::MalformedHeader("metadata blob truncated".into()));
    }
    let metadata: DatasetMetadata = serde_json::from_slice(&meta)
        .map_err(|e| DataError::MalformedHeader(format!("metadata: {e}")))?;

    let mut samples = Vec::with_capacity(sample_count.min(1 << 16) as usize);
    let mut buf = vec![0u8; dims.len() * 8];
    for i in 0..sample_count {
        let mut label = [0u8; 4];
        payload(r.read_exact(&mut label), i)?;
        let label = u32::from_le_bytes(label);
        if label >= classes {
            return Err(DataError::LabelOutOfRange {
                sample: i,
                label,
                classes,
            });
        }
        payload(r.read_exact(&mut buf), i)?;
        let values = buf
            .chunks_exact(8)
            .map(|c| {
                Complex32::new(
                    f32::from_le_bytes([c[0], c[1], c[2], c[3]]),
                    f32::from_le_bytes([c[4], c[5], c[6], c[7]]),
                )
            })
            .collect();
        samples.push(LabeledSample {
            csi: CsiTensor::new(dims, values)?,
            label,
        });
    }
    Dataset::new(dims, samples, class_names, metadata)
}

fn to_u32(n: usize, what: &str) -> Result<u32, DataError> {
    u32::try_from(n).map_err(|_| DataError::Invariant(format!("{what} {n} does not fit in u32")))
}

fn header(res: io::Result<()>, field: &str) -> Result<(), DataError> {
    res.map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DataError::MalformedHeader(format!("missing {field}")),
        _ => DataError::Io(e),
    })
}

fn payload(res: io::Result<()>, sample: u64) -> Result<(), DataError> {
    res.map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DataError::Truncated { sample },
        _ => DataError::Io(e),
    })
}

fn read_u32(r: &mut impl Read, field: &str) -> Result<u32, DataError> {
    let mut b = [0u8; 4];
    header(r.read_exact(&mut b), field)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, field: &str) -> Result<u64, DataError> {
    let mut b = [0u8; 8];
    header(r.read_exact(&mut b), field)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> DatasetMetadata {
        DatasetMetadata {
            generator_seed: 7,
            scene_digest: "abc".into(),
        }
    }

    fn small(n: usize) -> Dataset {
        let dims = Dims::new(3, 2, 4);
        let samples = (0..n)
            .map(|i| LabeledSample {
                csi: CsiTensor::from_fn(dims, |a, k, t| {
                    Complex32::new((i + a) as f32 * 0.5, (k * 4 + t) as f32 - 1.25)
                })
                .unwrap(),
                label: (i % 2) as u32,
            })
            .collect();
        Dataset::new(dims, samples, vec!["push".into(), "pull".into()], meta()).unwrap()
    }

    fn encode(ds: &Dataset) -> Vec<u8> {
        let mut out = Vec::new();
        write_dataset_to(ds, &mut out).unwrap();
        out
    }

    fn header_len(ds: &Dataset) -> usize {
        let names: usize = ds.class_names().iter().map(|n| 2 + n.len()).sum();
        let meta = serde_json::to_vec(ds.metadata()).unwrap().len();
        4 + 4 * 4 + 8 + 4 + names + 8 + meta
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let dims = Dims::new(3, 30, 500);
        let ds = Dataset::new(dims, vec![], vec!["a".into(), "b".into()], meta()).unwrap();
        let bytes = encode(&ds);
        assert_eq!(&bytes[..4], b"CSI1");
        assert_eq!(bytes.len(), header_len(&ds));
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 30);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 500);
        assert_eq!(u64::from_le_bytes(bytes[20..28].try_into().unwrap()), 0);
        let back = read_dataset_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn zero_sample_payload_is_all_zero_floats() {
        let dims = Dims::new(3, 30, 500);
        let sample = LabeledSample {
            csi: CsiTensor::zeros(dims).unwrap(),
            label: 1,
        };
        let ds = Dataset::new(dims, vec![sample], vec!["a".into(), "b".into()], meta()).unwrap();
        let bytes = encode(&ds);
        let h = header_len(&ds);
        assert_eq!(&bytes[h..h + 4], &1u32.to_le_bytes());
        let payload = &bytes[h + 4..];
        assert_eq!(payload.len(), 2 * dims.len() * 4);
        assert!(payload.iter().all(|&b| b == 0));
    }

    #[test]
    fn round_trip_is_exact_and_bytes_reproducible() {
        let ds = small(5);
        let a = encode(&ds);
        let b = encode(&ds.clone());
        assert_eq!(a, b);
        assert_eq!(read_dataset_from(&mut a.as_slice()).unwrap(), ds);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let mut bytes = encode(&small(1));
        bytes[..4].copy_from_slice(b"XSI1");
        assert!(matches!(
            read_dataset_from(&mut bytes.as_slice()),
            Err(DataError::BadMagic { found }) if &found == b"XSI1"
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let mut bytes = encode(&small(1));
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_dataset_from(&mut bytes.as_slice()),
            Err(DataError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncation_names_the_sample() {
        let ds = small(4);
        let bytes = encode(&ds);
        let per_sample = 4 + ds.dims().len() * 8;
        let cut = header_len(&ds) + 2 * per_sample + per_sample / 2;
        match read_dataset_from(&mut &bytes[..cut]) {
            Err(DataError::Truncated { sample }) => assert_eq!(sample, 2),
            other => panic!("unexpected {other:?}"),
        }
        // cut right after a label id
        let cut = header_len(&ds) + 3 * per_sample + 4;
        assert!(matches!(
            read_dataset_from(&mut &bytes[..cut]),
            Err(DataError::Truncated { sample: 3 })
        ));
    }

    #[test]
    fn truncated_header_is_malformed() {
        let bytes = encode(&small(1));
        assert!(matches!(
            read_dataset_from(&mut &bytes[..10]),
            Err(DataError::MalformedHeader(_))
        ));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let ds = small(2);
        let mut bytes = encode(&ds);
        let h = header_len(&ds);
        bytes[h..h + 4].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            read_dataset_from(&mut bytes.as_slice()),
            Err(DataError::LabelOutOfRange { sample: 0, label: 9, classes: 2 })
        ));
    }

    #[test]
    fn nan_payload_is_rejected_on_read() {
        let ds = small(1);
        let mut bytes = encode(&ds);
        let h = header_len(&ds) + 4;
        bytes[h..h + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            read_dataset_from(&mut bytes.as_slice()),
            Err(DataError::NonFinite { a: 0, k: 0, t: 0 })
        ));
    }
}
