//! Binary descriptor caches. `DSC1` holds a set of local descriptors with
//! their keypoint positions; `GDC1` holds one global descriptor. All fields
//! are little endian and all values are stored as f32.

use std::fs;
use std::path::Path;

use super::types::GlobalDescriptor;
use super::MiningError;
use crate::descriptor::DescriptorSet;
use crate::imaging::Keypoint;

/// Layout: `DSC1`, u32 count, u32 dim, count*dim descriptor values,
/// count*2 keypoint coordinates (x, y).
pub fn write_descriptor_file(path: &Path, set: &DescriptorSet) -> Result<(), MiningError> {
    let mut buf = Vec::with_capacity(12 + 4 * set.rows().len() + 8 * set.count());
    buf.extend_from_slice(b"DSC1");
    buf.extend_from_slice(&(set.count() as u32).to_le_bytes());
    buf.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    for v in set.rows() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    for kp in set.keypoints() {
        buf.extend_from_slice(&(kp.x as f32).to_le_bytes());
        buf.extend_from_slice(&(kp.y as f32).to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Reads a `DSC1` file back. The format does not carry the image id or
/// detector scores, so the id is supplied and scores come back as zero.
pub fn read_descriptor_file(path: &Path, image_id: u32) -> Result<DescriptorSet, MiningError> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "DSC1")?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    if dim == 0 {
        return Err(MiningError::BadDescriptorFile(
            "dimension must be positive".into(),
        ));
    }
    let mut rows = Vec::with_capacity(count * dim);
    for _ in 0..count * dim {
        rows.push(r.f32()? as f64);
    }
    let mut keypoints = Vec::with_capacity(count);
    for _ in 0..count {
        let x = r.f32()? as f64;
        let y = r.f32()? as f64;
        keypoints.push(Keypoint { x, y, score: 0.0 });
    }
    r.finish()?;
    Ok(DescriptorSet::new(dim, rows, keypoints, image_id))
}

/// Layout: `GDC1`, u32 dim, dim values.
pub fn write_global_file(path: &Path, global: &GlobalDescriptor) -> Result<(), MiningError> {
    let mut buf = Vec::with_capacity(8 + 4 * global.dim());
    buf.extend_from_slice(b"GDC1");
    buf.extend_from_slice(&(global.dim() as u32).to_le_bytes());
    for v in global.values() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_global_file(path: &Path) -> Result<GlobalDescriptor, MiningError> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(&bytes, "GDC1")?;
    let dim = r.u32()? as usize;
    let mut v = Vec::with_capacity(dim);
    for _ in 0..dim {
        v.push(r.f32()? as f64);
    }
    r.finish()?;
    GlobalDescriptor::new(v)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &str) -> Result<Self, MiningError> {
        if bytes.len() < 4 || &bytes[..4] != magic.as_bytes() {
            return Err(MiningError::BadDescriptorFile(format!(
                "missing {magic} magic"
            )));
        }
        Ok(Self { bytes, at: 4 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], MiningError> {
        if self.at + n > self.bytes.len() {
            return Err(MiningError::BadDescriptorFile(format!(
                "truncated at byte {}",
                self.bytes.len()
            )));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, MiningError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, MiningError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<(), MiningError> {
        if self.at != self.bytes.len() {
            return Err(MiningError::BadDescriptorFile(format!(
                "{} trailing bytes",
                self.bytes.len() - self.at
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use tempfile::tempdir;

    fn sample_set(image_id: u32, count: usize, dim: usize, seed: u64) -> DescriptorSet {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= n;
            }
            rows.extend(v);
        }
        let kps = (0..count)
            .map(|i| Keypoint {
                x: 10.0 + i as f64,
                y: 20.0 + i as f64,
                score: 1.0,
            })
            .collect();
        DescriptorSet::new(dim, rows, kps, image_id)
    }

    #[test]
    fn descriptor_round_trip_is_f32_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.dsc");
        let set = sample_set(9, 5, 16, 3);
        write_descriptor_file(&path, &set).unwrap();
        let back = read_descriptor_file(&path, 9).unwrap();
        assert_eq!(back.count(), 5);
        assert_eq!(back.dim(), 16);
        assert_eq!(back.image_id(), 9);
        for (a, b) in set.rows().iter().zip(back.rows()) {
            assert_eq!(*b, (*a as f32) as f64);
        }
        for (a, b) in set.keypoints().iter().zip(back.keypoints()) {
            assert_eq!(b.x, (a.x as f32) as f64);
            assert_eq!(b.y, (a.y as f32) as f64);
            assert_eq!(b.score, 0.0);
        }
    }

    #[test]
    fn descriptor_file_layout_is_stable() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.dsc");
        let set = sample_set(1, 2, 4, 7);
        write_descriptor_file(&path, &set).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DSC1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(bytes.len(), 12 + 4 * (2 * 4) + 4 * (2 * 2));
    }

    #[test]
    fn global_round_trip_is_f32_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("img.gd");
        let mut v = vec![0.5f64; 4];
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= n;
        }
        let g = GlobalDescriptor::new(v.clone()).unwrap();
        write_global_file(&path, &g).unwrap();
        let back = read_global_file(&path).unwrap();
        assert_eq!(back.dim(), 4);
        for (a, b) in v.iter().zip(back.values()) {
            assert_eq!(*b, (*a as f32) as f64);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.dsc");

        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(
            read_descriptor_file(&path, 1),
            Err(MiningError::BadDescriptorFile(_))
        ));

        let set = sample_set(1, 3, 8, 2);
        write_descriptor_file(&path, &set).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_descriptor_file(&path, 1),
            Err(MiningError::BadDescriptorFile(_))
        ));

        bytes.extend_from_slice(&[0; 16]);
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_descriptor_file(&path, 1),
            Err(MiningError::BadDescriptorFile(_))
        ));
    }

    #[test]
    fn non_unit_global_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.gd");
        let mut buf = b"GDC1".to_vec();
        buf.extend_from_slice(&2u32.to_le_bytes());
        buf.extend_from_slice(&(0.5f32).to_le_bytes());
        buf.extend_from_slice(&(0.5f32).to_le_bytes());
        fs::write(&path, buf).unwrap();
        assert!(matches!(
            read_global_file(&path),
            Err(MiningError::NotUnitNorm(_))
        ));
    }
}
