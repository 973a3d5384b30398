//! Depth, mask and color rasters.
//!
//! Depth comes either as a 16-bit grayscale PNG holding `meters * 256`
//! (0 = no depth), or as raw little-endian `f32` meters, row-major, next to a
//! sidecar `<file>.hdr` with `width = W` and `height = H` lines. Masks are
//! 8- or 16-bit grayscale PNGs: 0 is background, `k > 0` is instance `k`.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::painting::{InstanceMaskSet, RgbImage};
use crate::projection::{is_valid_depth, DepthMap};

/// Raw PNG depth units per meter.
pub const DEPTH_PNG_SCALE: f32 = 256.0;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeader {
    width: usize,
    height: usize,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    if is_png(path) {
        return decode_depth_png(&read_bytes(path)?).map_err(|e| match e {
            Error::CorruptFile(m) => Error::CorruptFile(format!("{}: {m}", path.display())),
            other => other,
        });
    }
    let hdr_path = sidecar(path);
    let hdr_text = fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let hdr: RawHeader = toml::from_str(&hdr_text)
        .map_err(|e| Error::parse(hdr_path.display().to_string(), e.to_string()))?;
    let bytes = read_bytes(path)?;
    if bytes.len() != hdr.width * hdr.height * 4 {
        return Err(Error::CorruptFile(format!(
            "{}: {} bytes, header says {}x{} f32 values",
            path.display(),
            bytes.len(),
            hdr.width,
            hdr.height
        )));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    DepthMap::new(hdr.width, hdr.height, values)
}

pub fn decode_depth_png(bytes: &[u8]) -> Result<DepthMap> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::CorruptFile(format!("depth png: {e}")))?;
    match img {
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = buf.dimensions();
            let values = buf
                .into_raw()
                .into_iter()
                .map(|raw| raw as f32 / DEPTH_PNG_SCALE)
                .collect();
            DepthMap::new(w as usize, h as usize, values)
        }
        other => Err(Error::CorruptFile(format!(
            "depth png must be 16-bit grayscale, got {:?}",
            other.color()
        ))),
    }
}

/// Quantizes to 1/256 m; depths beyond the 16-bit range saturate and
/// invalid depths become 0.
pub fn encode_depth_png(depth: &DepthMap) -> Result<Vec<u8>> {
    let raw: Vec<u16> = depth
        .values()
        .iter()
        .map(|&d| {
            if is_valid_depth(d) {
                (d * DEPTH_PNG_SCALE).round().clamp(1.0, u16::MAX as f32) as u16
            } else {
                0
            }
        })
        .collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("buffer sized from depth map");
    encode_png(DynamicImage::ImageLuma16(buf))
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: PathBuf::from("<memory>"),
            source: e,
        })?;
    Ok(out.into_inner())
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_depth_png(depth)?)
}

/// Writes raw `f32` depth plus its `.hdr` sidecar.
pub fn write_depth_raw(path: &Path, depth: &DepthMap) -> Result<()> {
    let bytes: Vec<u8> = depth
        .values()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    write_bytes(path, &bytes)?;
    let hdr = format!("width = {}\nheight = {}\n", depth.width(), depth.height());
    write_bytes(&sidecar(path), hdr.as_bytes())
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_mask(path: &Path) -> Result<InstanceMaskSet> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids: Vec<u32> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(Error::CorruptFile(format!(
                "{}: mask must be single-channel, got {:?}",
                path.display(),
                other.color()
            )))
        }
    };
    InstanceMaskSet::from_ids(w, h, ids)
}

/// 16-bit grayscale; instance ids above 65535 are rejected.
pub fn write_mask_png(path: &Path, mask: &InstanceMaskSet) -> Result<()> {
    let raw = mask
        .ids()
        .iter()
        .map(|&id| {
            u16::try_from(id)
                .map_err(|_| Error::InvalidInput(format!("instance id {id} exceeds 16 bits")))
        })
        .collect::<Result<Vec<u16>>>()?;
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(mask.width() as u32, mask.height() as u32, raw)
            .expect("buffer sized from mask");
    write_bytes(path, &encode_png(DynamicImage::ImageLuma16(buf))?)
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    RgbImage::new(w as usize, h as usize, img.into_raw())
}

pub fn write_rgb_png(path: &Path, image: &RgbImage) -> Result<()> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(
        image.width() as u32,
        image.height() as u32,
        image.as_bytes().to_vec(),
    )
    .expect("buffer sized from image");
    write_bytes(path, &encode_png(DynamicImage::ImageRgb8(buf))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_png_round_trip_at_quantization() {
        let d = DepthMap::new(
            3,
            2,
            vec![1.0, 0.0, 2.5, -1.0, 80.0 + 1.0 / 256.0, f32::NAN],
        )
        .unwrap();
        let back = decode_depth_png(&encode_depth_png(&d).unwrap()).unwrap();
        assert_eq!(
            back.values(),
            &[1.0, 0.0, 2.5, 0.0, 80.0 + 1.0 / 256.0, 0.0]
        );
    }

    #[test]
    fn rejects_8bit_depth() {
        let buf: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_raw(1, 1, vec![3]).unwrap();
        let bytes = encode_png(DynamicImage::ImageLuma8(buf)).unwrap();
        assert!(matches!(
            decode_depth_png(&bytes),
            Err(Error::CorruptFile(_))
        ));
    }

    #[test]
    fn raw_depth_and_masks_and_rgb_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let d = DepthMap::new(2, 2, vec![1.25, f32::NAN, 0.0, 7.0e3]).unwrap();
        let p = dir.path().join("000001.f32");
        write_depth_raw(&p, &d).unwrap();
        let back = read_depth(&p).unwrap();
        let bits = |m: &DepthMap| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&d));

        fs::write(&p, [0u8; 12]).unwrap();
        assert!(matches!(read_depth(&p), Err(Error::CorruptFile(_))));

        let m = InstanceMaskSet::from_ids(3, 1, vec![0, 2, 300]).unwrap();
        let mp = dir.path().join("mask.png");
        write_mask_png(&mp, &m).unwrap();
        assert_eq!(read_mask(&mp).unwrap(), m);

        let img = RgbImage::new(2, 1, vec![1, 2, 3, 250, 251, 252]).unwrap();
        let ip = dir.path().join("img.png");
        write_rgb_png(&ip, &img).unwrap();
        assert_eq!(read_rgb(&ip).unwrap(), img);
        // an RGB file is not a mask
        assert!(read_mask(&ip).is_err());
    }
}
