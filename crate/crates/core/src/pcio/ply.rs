//! Binary little-endian PLY with `x y z` as float and `red green blue` as
//! uchar, for viewing painted clouds in standard tools.

use crate::error::{Error, Result};
use crate::painting::PaintedPointCloud;

const PROPERTIES: &str = "property float x\n\
property float y\n\
property float z\n\
property uchar red\n\
property uchar green\n\
property uchar blue\n";

/// Vertex data read back from an exported PLY.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyPoints {
    pub xyz: Vec<[f32; 3]>,
    pub rgb: Vec<[u8; 3]>,
}

/// Paint in `[0, 1]` to a byte, scaled by 255 and rounded half-up.
pub(crate) fn paint_to_byte(v: f32) -> u8 {
    (v as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn export_ply(cloud: &PaintedPointCloud) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n{PROPERTIES}end_header\n",
        cloud.len()
    );
    let mut out = Vec::with_capacity(header.len() + cloud.len() * 15);
    out.extend_from_slice(header.as_bytes());
    for p in &cloud.points {
        for v in p.xyz {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(p.rgb.map(paint_to_byte));
    }
    out
}

/// Reads files in the layout written by [`export_ply`].
pub fn read_ply(bytes: &[u8]) -> Result<PlyPoints> {
    const END: &[u8] = b"end_header\n";
    let header_len = bytes
        .windows(END.len())
        .position(|w| w == END)
        .map(|i| i + END.len())
        .ok_or_else(|| Error::CorruptFile("PLY header has no end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_len])
        .map_err(|_| Error::CorruptFile("PLY header is not UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") || lines.next() != Some("format binary_little_endian 1.0") {
        return Err(Error::CorruptFile(
            "expected a binary little-endian PLY".into(),
        ));
    }
    let count = lines
        .next()
        .and_then(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| Error::CorruptFile("missing `element vertex` line".into()))?;
    let props: String = lines
        .take_while(|l| *l != "end_header")
        .map(|l| format!("{l}\n"))
        .collect();
    if props != PROPERTIES {
        return Err(Error::CorruptFile("unexpected vertex properties".into()));
    }
    let body = &bytes[header_len..];
    if body.len() != count * 15 {
        return Err(Error::CorruptFile(format!(
            "expected {} vertex bytes, found {}",
            count * 15,
            body.len()
        )));
    }
    let mut out = PlyPoints::default();
    for rec in body.chunks_exact(15) {
        let f = |i: usize| f32::from_le_bytes([rec[i], rec[i + 1], rec[i + 2], rec[i + 3]]);
        out.xyz.push([f(0), f(4), f(8)]);
        out.rgb.push([rec[12], rec[13], rec[14]]);
    }
    Ok(out)
}
