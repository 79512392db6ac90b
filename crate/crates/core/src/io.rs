//! On-disk formats for nodal fields.
//!
//! `EWF1` files start with one ASCII line `EWF1 nx nz hx hz x0 z0` followed by
//! `nx * nz` little-endian IEEE-754 doubles in x-fastest node order. Grid
//! parameters are printed with Rust's shortest round-trip formatting, so a file
//! written here reads back bit-exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::Grid2D;

const MAGIC: &str = "EWF1";

/// 17 significant digits, the format used by every text export.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn encode_field(field: &ScalarField) -> Vec<u8> {
    let g = field.grid();
    let header = format!(
        "{MAGIC} {} {} {} {} {} {}\n",
        g.nx(),
        g.nz(),
        g.hx(),
        g.hz(),
        g.x0(),
        g.z0()
    );
    let mut out = Vec::with_capacity(header.len() + 8 * g.len());
    out.extend_from_slice(header.as_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8], path: &Path) -> Result<ScalarField> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::format(path, "header is not ASCII"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 7 || tokens[0] != MAGIC {
        return Err(Error::format(
            path,
            format!("expected `{MAGIC} nx nz hx hz x0 z0`, found `{header}`"),
        ));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format(path, format!("bad integer `{s}` in header")))
    };
    let real = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| Error::format(path, format!("bad number `{s}` in header")))
    };
    let grid = Grid2D::with_origin(
        int(tokens[1])?,
        int(tokens[2])?,
        real(tokens[3])?,
        real(tokens[4])?,
        real(tokens[5])?,
        real(tokens[6])?,
    )
    .map_err(|e| Error::format(path, e.to_string()))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != 8 * grid.len() {
        return Err(Error::format(
            path,
            format!(
                "size mismatch: header announces {} values, payload holds {} bytes",
                grid.len(),
                payload.len()
            ),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ScalarField::new(grid, values).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_field(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_field(field)).map_err(|e| Error::io(path, e))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_field(&bytes, path)
}

/// CSV with header `x,z,value`, one line per node in index order.
pub fn write_csv(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    let g = field.grid();
    let mut out = String::from("x,z,value\n");
    for iz in 0..g.nz() {
        for ix in 0..g.nx() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_f64(g.x(ix)),
                fmt_f64(g.z(iz)),
                fmt_f64(field.get(ix, iz))
            ));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// 8-bit binary PGM quick-look with linear min-max scaling (row 0 = surface).
pub fn write_pgm(path: impl AsRef<Path>, field: &ScalarField) -> Result<()> {
    let path = path.as_ref();
    let g = field.grid();
    let (lo, hi) = (field.min(), field.max());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", g.nx(), g.nz()).into_bytes();
    out.extend(
        field
            .values()
            .iter()
            .map(|v| (255.0 * (v - lo) / span).round().clamp(0.0, 255.0) as u8),
    );
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// Storage order of a headerless raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterOrder {
    XFastest,
    /// Depth-fastest (trace by trace), as in most published velocity-model binaries.
    ZFastest,
}

/// Loads a headerless little-endian `f32` raster (e.g. a velocity model binary)
/// onto `grid`.
pub fn read_raw_f32(path: impl AsRef<Path>, grid: Grid2D, order: RasterOrder) -> Result<ScalarField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != 4 * grid.len() {
        return Err(Error::format(
            path,
            format!(
                "expected {} f32 values, file holds {} bytes",
                grid.len(),
                bytes.len()
            ),
        ));
    }
    let raw: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let values = match order {
        RasterOrder::XFastest => raw,
        RasterOrder::ZFastest => {
            let mut v = vec![0.0; grid.len()];
            for ix in 0..grid.nx() {
                for iz in 0..grid.nz() {
                    v[grid.index(ix, iz)] = raw[ix * grid.nz() + iz];
                }
            }
            v
        }
    };
    ScalarField::new(grid, values).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zeros_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.ewf");
        let f = ScalarField::zeros(Grid2D::new(3, 3, 10.0, 10.0).unwrap());
        write_field(&p, &f).unwrap();
        assert_eq!(read_field(&p).unwrap(), f);
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"EWF1 3 3 10 10 0 0\n"));
    }

    #[test]
    fn pi_is_bit_exact() {
        let g = Grid2D::new(3, 4, 0.5, 2.5).unwrap();
        let mut v = vec![1.0; g.len()];
        v[5] = std::f64::consts::PI;
        let f = ScalarField::new(g, v).unwrap();
        let back = decode_field(&encode_field(&f), Path::new("mem")).unwrap();
        assert_eq!(back.values()[5].to_bits(), std::f64::consts::PI.to_bits());
    }

    #[test]
    fn size_mismatch_is_reported() {
        let mut bytes = b"EWF1 3 3 10 10 0 0\n".to_vec();
        bytes.extend(std::iter::repeat_n(0u8, 8 * 8));
        let err = decode_field(&bytes, Path::new("x.ewf")).unwrap_err();
        assert!(err.to_string().contains("size mismatch"), "{err}");
    }

    #[test]
    fn malformed_header() {
        for h in ["EWF2 3 3 1 1 0 0\n", "EWF1 3 3 1 1 0\n", "EWF1 3 x 1 1 0 0\n", "EWF1 2 3 1 1 0 0\n"] {
            assert!(decode_field(h.as_bytes(), Path::new("h")).is_err(), "{h}");
        }
        assert!(decode_field(b"EWF1", Path::new("h")).is_err());
    }

    #[test]
    fn raw_raster_orders() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        let g = Grid2D::new(3, 4, 1.0, 1.0).unwrap();
        // z-fastest: value = 10*ix + iz
        let mut bytes = Vec::new();
        for ix in 0..3 {
            for iz in 0..4 {
                bytes.extend_from_slice(&((10 * ix + iz) as f32).to_le_bytes());
            }
        }
        fs::write(&p, &bytes).unwrap();
        let f = read_raw_f32(&p, g, RasterOrder::ZFastest).unwrap();
        assert_eq!(f.get(2, 3), 23.0);
        assert_eq!(f.get(1, 0), 10.0);
        let f = read_raw_f32(&p, g, RasterOrder::XFastest).unwrap();
        assert_eq!(f.values()[4], 10.0);
    }

    #[test]
    fn csv_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(3, 3, 10.0, 5.0).unwrap();
        let f = ScalarField::from_fn(g, |x, z| x + z).unwrap();
        write_csv(dir.path().join("f.csv"), &f).unwrap();
        let text = fs::read_to_string(dir.path().join("f.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,z,value");
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[3], "2.0000000000000000e1,0.0000000000000000e0,2.0000000000000000e1");
        write_pgm(dir.path().join("f.pgm"), &f).unwrap();
        let pgm = fs::read(dir.path().join("f.pgm")).unwrap();
        assert!(pgm.starts_with(b"P5\n3 3\n255\n"));
        assert_eq!(*pgm.last().unwrap(), 255);
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            nx in 3usize..7, nz in 3usize..7,
            hx in 1e-3f64..1e3, hz in 1e-3f64..1e3, x0 in -1e4f64..1e4,
            seed in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 49),
        ) {
            let g = Grid2D::with_origin(nx, nz, hx, hz, x0, 0.25).unwrap();
            let f = ScalarField::new(g, seed[..g.len()].to_vec()).unwrap();
            let back = decode_field(&encode_field(&f), Path::new("p")).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            for (a, b) in f.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
