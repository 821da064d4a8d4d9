//! Binary little-endian PLY for Gaussian models and colored point clouds.
//!
//! A Gaussian record holds `f32` fields in the order used across the
//! splatting ecosystem:
//!
//! | offset (floats) | fields |
//! |---|---|
//! | 0 | `x y z` |
//! | 3 | `nx ny nz` (always zero) |
//! | 6 | `f_dc_0..2` |
//! | 9 | `f_rest_0..3(K-1)-1`, channel-major |
//! | 9 + 3(K-1) | `opacity` (logit) |
//! | 10 + 3(K-1) | `scale_0..2` (log) |
//! | 13 + 3(K-1) | `rot_0..3` (`w x y z`) |
//!
//! where `K` is the number of SH coefficients per channel. Degree 3 gives
//! 62 floats, 248 bytes per record.

use splatkit::densify::PointCloud;
use splatkit::scene::sh::coeff_count;
use splatkit::{GaussianSet, Real, Vec3};

use crate::error::{IoError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => f64::from(b[0] as i8),
            Self::U8 => f64::from(b[0]),
            Self::I16 => f64::from(i16::from_le_bytes([b[0], b[1]])),
            Self::U16 => f64::from(u16::from_le_bytes([b[0], b[1]])),
            Self::I32 => f64::from(i32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::U32 => f64::from(u32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F32 => f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])),
            Self::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    ty: Scalar,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

impl Element {
    fn record_size(&self) -> usize {
        self.props.iter().map(|p| p.ty.size()).sum()
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p.name == name)
    }
}

struct Header {
    elements: Vec<Element>,
    body_offset: usize,
}

fn ply_err(offset: usize, message: impl Into<String>) -> IoError {
    IoError::Ply {
        offset,
        message: message.into(),
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut elements: Vec<Element> = Vec::new();
    let mut line_no = 0;
    let mut saw_format = false;
    loop {
        let Some(len) = bytes[offset..].iter().position(|&b| b == b'\n') else {
            return Err(ply_err(offset, "header is not terminated by end_header"));
        };
        let raw = &bytes[offset..offset + len];
        let line = std::str::from_utf8(raw)
            .map_err(|_| ply_err(offset, "header line is not valid UTF-8"))?
            .trim_end_matches('\r');
        let at = offset;
        offset += len + 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        if line_no == 0 {
            if line != "ply" {
                return Err(ply_err(at, "missing 'ply' magic"));
            }
            line_no += 1;
            continue;
        }
        line_no += 1;
        match words.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "binary_little_endian", "1.0"] => saw_format = true,
            ["format", other, ..] => {
                return Err(ply_err(at, format!("unsupported format '{other}'")))
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| ply_err(at, format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: (*name).to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", ..] => {
                return Err(ply_err(at, "list properties are not supported"))
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| ply_err(at, format!("unknown property type '{ty}'")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| ply_err(at, "property declared before any element"))?;
                el.props.push(Property {
                    name: (*name).to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => return Err(ply_err(at, format!("malformed header line '{line}'"))),
        }
    }
    if !saw_format {
        return Err(ply_err(0, "header lacks a format line"));
    }
    Ok(Header {
        elements,
        body_offset: offset,
    })
}

/// Decodes the leading `vertex` element into rows of `f64` plus the element
/// description. Anything after the vertex block must belong to declared
/// elements.
fn read_vertices(bytes: &[u8]) -> Result<(Element, Vec<f64>, usize)> {
    let header = parse_header(bytes)?;
    let mut elements = header.elements.into_iter();
    let vertex = elements
        .next()
        .filter(|e| e.name == "vertex")
        .ok_or_else(|| ply_err(header.body_offset, "first element must be 'vertex'"))?;
    let rec = vertex.record_size();
    let start = header.body_offset;
    let need = vertex
        .count
        .checked_mul(rec)
        .ok_or_else(|| ply_err(start, "vertex block size overflows"))?;
    if bytes.len() - start < need {
        let complete = (bytes.len() - start) / rec.max(1);
        return Err(ply_err(
            start + complete * rec,
            format!(
                "truncated body: {} of {} vertex records present",
                complete, vertex.count
            ),
        ));
    }
    let rest: usize = elements.map(|e| e.count * e.record_size()).sum();
    if bytes.len() - start - need != rest {
        return Err(ply_err(
            start + need,
            format!(
                "{} bytes after the vertex block, header declares {rest}",
                bytes.len() - start - need
            ),
        ));
    }
    let mut values = Vec::with_capacity(vertex.count * vertex.props.len());
    let mut at = start;
    for _ in 0..vertex.count {
        for p in &vertex.props {
            values.push(p.ty.read(&bytes[at..]));
            at += p.ty.size();
        }
    }
    Ok((vertex, values, start))
}

fn gaussian_header(n: usize, rest: usize) -> String {
    let mut h = format!("ply\nformat binary_little_endian 1.0\nelement vertex {n}\n");
    let mut prop = |name: &str| {
        h.push_str("property float ");
        h.push_str(name);
        h.push('\n');
    };
    for name in [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2",
    ] {
        prop(name);
    }
    for j in 0..rest {
        prop(&format!("f_rest_{j}"));
    }
    for name in [
        "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    ] {
        prop(name);
    }
    h.push_str("end_header\n");
    h
}

/// Serializes a Gaussian set. Values are stored as `f32`.
pub fn write_ply<T: Real>(set: &GaussianSet<T>) -> Vec<u8> {
    let k = set.coeffs_per_gaussian();
    let rest = 3 * (k - 1);
    let mut out = gaussian_header(set.len(), rest).into_bytes();
    let floats = 17 + rest;
    out.reserve(set.len() * floats * 4);
    let mut put = |v: T| out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    for i in 0..set.len() {
        set.centers[i].0.iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(T::zero()));
        let sh = set.sh_of(i);
        sh[0].iter().for_each(|&v| put(v));
        for c in 0..3 {
            for coeff in &sh[1..] {
                put(coeff[c]);
            }
        }
        put(set.opacity_logits[i]);
        set.log_scales[i].0.iter().for_each(|&v| put(v));
        set.rotations[i].iter().for_each(|&v| put(v));
    }
    out
}

/// Parses a Gaussian PLY. The SH degree follows from the `f_rest_*` count.
pub fn read_ply<T: Real>(bytes: &[u8]) -> Result<GaussianSet<T>> {
    let (vertex, values, body) = read_vertices(bytes)?;
    let col = |name: &str| {
        vertex
            .column(name)
            .ok_or_else(|| ply_err(body, format!("vertex element lacks property '{name}'")))
    };
    let rest = vertex
        .props
        .iter()
        .filter(|p| p.name.starts_with("f_rest_"))
        .count();
    let degree = (0..=3)
        .find(|&d| 3 * (coeff_count(d) - 1) == rest)
        .ok_or_else(|| ply_err(body, format!("{rest} f_rest fields match no SH degree")))?;
    let k = coeff_count(degree);
    let pos = [col("x")?, col("y")?, col("z")?];
    let dc = [col("f_dc_0")?, col("f_dc_1")?, col("f_dc_2")?];
    let rest_cols = (0..rest)
        .map(|j| col(&format!("f_rest_{j}")))
        .collect::<Result<Vec<_>>>()?;
    let opacity = col("opacity")?;
    let scale = [col("scale_0")?, col("scale_1")?, col("scale_2")?];
    let rot = [col("rot_0")?, col("rot_1")?, col("rot_2")?, col("rot_3")?];

    let stride = vertex.props.len();
    let mut set = GaussianSet::with_capacity(degree, vertex.count);
    for row in values.chunks_exact(stride.max(1)).take(vertex.count) {
        let v = |c: usize| T::lit(row[c]);
        set.centers.push(Vec3::new(v(pos[0]), v(pos[1]), v(pos[2])));
        set.log_scales
            .push(Vec3::new(v(scale[0]), v(scale[1]), v(scale[2])));
        set.rotations
            .push([v(rot[0]), v(rot[1]), v(rot[2]), v(rot[3])]);
        set.opacity_logits.push(v(opacity));
        set.sh.push([v(dc[0]), v(dc[1]), v(dc[2])]);
        for j in 1..k {
            set.sh.push([
                v(rest_cols[j - 1]),
                v(rest_cols[k - 1 + j - 1]),
                v(rest_cols[2 * (k - 1) + j - 1]),
            ]);
        }
    }
    Ok(set)
}

fn color_byte<T: Real>(c: T) -> u8 {
    (c.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Writes `x y z` as `f32` and `red green blue` as bytes, the layout point
/// cloud viewers expect. Colors in `[0, 1]` map to `0..=255`; values
/// outside are clamped.
pub fn write_points_ply<T: Real>(cloud: &PointCloud<T>) -> Vec<u8> {
    let n = cloud.len();
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {n}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
    )
    .into_bytes();
    out.reserve(n * 15);
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        for &v in &p.0 {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        out.extend(c.iter().map(|&v| color_byte(v)));
    }
    out
}

/// Reads a point cloud. Byte colors are divided by 255; missing colors
/// default to mid gray.
pub fn read_points_ply<T: Real>(bytes: &[u8]) -> Result<PointCloud<T>> {
    let (vertex, values, body) = read_vertices(bytes)?;
    let col = |name: &str| vertex.column(name);
    let need = |name: &str| {
        col(name).ok_or_else(|| ply_err(body, format!("vertex element lacks property '{name}'")))
    };
    let pos = [need("x")?, need("y")?, need("z")?];
    let rgb = match (col("red"), col("green"), col("blue")) {
        (Some(r), Some(g), Some(b)) => Some([r, g, b]),
        _ => None,
    };
    let scale = |c: usize| match vertex.props[c].ty {
        Scalar::F32 | Scalar::F64 => 1.0,
        Scalar::U16 => 1.0 / 65535.0,
        _ => 1.0 / 255.0,
    };
    let stride = vertex.props.len();
    let mut cloud = PointCloud {
        positions: Vec::with_capacity(vertex.count),
        colors: Vec::with_capacity(vertex.count),
    };
    for row in values.chunks_exact(stride.max(1)).take(vertex.count) {
        cloud.positions.push(Vec3::new(
            T::lit(row[pos[0]]),
            T::lit(row[pos[1]]),
            T::lit(row[pos[2]]),
        ));
        cloud.colors.push(match rgb {
            Some(c) => c.map(|c| T::lit(row[c] * scale(c))),
            None => [T::lit(0.5); 3],
        });
    }
    Ok(cloud)
}
