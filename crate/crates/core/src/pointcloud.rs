//! Point clouds reconstructed from disparity maps, with PLY import/export.

use std::fmt::Write as _;

use image::RgbImage;

use crate::camera::{Pixel, Point3D, StereoRig, EPSILON_DISPARITY};
use crate::error::{Error, Result};
use crate::maps::{ensure_same_dims, DisparityMap, NormalMap};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3D>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub normals: Option<Vec<[f32; 3]>>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Attribute sequences must match the point count.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if self.colors.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "color count != point count".into(),
            ));
        }
        if self.normals.as_ref().is_some_and(|c| c.len() != n) {
            return Err(Error::DimensionMismatch(
                "normal count != point count".into(),
            ));
        }
        Ok(())
    }
}

/// One point per usable pixel, in row-major pixel order. A pixel is usable
/// when its disparity is valid and above [`EPSILON_DISPARITY`], and, if a
/// normal map is given, its normal is valid too.
pub fn reconstruct(
    dm: &DisparityMap,
    rgb: Option<&RgbImage>,
    nm: Option<&NormalMap>,
    rig: &StereoRig,
) -> Result<PointCloud> {
    if let Some(img) = rgb {
        ensure_same_dims(
            "color image vs disparity",
            (img.width() as usize, img.height() as usize),
            dm.dims(),
        )?;
    }
    if let Some(nm) = nm {
        ensure_same_dims("normal map vs disparity", nm.dims(), dm.dims())?;
    }
    let w = dm.width();
    let k = rig.intrinsics();
    let mut cloud = PointCloud {
        points: Vec::new(),
        colors: rgb.map(|_| Vec::new()),
        normals: nm.map(|_| Vec::new()),
    };
    for (i, d) in dm.iter_valid() {
        let d = f64::from(d);
        if d <= EPSILON_DISPARITY {
            continue;
        }
        let normal = match nm {
            Some(nm) => match nm.get_index(i) {
                Some(n) => Some(n),
                None => continue,
            },
            None => None,
        };
        let (u, v) = (i % w, i / w);
        let z = rig.disparity_to_depth(d)?;
        cloud
            .points
            .push(k.backproject(Pixel::new(u as f64, v as f64), z)?);
        if let (Some(colors), Some(img)) = (cloud.colors.as_mut(), rgb) {
            colors.push(img.get_pixel(u as u32, v as u32).0);
        }
        if let (Some(normals), Some(n)) = (cloud.normals.as_mut(), normal) {
            normals.push(n);
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

impl PlyFormat {
    fn name(self) -> &'static str {
        match self {
            PlyFormat::Ascii => "ascii",
            PlyFormat::BinaryLittleEndian => "binary_little_endian",
        }
    }
}

/// Serializes as PLY with vertex properties `x y z [red green blue] [nx ny nz]`.
/// Coordinates and normals are written as float32, colors as uchar.
pub fn export_ply(pc: &PointCloud, format: PlyFormat) -> Result<Vec<u8>> {
    pc.validate()?;
    let mut header = String::new();
    let _ = writeln!(header, "ply");
    let _ = writeln!(header, "format {} 1.0", format.name());
    let _ = writeln!(header, "element vertex {}", pc.len());
    for p in ["x", "y", "z"] {
        let _ = writeln!(header, "property float {p}");
    }
    if pc.colors.is_some() {
        for p in ["red", "green", "blue"] {
            let _ = writeln!(header, "property uchar {p}");
        }
    }
    if pc.normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            let _ = writeln!(header, "property float {p}");
        }
    }
    let _ = writeln!(header, "end_header");

    let mut out = header.into_bytes();
    for (i, p) in pc.points.iter().enumerate() {
        let xyz = [p.x as f32, p.y as f32, p.z as f32];
        let color = pc.colors.as_ref().map(|c| c[i]);
        let normal = pc.normals.as_ref().map(|n| n[i]);
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{} {} {}", xyz[0], xyz[1], xyz[2]);
                if let Some(c) = color {
                    let _ = write!(line, " {} {} {}", c[0], c[1], c[2]);
                }
                if let Some(n) = normal {
                    let _ = write!(line, " {} {} {}", n[0], n[1], n[2]);
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for c in xyz {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                if let Some(c) = color {
                    out.extend_from_slice(&c);
                }
                if let Some(n) = normal {
                    for c in n {
                        out.extend_from_slice(&c.to_le_bytes());
                    }
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], little: bool) -> f64 {
        macro_rules! num {
            ($t:ty, $n:expr) => {{
                let arr: [u8; $n] = b[..$n].try_into().expect("sized slice");
                if little {
                    <$t>::from_le_bytes(arr) as f64
                } else {
                    <$t>::from_be_bytes(arr) as f64
                }
            }};
        }
        match self {
            ScalarType::I8 => f64::from(b[0] as i8),
            ScalarType::U8 => f64::from(b[0]),
            ScalarType::I16 => num!(i16, 2),
            ScalarType::U16 => num!(u16, 2),
            ScalarType::I32 => num!(i32, 4),
            ScalarType::U32 => num!(u32, 4),
            ScalarType::F32 => num!(f32, 4),
            ScalarType::F64 => num!(f64, 8),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, ScalarType)>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(Error::parse(offset, "unterminated PLY header"));
        };
        let line_start = offset;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::parse(line_start, "non-UTF-8 header line"))?
            .trim_end_matches('\r');
        offset += nl + 1;
        let mut tok = line.split_whitespace();
        let keyword = tok.next().unwrap_or("");
        if first {
            if line != "ply" {
                return Err(Error::parse(0, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        match keyword {
            "format" => {
                encoding = Some(match (tok.next(), tok.next()) {
                    (Some("ascii"), Some("1.0")) => Encoding::Ascii,
                    (Some("binary_little_endian"), Some("1.0")) => Encoding::BinaryLe,
                    (Some("binary_big_endian"), Some("1.0")) => Encoding::BinaryBe,
                    _ => {
                        return Err(Error::parse(
                            line_start,
                            format!("unsupported format line '{line}'"),
                        ))
                    }
                });
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::parse(line_start, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(line_start, "element without a valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            "property" => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_start, "property before any element"))?;
                let ty = tok.next().unwrap_or("");
                if ty == "list" {
                    return Err(Error::parse(
                        line_start,
                        "list properties are not supported",
                    ));
                }
                let ty = ScalarType::parse(ty).ok_or_else(|| {
                    Error::parse(line_start, format!("unknown property type '{ty}'"))
                })?;
                let name = tok
                    .next()
                    .ok_or_else(|| Error::parse(line_start, "property without name"))?;
                el.properties.push((name.to_string(), ty));
            }
            "end_header" => break,
            other => {
                return Err(Error::parse(
                    line_start,
                    format!("unexpected header keyword '{other}'"),
                ))
            }
        }
    }
    let encoding = encoding.ok_or_else(|| Error::parse(offset, "header lacks a format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
    })
}

/// Column indices of the supported vertex properties.
struct VertexLayout {
    xyz: [usize; 3],
    rgb: Option<[usize; 3]>,
    normal: Option<[usize; 3]>,
}

fn vertex_layout(el: &Element, header_offset: usize) -> Result<VertexLayout> {
    let find = |n: &str| el.properties.iter().position(|(p, _)| p == n);
    let group = |names: [&str; 3]| -> Result<Option<[usize; 3]>> {
        match names.map(find) {
            [Some(a), Some(b), Some(c)] => Ok(Some([a, b, c])),
            [None, None, None] => Ok(None),
            _ => Err(Error::parse(
                header_offset,
                format!("incomplete property group {names:?}"),
            )),
        }
    };
    let xyz = group(["x", "y", "z"])?
        .ok_or_else(|| Error::parse(header_offset, "vertex element lacks x/y/z"))?;
    Ok(VertexLayout {
        xyz,
        rgb: group(["red", "green", "blue"])?,
        normal: group(["nx", "ny", "nz"])?,
    })
}

/// Parses a PLY point cloud (ascii or binary, either endianness). Elements
/// other than `vertex` must come after it; unknown vertex properties are
/// skipped.
pub fn import_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let Some(vertex_pos) = header.elements.iter().position(|e| e.name == "vertex") else {
        return Err(Error::parse(header.body_offset, "no vertex element"));
    };
    if vertex_pos != 0 && header.elements[..vertex_pos].iter().any(|e| e.count > 0) {
        return Err(Error::parse(
            header.body_offset,
            "elements before 'vertex' are not supported",
        ));
    }
    let el = &header.elements[vertex_pos];
    let layout = vertex_layout(el, header.body_offset)?;
    let nprops = el.properties.len();

    let mut cloud = PointCloud {
        points: Vec::with_capacity(el.count),
        colors: layout.rgb.map(|_| Vec::with_capacity(el.count)),
        normals: layout.normal.map(|_| Vec::with_capacity(el.count)),
    };
    let mut row = vec![0.0f64; nprops];
    let mut offset = header.body_offset;

    for index in 0..el.count {
        match header.encoding {
            Encoding::Ascii => {
                let rest = &bytes[offset..];
                if rest.is_empty() {
                    return Err(Error::parse(offset, format!("missing vertex {index}")));
                }
                let nl = rest.iter().position(|&b| b == b'\n').unwrap_or(rest.len());
                let line = std::str::from_utf8(&rest[..nl])
                    .map_err(|_| Error::parse(offset, format!("vertex {index}: non-UTF-8 data")))?;
                let mut fields = line.split_whitespace();
                for (k, slot) in row.iter_mut().enumerate() {
                    let f = fields.next().ok_or_else(|| {
                        Error::parse(
                            offset,
                            format!("vertex {index}: expected {nprops} values, got {k}"),
                        )
                    })?;
                    *slot = f.parse().map_err(|_| {
                        Error::parse(offset, format!("vertex {index}: bad number '{f}'"))
                    })?;
                }
                offset += (nl + 1).min(rest.len());
            }
            Encoding::BinaryLe | Encoding::BinaryBe => {
                let little = header.encoding == Encoding::BinaryLe;
                for (slot, (_, ty)) in row.iter_mut().zip(&el.properties) {
                    let end = offset + ty.size();
                    if end > bytes.len() {
                        return Err(Error::parse(
                            offset,
                            format!("truncated body: missing vertex {index}"),
                        ));
                    }
                    *slot = ty.decode(&bytes[offset..end], little);
                    offset = end;
                }
            }
        }
        let [x, y, z] = layout.xyz.map(|k| row[k]);
        cloud.points.push(Point3D::new(x, y, z));
        if let (Some(colors), Some(idx)) = (cloud.colors.as_mut(), layout.rgb) {
            colors.push(idx.map(|k| row[k].clamp(0.0, 255.0) as u8));
        }
        if let (Some(normals), Some(idx)) = (cloud.normals.as_mut(), layout.normal) {
            normals.push(idx.map(|k| row[k] as f32));
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;

    fn rig() -> StereoRig {
        StereoRig::new(CameraIntrinsics::new(100.0, 100.0, 2.0, 1.0).unwrap(), 0.1).unwrap()
    }

    #[test]
    fn principal_point_pixel() {
        let mut dm = DisparityMap::masked(5, 3);
        dm.set(2, 1, 10.0);
        let pc = reconstruct(&dm, None, None, &rig()).unwrap();
        assert_eq!(pc.points, vec![Point3D::new(0.0, 0.0, 1.0)]);
    }

    #[test]
    fn masked_map_gives_empty_cloud() {
        let pc = reconstruct(&DisparityMap::masked(5, 3), None, None, &rig()).unwrap();
        assert!(pc.is_empty());
    }

    #[test]
    fn attributes_follow_points() {
        let mut dm = DisparityMap::filled(3, 2, 5.0);
        dm.invalidate(0, 0);
        let img = RgbImage::from_fn(3, 2, |x, y| image::Rgb([x as u8, y as u8, 7]));
        let mut nm = NormalMap::filled(3, 2, [0.0, 0.0, -1.0]);
        nm.invalidate(1, 1);
        let pc = reconstruct(&dm, Some(&img), Some(&nm), &rig()).unwrap();
        assert_eq!(pc.len(), 4);
        assert_eq!(pc.colors.as_ref().unwrap()[0], [1, 0, 7]);
        assert_eq!(pc.colors.as_ref().unwrap()[3], [2, 1, 7]);
        assert_eq!(pc.normals.as_ref().unwrap().len(), 4);
    }

    #[test]
    fn dimension_mismatch() {
        let dm = DisparityMap::filled(3, 2, 5.0);
        let img = RgbImage::new(2, 2);
        assert!(reconstruct(&dm, Some(&img), None, &rig()).is_err());
        let nm = NormalMap::masked(3, 3);
        assert!(reconstruct(&dm, None, Some(&nm), &rig()).is_err());
    }

    #[test]
    fn empty_cloud_header() {
        let bytes = export_ply(&PointCloud::default(), PlyFormat::Ascii).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("element vertex 0\n"));
        assert!(import_ply(&bytes).unwrap().is_empty());
    }

    #[test]
    fn header_property_order() {
        let pc = PointCloud {
            points: vec![Point3D::new(0.0, 0.0, 1.0)],
            colors: Some(vec![[1, 2, 3]]),
            normals: Some(vec![[0.0, 0.0, -1.0]]),
        };
        let bytes = export_ply(&pc, PlyFormat::BinaryLittleEndian).unwrap();
        let text = String::from_utf8_lossy(&bytes);
        let props: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_prefix("property "))
            .collect();
        assert_eq!(
            props,
            vec![
                "float x",
                "float y",
                "float z",
                "uchar red",
                "uchar green",
                "uchar blue",
                "float nx",
                "float ny",
                "float nz"
            ]
        );
    }

    #[test]
    fn single_point_round_trip() {
        let pc = PointCloud {
            points: vec![Point3D::new(0.0, 0.0, 1.0)],
            ..Default::default()
        };
        for f in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            assert_eq!(import_ply(&export_ply(&pc, f).unwrap()).unwrap(), pc);
        }
    }

    #[test]
    fn truncated_binary_names_vertex() {
        let pc = PointCloud {
            points: vec![Point3D::new(1.0, 2.0, 3.0), Point3D::new(4.0, 5.0, 6.0)],
            ..Default::default()
        };
        let mut bytes = export_ply(&pc, PlyFormat::BinaryLittleEndian).unwrap();
        bytes.truncate(bytes.len() - 2);
        let err = import_ply(&bytes).unwrap_err().to_string();
        assert!(err.contains("missing vertex 1"), "{err}");
        assert!(err.contains("parse error at byte"), "{err}");
    }

    #[test]
    fn truncated_ascii_names_vertex() {
        let pc = PointCloud {
            points: vec![Point3D::new(1.0, 2.0, 3.0), Point3D::new(4.0, 5.0, 6.0)],
            ..Default::default()
        };
        let text = String::from_utf8(export_ply(&pc, PlyFormat::Ascii).unwrap()).unwrap();
        let cut = text.trim_end().rfind('\n').unwrap() + 1;
        let err = import_ply(&text.as_bytes()[..cut]).unwrap_err().to_string();
        assert!(err.contains("missing vertex 1"), "{err}");
    }

    #[test]
    fn malformed_headers() {
        assert!(import_ply(b"plx\n").is_err());
        assert!(
            import_ply(b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n").is_err()
        );
        assert!(import_ply(
            b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n1\n"
        )
        .is_err());
        assert!(import_ply(b"ply\nelement vertex 0\nend_header\n").is_err());
    }

    #[test]
    fn big_endian_and_double_import() {
        let mut bytes = b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n".to_vec();
        for v in [1.5f64, -2.0, 3.25] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let pc = import_ply(&bytes).unwrap();
        assert_eq!(pc.points, vec![Point3D::new(1.5, -2.0, 3.25)]);
    }
}
