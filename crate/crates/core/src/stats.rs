//! Dataset distribution statistics: width-normalized disparity histograms,
//! normal-angle histograms, and left/right brightness joint histograms over
//! disparity-matched pixels.
//!
//! Histograms keep raw tallies. Any display transform (log1p) is metadata and
//! never touches the stored counts, so histograms computed per image can be
//! merged into exactly the histogram a single pass would have produced.

use std::fmt::Write as _;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::d2n::normal_to_angles;
use crate::error::{Error, Result};
use crate::maps::{ensure_same_dims, DisparityMap, NormalMap};
use crate::numeric::{norm3, CompensatedSum};

/// Scale applied to `disparity / width` before binning.
pub const DISPARITY_SCALE: f64 = 200.0;
/// Range of the scaled disparity histogram.
pub const DISPARITY_RANGE: (f64, f64) = (0.0, 50.0);
pub const DEFAULT_DISPARITY_BINS: usize = 500;
pub const DEFAULT_NORMAL_BIN_DEG: f64 = 1.0;
/// Gray levels per axis of the brightness joint histogram.
pub const GRAY_LEVELS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistogramKind {
    Disparity,
    NormalAngle,
    Brightness,
    Generic,
}

/// Display transform recorded alongside the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    Log1p,
}

impl Transform {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Transform::None => v,
            Transform::Log1p => v.ln_1p(),
        }
    }
}

/// Uniform edges `lo + (hi - lo) * i / bins`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 || !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Err(Error::InvalidConfig(format!(
            "bad bin spec [{lo}, {hi}] with {bins} bins"
        )));
    }
    Ok((0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect())
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(Error::InvalidConfig("need at least two bin edges".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "bin edges must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Where a value falls relative to a set of edges. The last bin is closed on
/// the right so the upper edge itself is in range.
enum Slot {
    Under,
    Bin(usize),
    Over,
}

fn locate(edges: &[f64], v: f64) -> Slot {
    let last = edges.len() - 1;
    if v.is_nan() || v < edges[0] {
        return Slot::Under;
    }
    if v > edges[last] {
        return Slot::Over;
    }
    if v == edges[last] {
        return Slot::Bin(last - 1);
    }
    Slot::Bin(edges.partition_point(|&e| e <= v) - 1)
}

/// Types whose tallies can be combined.
pub trait Mergeable: Sized {
    fn merge(&self, other: &Self) -> Result<Self>;
}

/// Adds the tallies of two histograms with identical binning and metadata.
pub fn merge_histograms<H: Mergeable>(a: &H, b: &H) -> Result<H> {
    a.merge(b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    pub kind: HistogramKind,
    pub transform: Transform,
    pub sample_count: u64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram1D {
    pub fn new(kind: HistogramKind, edges: Vec<f64>) -> Result<Self> {
        check_edges(&edges)?;
        Ok(Self {
            kind,
            transform: Transform::None,
            sample_count: 0,
            counts: vec![0; edges.len() - 1],
            edges,
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn uniform(kind: HistogramKind, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        Self::new(kind, uniform_edges(lo, hi, bins)?)
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn add(&mut self, v: f64) {
        match locate(&self.edges, v) {
            Slot::Under => self.underflow += 1,
            Slot::Bin(i) => self.counts[i] += 1,
            Slot::Over => self.overflow += 1,
        }
    }

    /// Index of the bin holding `v`, if in range.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        match locate(&self.edges, v) {
            Slot::Bin(i) => Some(i),
            _ => None,
        }
    }

    /// All tallies including out-of-range ones.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Per-bin fraction of the total; together with
    /// [`Histogram1D::out_of_range_fractions`] these sum to one.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    /// `(underflow, overflow)` as fractions of the total.
    pub fn out_of_range_fractions(&self) -> (f64, f64) {
        let total = self.total();
        if total == 0 {
            return (0.0, 0.0);
        }
        let t = total as f64;
        (self.underflow as f64 / t, self.overflow as f64 / t)
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind || self.transform != other.transform {
            return Err(Error::IncompatibleHistograms("metadata differs".into()));
        }
        if self.edges != other.edges {
            return Err(Error::IncompatibleHistograms("bin edges differ".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let norm = self.normalized();
        let (fu, fo) = self.out_of_range_fractions();
        let mut s = String::from("lower,upper,count,normalized\n");
        let _ = writeln!(s, "-inf,{},{},{}", self.edges[0], self.underflow, fu);
        for (i, (&c, f)) in self.counts.iter().zip(norm).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", self.edges[i], self.edges[i + 1], c, f);
        }
        let _ = writeln!(
            s,
            "{},inf,{},{}",
            self.edges[self.bins()],
            self.overflow,
            fo
        );
        s
    }

    pub fn to_json(&self) -> String {
        let (fu, fo) = self.out_of_range_fractions();
        let doc = serde_json::json!({
            "kind": self.kind,
            "bins": {
                "lower": self.edges[0],
                "upper": self.edges[self.bins()],
                "count": self.bins(),
                "edges": self.edges,
            },
            "transform": self.transform,
            "sample_count": self.sample_count,
            "counts": self.counts,
            "underflow": self.underflow,
            "overflow": self.overflow,
            "normalized": self.normalized(),
            "underflow_fraction": fu,
            "overflow_fraction": fo,
        });
        serde_json::to_string_pretty(&doc).expect("histogram serializes")
    }
}

impl Mergeable for Histogram1D {
    fn merge(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        out.underflow += other.underflow;
        out.overflow += other.overflow;
        out.sample_count += other.sample_count;
        Ok(out)
    }
}

/// 2D histogram. `mass` is row-major over `(y, x)` bins. For brightness
/// histograms it holds integer pixel tallies; for normal-angle histograms it
/// holds the sum of per-sample normalized distributions. Either way
/// [`Histogram2D::mean`] divides by `sample_count` to give the per-sample
/// average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram2D {
    pub kind: HistogramKind,
    pub transform: Transform,
    pub sample_count: u64,
    pub x_edges: Vec<f64>,
    pub y_edges: Vec<f64>,
    pub mass: Vec<f64>,
    /// Mass that fell outside the binned range.
    pub outside: f64,
}

impl Histogram2D {
    pub fn new(kind: HistogramKind, x_edges: Vec<f64>, y_edges: Vec<f64>) -> Result<Self> {
        check_edges(&x_edges)?;
        check_edges(&y_edges)?;
        Ok(Self {
            kind,
            transform: Transform::None,
            sample_count: 0,
            mass: vec![0.0; (x_edges.len() - 1) * (y_edges.len() - 1)],
            x_edges,
            y_edges,
            outside: 0.0,
        })
    }

    pub fn x_bins(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn y_bins(&self) -> usize {
        self.y_edges.len() - 1
    }

    pub fn add(&mut self, x: f64, y: f64, weight: f64) {
        match (locate(&self.x_edges, x), locate(&self.y_edges, y)) {
            (Slot::Bin(i), Slot::Bin(j)) => {
                let nx = self.x_bins();
                self.mass[j * nx + i] += weight;
            }
            _ => self.outside += weight,
        }
    }

    pub fn bin_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        match (locate(&self.x_edges, x), locate(&self.y_edges, y)) {
            (Slot::Bin(i), Slot::Bin(j)) => Some((i, j)),
            _ => None,
        }
    }

    pub fn get(&self, xi: usize, yi: usize) -> f64 {
        self.mass[yi * self.x_bins() + xi]
    }

    pub fn total(&self) -> f64 {
        let mut acc: CompensatedSum = self.mass.iter().copied().collect();
        acc.add(self.outside);
        acc.value()
    }

    /// Per-sample average mass in each bin.
    pub fn mean(&self) -> Vec<f64> {
        if self.sample_count == 0 {
            return vec![0.0; self.mass.len()];
        }
        let n = self.sample_count as f64;
        self.mass.iter().map(|&m| m / n).collect()
    }

    /// Mass as a fraction of the total (bins plus outside).
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0.0 {
            return vec![0.0; self.mass.len()];
        }
        self.mass.iter().map(|&m| m / total).collect()
    }

    /// The per-sample mean with the recorded display transform applied.
    pub fn display(&self) -> Vec<f64> {
        self.mean()
            .into_iter()
            .map(|m| self.transform.apply(m))
            .collect()
    }

    fn compatible(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind || self.transform != other.transform {
            return Err(Error::IncompatibleHistograms("metadata differs".into()));
        }
        if self.x_edges != other.x_edges || self.y_edges != other.y_edges {
            return Err(Error::IncompatibleHistograms("bin edges differ".into()));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mean = self.mean();
        let norm = self.normalized();
        let nx = self.x_bins();
        let mut s = String::from("x_lower,x_upper,y_lower,y_upper,mass,mean,normalized\n");
        for j in 0..self.y_bins() {
            for i in 0..nx {
                let k = j * nx + i;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    self.x_edges[i],
                    self.x_edges[i + 1],
                    self.y_edges[j],
                    self.y_edges[j + 1],
                    self.mass[k],
                    mean[k],
                    norm[k]
                );
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        let nx = self.x_bins();
        let rows = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(nx).map(<[f64]>::to_vec).collect() };
        let doc = serde_json::json!({
            "kind": self.kind,
            "bins": {
                "x": {
                    "lower": self.x_edges[0],
                    "upper": self.x_edges[nx],
                    "count": nx,
                },
                "y": {
                    "lower": self.y_edges[0],
                    "upper": self.y_edges[self.y_bins()],
                    "count": self.y_bins(),
                },
                "layout": "mass[y][x]",
            },
            "transform": self.transform,
            "sample_count": self.sample_count,
            "outside": self.outside,
            "mass": rows(&self.mass),
            "mean": rows(&self.mean()),
        });
        serde_json::to_string_pretty(&doc).expect("histogram serializes")
    }
}

impl Mergeable for Histogram2D {
    fn merge(&self, other: &Self) -> Result<Self> {
        self.compatible(other)?;
        let mut out = self.clone();
        for (a, b) in out.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        out.outside += other.outside;
        out.sample_count += other.sample_count;
        Ok(out)
    }
}

pub fn empty_disparity_histogram(bins: usize) -> Result<Histogram1D> {
    Histogram1D::uniform(
        HistogramKind::Disparity,
        DISPARITY_RANGE.0,
        DISPARITY_RANGE.1,
        bins,
    )
}

/// Histogram of `200 * d / width` over the valid pixels of one map.
pub fn disparity_histogram(map: &DisparityMap, bins: usize) -> Result<Histogram1D> {
    if map.width() == 0 {
        return Err(Error::DimensionMismatch(
            "disparity map has zero width".into(),
        ));
    }
    let mut h = empty_disparity_histogram(bins)?;
    let w = map.width() as f64;
    for (_, d) in map.iter_valid() {
        h.add(DISPARITY_SCALE * f64::from(d) / w);
    }
    h.sample_count = 1;
    Ok(h)
}

/// Pooled width-normalized disparity histogram over a set of maps.
pub fn normalized_disparity_histogram(maps: &[DisparityMap], bins: usize) -> Result<Histogram1D> {
    let mut acc = empty_disparity_histogram(bins)?;
    for map in maps {
        acc = acc.merge(&disparity_histogram(map, bins)?)?;
    }
    if acc.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(acc)
}

pub fn empty_normal_histogram(bin_deg: f64) -> Result<Histogram2D> {
    let steps = |span: f64| -> Result<usize> {
        let n = span / bin_deg;
        if !(bin_deg.is_finite() && bin_deg > 0.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "bin width {bin_deg} must divide {span} degrees"
            )));
        }
        Ok(n.round() as usize)
    };
    let mut h = Histogram2D::new(
        HistogramKind::NormalAngle,
        uniform_edges(0.0, 360.0, steps(360.0)?)?,
        uniform_edges(-90.0, 0.0, steps(90.0)?)?,
    )?;
    h.transform = Transform::Log1p;
    Ok(h)
}

/// Normalized angle distribution of one normal map, or `None` when the map has
/// no usable pixels. Stored vectors are renormalized before encoding.
pub fn normal_histogram(map: &NormalMap, bin_deg: f64) -> Result<Option<Histogram2D>> {
    let mut h = empty_normal_histogram(bin_deg)?;
    let mut n = 0u64;
    for (_, v) in map.iter_valid() {
        let v = v.map(f64::from);
        let len = norm3(v);
        if !(len.is_finite() && len > 0.0) {
            continue;
        }
        let a = normal_to_angles(v.map(|c| c / len))?;
        h.add(a.alpha, a.beta, 1.0);
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    let inv = 1.0 / n as f64;
    for m in &mut h.mass {
        *m *= inv;
    }
    h.outside *= inv;
    h.sample_count = 1;
    Ok(Some(h))
}

/// Average over samples of each sample's normalized angle distribution.
/// Samples without valid normals do not contribute.
pub fn normal_angle_histogram(maps: &[NormalMap], bin_deg: f64) -> Result<Histogram2D> {
    let mut acc = empty_normal_histogram(bin_deg)?;
    for map in maps {
        if let Some(h) = normal_histogram(map, bin_deg)? {
            acc = acc.merge(&h)?;
        }
    }
    if acc.sample_count == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrayRounding {
    /// Keep the fractional weighted sum.
    None,
    /// Round half to even, then clamp to `[0, 255]`.
    #[default]
    HalfEven,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl GrayImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `0.299 R + 0.587 G + 0.114 B`, clamped to `[0, 255]`.
pub fn luminance(rgb: [u8; 3]) -> f64 {
    let v = 0.299 * f64::from(rgb[0]) + 0.587 * f64::from(rgb[1]) + 0.114 * f64::from(rgb[2]);
    v.clamp(0.0, 255.0)
}

/// 8-bit gray level used for binning.
pub fn gray_level(rgb: [u8; 3]) -> u8 {
    luminance(rgb).round_ties_even() as u8
}

pub fn rgb_to_gray(img: &RgbImage, rounding: GrayRounding) -> GrayImage {
    let values = img
        .pixels()
        .map(|p| {
            let v = luminance(p.0);
            match rounding {
                GrayRounding::None => v,
                GrayRounding::HalfEven => v.round_ties_even(),
            }
        })
        .collect();
    GrayImage {
        width: img.width() as usize,
        height: img.height() as usize,
        values,
    }
}

pub fn empty_brightness_histogram() -> Histogram2D {
    let edges = uniform_edges(0.0, GRAY_LEVELS as f64, GRAY_LEVELS).expect("static bin spec");
    let mut h =
        Histogram2D::new(HistogramKind::Brightness, edges.clone(), edges).expect("static bin spec");
    h.transform = Transform::Log1p;
    h
}

/// Joint histogram of (left gray, right gray) over ground-truth matched
/// pixels of one stereo pair. The match of left pixel `(u, v)` is right pixel
/// `(round(u - d), v)`; matches falling outside the right image are skipped.
pub fn brightness_joint_histogram(
    left: &RgbImage,
    right: &RgbImage,
    gt: &DisparityMap,
) -> Result<Histogram2D> {
    let ldims = (left.width() as usize, left.height() as usize);
    let rdims = (right.width() as usize, right.height() as usize);
    ensure_same_dims("left vs right image", ldims, rdims)?;
    ensure_same_dims("image vs disparity", ldims, gt.dims())?;

    let (w, _) = ldims;
    let mut h = empty_brightness_histogram();
    for (i, d) in gt.iter_valid() {
        let (u, v) = (i % w, i / w);
        let ur = (u as f64 - f64::from(d)).round_ties_even();
        if !(ur >= 0.0 && ur < w as f64) {
            continue;
        }
        let gl = gray_level(left.get_pixel(u as u32, v as u32).0);
        let gr = gray_level(right.get_pixel(ur as u32, v as u32).0);
        h.add(f64::from(gl), f64::from(gr), 1.0);
    }
    h.sample_count = 1;
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverexposureStats {
    /// Matched pairs saturated in both views.
    pub fraction_both_255: f64,
    /// Matched pairs saturated in at least one view.
    pub fraction_either_255: f64,
}

pub fn overexposure_stats(h: &Histogram2D) -> Result<OverexposureStats> {
    if h.x_bins() != GRAY_LEVELS || h.y_bins() != GRAY_LEVELS {
        return Err(Error::IncompatibleHistograms(format!(
            "expected a {GRAY_LEVELS}x{GRAY_LEVELS} brightness histogram, got {}x{}",
            h.x_bins(),
            h.y_bins()
        )));
    }
    let total: CompensatedSum = h.mass.iter().copied().collect();
    let total = total.value();
    if total <= 0.0 {
        return Err(Error::EmptyHistogram);
    }
    let top = GRAY_LEVELS - 1;
    let both = h.get(top, top);
    let mut either = CompensatedSum::new();
    for k in 0..GRAY_LEVELS {
        either.add(h.get(top, k));
        if k != top {
            either.add(h.get(k, top));
        }
    }
    Ok(OverexposureStats {
        fraction_both_255: both / total,
        fraction_either_255: either.value() / total,
    })
}
