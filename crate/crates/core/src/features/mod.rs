//! Behavioural features computed from precomputed per-frame inputs:
//! subject segmentation masks, optical-flow fields and head boxes labelled
//! with basic color names.
//!
//! Image coordinates have their origin at the top-left with `y` growing
//! downwards, so "uppermost" means smallest `y`.

mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Sequence};

pub use io::{
    load_frame_dir, parse_flow_csv, parse_head_csv, parse_mask_pgm, ColorNamer, FRAME_FLOW_SUFFIX, FRAME_HEAD_SUFFIX,
    FRAME_MASK_SUFFIX,
};

/// Number of basic color names; labels run `1..=COLOR_NAMES`.
pub const COLOR_NAMES: u8 = 11;

pub type Pixel = (u32, u32);

/// Per-subject pixel sets of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskFrame {
    width: u32,
    height: u32,
    subjects: BTreeMap<u32, Vec<Pixel>>,
    /// Row of the desk edge, when known.
    pub table_line: Option<u32>,
}

impl MaskFrame {
    /// From a row-major label grid where 0 is background.
    pub fn from_label_grid(width: u32, height: u32, labels: &[u32]) -> Result<Self> {
        if labels.len() != (width as usize) * (height as usize) {
            return Err(Error::invalid(format!(
                "label grid has {} cells, expected {width}x{height}",
                labels.len()
            )));
        }
        let mut subjects: BTreeMap<u32, Vec<Pixel>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            if l != 0 {
                let (x, y) = ((i % width as usize) as u32, (i / width as usize) as u32);
                subjects.entry(l).or_default().push((x, y));
            }
        }
        Ok(Self {
            width,
            height,
            subjects,
            table_line: None,
        })
    }

    /// From explicit pixel sets. Overlapping subjects are accepted with a warning.
    pub fn from_subject_pixels(width: u32, height: u32, subjects: BTreeMap<u32, Vec<Pixel>>) -> Result<Self> {
        let mut owner = vec![0u32; width as usize * height as usize];
        for (&id, pixels) in &subjects {
            for &(x, y) in pixels {
                if x >= width || y >= height {
                    return Err(Error::invalid(format!(
                        "subject {id}: pixel ({x}, {y}) outside {width}x{height} frame"
                    )));
                }
                let cell = &mut owner[(y * width + x) as usize];
                if *cell != 0 && *cell != id {
                    log::warn!("subjects {} and {id} overlap at ({x}, {y})", *cell);
                }
                *cell = id;
            }
        }
        Ok(Self {
            width,
            height,
            subjects,
            table_line: None,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn subject(&self, id: u32) -> &[Pixel] {
        self.subjects.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn subject_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.subjects.keys().copied()
    }

    fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Per-pixel `(u, v)` flow, row-major over the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowFrame {
    width: u32,
    height: u32,
    uv: Vec<[f64; 2]>,
}

impl FlowFrame {
    pub fn new(width: u32, height: u32, uv: Vec<[f64; 2]>) -> Result<Self> {
        if uv.len() != width as usize * height as usize {
            return Err(Error::invalid(format!(
                "flow has {} vectors, expected {width}x{height}",
                uv.len()
            )));
        }
        if uv.iter().any(|f| !(f[0].is_finite() && f[1].is_finite())) {
            return Err(Error::invalid("flow contains non-finite values"));
        }
        Ok(Self { width, height, uv })
    }

    pub fn at(&self, x: u32, y: u32) -> [f64; 2] {
        self.uv[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Head bounding box with one color-name label per box pixel (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct HeadBoxFrame {
    bbox: BoundingBox,
    labels: Vec<u8>,
}

impl HeadBoxFrame {
    pub fn new(frame_width: u32, frame_height: u32, bbox: BoundingBox, labels: Vec<u8>) -> Result<Self> {
        if bbox.w == 0 || bbox.h == 0 {
            return Err(Error::Empty("head box"));
        }
        if bbox.x + bbox.w > frame_width || bbox.y + bbox.h > frame_height {
            return Err(Error::invalid(format!(
                "head box {bbox:?} exceeds {frame_width}x{frame_height} frame"
            )));
        }
        if labels.len() != (bbox.w * bbox.h) as usize {
            return Err(Error::invalid(format!(
                "head box has {} labels, expected {}",
                labels.len(),
                bbox.w * bbox.h
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l == 0 || l > COLOR_NAMES) {
            return Err(Error::invalid(format!("color label {bad} outside 1..={COLOR_NAMES}")));
        }
        Ok(Self { bbox, labels })
    }

    /// Names every RGB pixel of the box with `namer`.
    pub fn from_rgb(
        frame_width: u32,
        frame_height: u32,
        bbox: BoundingBox,
        rgb: &[[u8; 3]],
        namer: &ColorNamer,
    ) -> Result<Self> {
        let labels = rgb.iter().map(|&p| namer.name(p)).collect();
        Self::new(frame_width, frame_height, bbox, labels)
    }

    pub fn bbox(&self) -> BoundingBox {
        self.bbox
    }

    pub fn label(&self, x: u32, y: u32) -> u8 {
        self.labels[(y * self.bbox.w + x) as usize]
    }
}

/// Modal color label of each of `rows x cols` cells of the head box.
///
/// Cells are `h / rows` by `w / cols` pixels; the remainder goes to the last
/// row and column. Ties go to the smallest label.
pub fn fhead(head: &HeadBoxFrame, rows: usize, cols: usize) -> Result<Vec<Vec<u8>>> {
    let BoundingBox { w, h, .. } = head.bbox;
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("head grid needs at least one row and column"));
    }
    if (h as usize) < rows || (w as usize) < cols {
        return Err(Error::invalid(format!(
            "{w}x{h} head box cannot hold a {rows}x{cols} grid"
        )));
    }
    let (cell_h, cell_w) = (h as usize / rows, w as usize / cols);
    let span = |i: usize, size: usize, n: usize, total: usize| {
        let start = i * size;
        let end = if i + 1 == n { total } else { start + size };
        start..end
    };
    let mut out = vec![vec![0u8; cols]; rows];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut counts = [0usize; COLOR_NAMES as usize + 1];
            for y in span(r, cell_h, rows, h as usize) {
                for x in span(c, cell_w, cols, w as usize) {
                    counts[head.label(x as u32, y as u32) as usize] += 1;
                }
            }
            // max_by_key keeps the last maximum, so scan labels high to low
            *cell = (1..=COLOR_NAMES)
                .rev()
                .max_by_key(|&l| counts[l as usize])
                .expect("non-empty label range");
        }
    }
    Ok(out)
}

fn subject_pixels(mask: &MaskFrame, subject: u32) -> Result<&[Pixel]> {
    let pixels = mask.subject(subject);
    if pixels.is_empty() {
        return Err(Error::invalid(format!("subject {subject} has an empty mask")));
    }
    Ok(pixels)
}

/// Vertical extent of the subject below its uppermost pixel.
///
/// The uppermost pixel is the one with the smallest `y` (then smallest `x`);
/// the distance runs to the lowest mask pixel in that same column.
pub fn ftorso(mask: &MaskFrame, subject: u32) -> Result<f64> {
    let pixels = subject_pixels(mask, subject)?;
    let &(top_x, top_y) = pixels.iter().min_by_key(|&&(x, y)| (y, x)).expect("non-empty");
    let bottom_y = pixels
        .iter()
        .filter(|&&(x, _)| x == top_x)
        .map(|&(_, y)| y)
        .max()
        .expect("top pixel is in its own column");
    Ok((bottom_y - top_y) as f64)
}

fn bitmap(mask: &MaskFrame, pixels: &[Pixel]) -> Vec<bool> {
    let mut bits = vec![false; mask.width as usize * mask.height as usize];
    for &(x, y) in pixels {
        bits[(y * mask.width + x) as usize] = true;
    }
    bits
}

/// Pixels with at least one 4-neighbour outside the set (or outside the frame).
fn boundary(mask: &MaskFrame, pixels: &[Pixel], bits: &[bool]) -> Vec<Pixel> {
    let (w, h) = (mask.width, mask.height);
    let inside =
        |x: i64, y: i64| x >= 0 && y >= 0 && x < w as i64 && y < h as i64 && bits[(y as u32 * w + x as u32) as usize];
    let mut out: Vec<Pixel> = pixels
        .iter()
        .copied()
        .filter(|&(x, y)| {
            let (x, y) = (x as i64, y as i64);
            !(inside(x - 1, y) && inside(x + 1, y) && inside(x, y - 1) && inside(x, y + 1))
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

fn min_sq_distance(a: &[Pixel], b_sorted_by_x: &[Pixel]) -> u64 {
    let mut best = u64::MAX;
    for &(ax, ay) in a {
        let start = b_sorted_by_x.partition_point(|&(bx, _)| bx < ax);
        // sweep right, then left, stopping once dx^2 alone exceeds the best
        for &(bx, by) in &b_sorted_by_x[start..] {
            let dx = (bx - ax) as u64;
            if dx * dx >= best {
                break;
            }
            let dy = (by as i64 - ay as i64).unsigned_abs();
            best = best.min(dx * dx + dy * dy);
        }
        for &(bx, by) in b_sorted_by_x[..start].iter().rev() {
            let dx = (ax - bx) as u64;
            if dx * dx >= best {
                break;
            }
            let dy = (by as i64 - ay as i64).unsigned_abs();
            best = best.min(dx * dx + dy * dy);
        }
    }
    best
}

/// Smallest pixel distance between the subject and any neighbour's mask.
///
/// Returns `f64::INFINITY` when no listed neighbour has any pixel.
pub fn finv(mask: &MaskFrame, subject: u32, neighbours: &[u32]) -> Result<f64> {
    let own = subject_pixels(mask, subject)?;
    let own_bits = bitmap(mask, own);
    let own_edge = boundary(mask, own, &own_bits);
    let mut best = u64::MAX;
    for &ne in neighbours {
        let theirs = mask.subject(ne);
        if ne == subject || theirs.is_empty() {
            continue;
        }
        if theirs.iter().any(|&(x, y)| own_bits[(y * mask.width + x) as usize]) {
            return Ok(0.0);
        }
        let their_bits = bitmap(mask, theirs);
        let their_edge = boundary(mask, theirs, &their_bits);
        best = best.min(min_sq_distance(&own_edge, &their_edge));
    }
    Ok(if best == u64::MAX {
        f64::INFINITY
    } else {
        (best as f64).sqrt()
    })
}

/// Mean optical-flow magnitude over the subject's pixels.
pub fn fmov(mask: &MaskFrame, flow: &FlowFrame, subject: u32) -> Result<f64> {
    let pixels = subject_pixels(mask, subject)?;
    if flow.width != mask.width || flow.height != mask.height {
        return Err(Error::invalid(format!(
            "flow is {}x{} but mask is {}x{}",
            flow.width, flow.height, mask.width, mask.height
        )));
    }
    let total: f64 = pixels
        .iter()
        .map(|&(x, y)| {
            let [u, v] = flow.at(x, y);
            u.hypot(v)
        })
        .sum();
    Ok(total / pixels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Fhead,
    Ftorso,
    Finv,
    Fmov,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fhead" | "head" => Ok(FeatureKind::Fhead),
            "ftorso" | "torso" => Ok(FeatureKind::Ftorso),
            "finv" | "inv" | "invasion" => Ok(FeatureKind::Finv),
            "fmov" | "mov" | "movement" => Ok(FeatureKind::Fmov),
            other => Err(Error::invalid(format!("unknown feature {other:?}"))),
        }
    }
}

/// How the categorical head grid enters a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadEncoding {
    /// One value per cell: `label / 11`.
    #[default]
    Normalized,
    /// Eleven values per cell, one-hot.
    OneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecipe {
    pub features: Vec<FeatureKind>,
    pub subject: u32,
    pub neighbours: Vec<u32>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub head_encoding: HeadEncoding,
}

impl FeatureRecipe {
    pub fn new(features: Vec<FeatureKind>, subject: u32) -> Self {
        Self {
            features,
            subject,
            neighbours: Vec::new(),
            grid_rows: 4,
            grid_cols: 4,
            head_encoding: HeadEncoding::Normalized,
        }
    }

    /// Length of the frame vector this recipe produces.
    pub fn dim(&self) -> usize {
        self.features
            .iter()
            .map(|f| match (f, self.head_encoding) {
                (FeatureKind::Fhead, HeadEncoding::Normalized) => self.grid_rows * self.grid_cols,
                (FeatureKind::Fhead, HeadEncoding::OneHot) => self.grid_rows * self.grid_cols * COLOR_NAMES as usize,
                _ => 1,
            })
            .sum()
    }
}

/// Whatever inputs are available for one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameInputs {
    pub mask: Option<MaskFrame>,
    pub flow: Option<FlowFrame>,
    pub head: Option<HeadBoxFrame>,
}

fn require<'a, T>(v: &'a Option<T>, kind: &str, frame: usize, feature: FeatureKind) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::invalid(format!("frame {frame}: {feature:?} needs a {kind} input")))
}

/// Concatenates the recipe's features for every frame into a sequence.
///
/// An invasion distance with no neighbour present is recorded as the frame
/// diagonal, the largest distance two pixels of the frame can have.
pub fn build_feature_sequence(id: &str, frames: &[FrameInputs], recipe: &FeatureRecipe) -> Result<Sequence> {
    if recipe.features.is_empty() {
        return Err(Error::invalid("empty recipe"));
    }
    if frames.is_empty() {
        return Err(Error::Empty("no frames to extract features from"));
    }
    let dim = recipe.dim();
    let mut data = Vec::with_capacity(dim * frames.len());
    for (t, inputs) in frames.iter().enumerate() {
        for &feature in &recipe.features {
            match feature {
                FeatureKind::Fhead => {
                    let head = require(&inputs.head, "head box", t, feature)?;
                    let grid = fhead(head, recipe.grid_rows, recipe.grid_cols)?;
                    for &label in grid.iter().flatten() {
                        match recipe.head_encoding {
                            HeadEncoding::Normalized => data.push(label as f64 / COLOR_NAMES as f64),
                            HeadEncoding::OneHot => {
                                data.extend((1..=COLOR_NAMES).map(|l| if l == label { 1.0 } else { 0.0 }))
                            }
                        }
                    }
                }
                FeatureKind::Ftorso => data.push(ftorso(require(&inputs.mask, "mask", t, feature)?, recipe.subject)?),
                FeatureKind::Finv => {
                    let mask = require(&inputs.mask, "mask", t, feature)?;
                    let d = finv(mask, recipe.subject, &recipe.neighbours)?;
                    data.push(if d.is_finite() { d } else { mask.diagonal() });
                }
                FeatureKind::Fmov => {
                    let mask = require(&inputs.mask, "mask", t, feature)?;
                    let flow = require(&inputs.flow, "flow", t, feature)?;
                    data.push(fmov(mask, flow, recipe.subject)?);
                }
            }
        }
    }
    Sequence::from_flat(id, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(width: u32, height: u32, subjects: &[(u32, &[Pixel])]) -> MaskFrame {
        let map = subjects.iter().map(|(id, p)| (*id, p.to_vec())).collect();
        MaskFrame::from_subject_pixels(width, height, map).unwrap()
    }

    fn head(w: u32, h: u32, labels: Vec<u8>) -> HeadBoxFrame {
        HeadBoxFrame::new(w, h, BoundingBox { x: 0, y: 0, w, h }, labels).unwrap()
    }

    #[test]
    fn fhead_uniform_and_halves() {
        let black = head(8, 8, vec![11; 64]);
        assert_eq!(fhead(&black, 4, 4).unwrap(), vec![vec![11; 4]; 4]);
        let halves: Vec<u8> = (0..6 * 4).map(|i| if i % 6 < 3 { 8 } else { 11 }).collect();
        assert_eq!(fhead(&head(6, 4, halves), 1, 2).unwrap(), vec![vec![8, 11]]);
    }

    #[test]
    fn fhead_ties_pick_smallest_label_and_rejects_tiny_boxes() {
        assert_eq!(fhead(&head(2, 1, vec![5, 3]), 1, 1).unwrap(), vec![vec![3]]);
        assert!(fhead(&head(2, 2, vec![1; 4]), 4, 4).is_err());
    }

    #[test]
    fn head_box_validation() {
        let bbox = BoundingBox { x: 5, y: 5, w: 4, h: 4 };
        assert!(HeadBoxFrame::new(8, 8, bbox, vec![1; 16]).is_err());
        assert!(HeadBoxFrame::new(10, 10, bbox, vec![12; 16]).is_err());
        assert!(HeadBoxFrame::new(10, 10, bbox, vec![1; 16]).is_ok());
    }

    #[test]
    fn ftorso_strip_and_single_pixel() {
        let strip: Vec<Pixel> = (0..=50).map(|y| (10, y)).collect();
        assert_eq!(ftorso(&mask(20, 60, &[(1, &strip)]), 1).unwrap(), 50.0);
        assert_eq!(ftorso(&mask(5, 5, &[(1, &[(2, 3)])]), 1).unwrap(), 0.0);
        assert!(ftorso(&mask(5, 5, &[]), 1).is_err());
    }

    #[test]
    fn ftorso_uses_the_top_pixels_column() {
        // top pixel at x=1; a lower pixel in another column must not count
        let m = mask(5, 10, &[(1, &[(1, 2), (1, 5), (3, 9), (2, 3)])]);
        assert_eq!(ftorso(&m, 1).unwrap(), 3.0);
    }

    #[test]
    fn finv_contact_and_pythagoras() {
        let m = mask(10, 10, &[(1, &[(0, 0), (1, 0)]), (2, &[(1, 0), (5, 5)])]);
        assert_eq!(finv(&m, 1, &[2]).unwrap(), 0.0);
        let m = mask(10, 10, &[(1, &[(0, 0)]), (2, &[(3, 4)])]);
        assert_eq!(finv(&m, 1, &[2]).unwrap(), 5.0);
        assert_eq!(finv(&m, 1, &[7]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn fmov_constant_and_zero_fields() {
        let m = mask(3, 3, &[(1, &[(0, 0), (1, 1), (2, 2)])]);
        let zero = FlowFrame::new(3, 3, vec![[0.0, 0.0]; 9]).unwrap();
        assert_eq!(fmov(&m, &zero, 1).unwrap(), 0.0);
        let c = FlowFrame::new(3, 3, vec![[3.0, 4.0]; 9]).unwrap();
        assert_eq!(fmov(&m, &c, 1).unwrap(), 5.0);
        let wrong = FlowFrame::new(2, 2, vec![[0.0, 0.0]; 4]).unwrap();
        assert!(fmov(&m, &wrong, 1).is_err());
    }

    #[test]
    fn recipe_dimensions_and_errors() {
        let strip: Vec<Pixel> = (0..5).map(|y| (1, y)).collect();
        let frame = FrameInputs {
            mask: Some(mask(4, 6, &[(1, &strip), (2, &[(3, 5)])])),
            flow: Some(FlowFrame::new(4, 6, vec![[1.0, 0.0]; 24]).unwrap()),
            head: None,
        };
        let frames = vec![frame; 10];
        let mut recipe = FeatureRecipe::new(vec![FeatureKind::Ftorso], 1);
        let s = build_feature_sequence("x", &frames, &recipe).unwrap();
        assert_eq!((s.len(), s.dim()), (10, 1));
        recipe.features = vec![FeatureKind::Ftorso, FeatureKind::Finv, FeatureKind::Fmov];
        recipe.neighbours = vec![2];
        let s = build_feature_sequence("x", &frames, &recipe).unwrap();
        assert_eq!(s.frame(0), &[4.0, (4.0f64 + 1.0).sqrt(), 1.0]);
        recipe.features.push(FeatureKind::Fhead);
        assert!(build_feature_sequence("x", &frames, &recipe).is_err());
        recipe.features.clear();
        let err = build_feature_sequence("x", &frames, &recipe).unwrap_err();
        assert_eq!(err.to_string(), "empty recipe");
    }

    #[test]
    fn one_hot_head_encoding() {
        let frame = FrameInputs {
            head: Some(head(2, 2, vec![3; 4])),
            ..Default::default()
        };
        let mut recipe = FeatureRecipe::new(vec![FeatureKind::Fhead], 1);
        recipe.grid_rows = 1;
        recipe.grid_cols = 2;
        recipe.head_encoding = HeadEncoding::OneHot;
        let s = build_feature_sequence("h", &[frame.clone()], &recipe).unwrap();
        assert_eq!(s.dim(), 22);
        assert_eq!(s.frame(0)[2], 1.0);
        assert_eq!(s.frame(0).iter().sum::<f64>(), 2.0);
        recipe.head_encoding = HeadEncoding::Normalized;
        let s = build_feature_sequence("h", &[frame], &recipe).unwrap();
        assert_eq!(s.frame(0), &[3.0 / 11.0, 3.0 / 11.0]);
    }
}
