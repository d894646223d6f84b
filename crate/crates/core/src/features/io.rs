use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{BoundingBox, FlowFrame, FrameInputs, HeadBoxFrame, MaskFrame, COLOR_NAMES};
use crate::{Error, Result};

pub const FRAME_MASK_SUFFIX: &str = ".mask.pgm";
pub const FRAME_FLOW_SUFFIX: &str = ".flow.csv";
pub const FRAME_HEAD_SUFFIX: &str = ".head.csv";

const DEFAULT_PROTOTYPES: &str = include_str!("../../data/color_names.csv");

/// Nearest-prototype color naming in RGB space.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorNamer {
    prototypes: Vec<(u8, String, [f64; 3])>,
}

impl Default for ColorNamer {
    fn default() -> Self {
        Self::from_csv("color_names.csv", DEFAULT_PROTOTYPES).expect("bundled prototypes parse")
    }
}

impl ColorNamer {
    /// Parses `label,name,r,g,b` rows; a header row and `#` comments are skipped.
    pub fn from_csv(file: &str, text: &str) -> Result<Self> {
        let mut prototypes = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("label") {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::parse(file, n + 1, "expected label,name,r,g,b"));
            }
            let label: u8 = fields[0]
                .parse()
                .map_err(|_| Error::parse(file, n + 1, format!("bad label {:?}", fields[0])))?;
            if label == 0 || label > COLOR_NAMES {
                return Err(Error::parse(
                    file,
                    n + 1,
                    format!("label {label} outside 1..={COLOR_NAMES}"),
                ));
            }
            let mut rgb = [0.0; 3];
            for (c, f) in rgb.iter_mut().zip(&fields[2..]) {
                *c = f
                    .parse::<u8>()
                    .map_err(|_| Error::parse(file, n + 1, format!("bad channel {f:?}")))? as f64;
            }
            prototypes.push((label, fields[1].to_string(), rgb));
        }
        if prototypes.is_empty() {
            return Err(Error::Empty("color prototype table"));
        }
        Ok(Self { prototypes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&path.display().to_string(), &text)
    }

    /// Label of the nearest prototype; ties go to the earlier row.
    pub fn name(&self, rgb: [u8; 3]) -> u8 {
        let d2 = |p: &[f64; 3]| p.iter().zip(rgb).map(|(a, b)| (a - b as f64).powi(2)).sum::<f64>();
        self.prototypes
            .iter()
            .min_by(|a, b| d2(&a.2).total_cmp(&d2(&b.2)))
            .map(|p| p.0)
            .expect("non-empty table")
    }

    pub fn label_name(&self, label: u8) -> Option<&str> {
        self.prototypes.iter().find(|p| p.0 == label).map(|p| p.1.as_str())
    }
}

/// Whitespace-separated tokens with `#` comments removed, tagged by line.
fn tokens(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().flat_map(|(n, line)| {
        let line = line.split('#').next().unwrap_or("");
        line.split_whitespace().map(move |t| (n + 1, t))
    })
}

/// Plain-text PGM (`P2`) grid of subject labels, 0 for background.
pub fn parse_mask_pgm(file: &str, text: &str) -> Result<MaskFrame> {
    let mut it = tokens(text);
    match it.next() {
        Some((_, "P2")) => {}
        Some((n, other)) => return Err(Error::parse(file, n, format!("expected P2 magic, found {other:?}"))),
        None => return Err(Error::parse(file, 1, "empty mask file")),
    }
    let mut header = [0u64; 3];
    for h in header.iter_mut() {
        let (n, tok) = it
            .next()
            .ok_or_else(|| Error::parse(file, text.lines().count().max(1), "truncated PGM header"))?;
        *h = tok
            .parse()
            .map_err(|_| Error::parse(file, n, format!("bad header value {tok:?}")))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 || width > u32::MAX as u64 || height > u32::MAX as u64 {
        return Err(Error::parse(file, 1, format!("bad mask size {width}x{height}")));
    }
    let mut labels = Vec::with_capacity((width * height) as usize);
    let mut last_line = 1;
    for (n, tok) in it {
        last_line = n;
        let v: u64 = tok
            .parse()
            .map_err(|_| Error::parse(file, n, format!("bad pixel value {tok:?}")))?;
        if v > maxval || v > u32::MAX as u64 {
            return Err(Error::parse(
                file,
                n,
                format!("pixel value {v} exceeds maxval {maxval}"),
            ));
        }
        labels.push(v as u32);
    }
    if labels.len() as u64 != width * height {
        return Err(Error::parse(
            file,
            last_line,
            format!("expected {} pixels, found {}", width * height, labels.len()),
        ));
    }
    MaskFrame::from_label_grid(width as u32, height as u32, &labels)
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `u,v` per pixel in row-major order; an optional `u,v` header is skipped.
pub fn parse_flow_csv(file: &str, text: &str, width: u32, height: u32) -> Result<FlowFrame> {
    let mut uv = Vec::with_capacity(width as usize * height as usize);
    for (n, line) in data_lines(text) {
        if line.eq_ignore_ascii_case("u,v") {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(file, n, "expected u,v"));
        };
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(file, n, format!("bad flow component {s:?}")))
        };
        uv.push([parse(u)?, parse(v)?]);
    }
    FlowFrame::new(width, height, uv)
}

/// First data row `x,y,w,h`, then `h` rows of `w` comma-separated labels.
pub fn parse_head_csv(file: &str, text: &str, width: u32, height: u32) -> Result<HeadBoxFrame> {
    let mut lines = data_lines(text);
    let (n, first) = lines.next().ok_or_else(|| Error::parse(file, 1, "empty head file"))?;
    let nums = |n: usize, line: &str| -> Result<Vec<u32>> {
        line.split(',')
            .map(|s| {
                s.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::parse(file, n, format!("bad integer {:?}", s.trim())))
            })
            .collect()
    };
    let b = nums(n, first)?;
    let [x, y, w, h] = b[..] else {
        return Err(Error::parse(file, n, "expected x,y,w,h"));
    };
    let bbox = BoundingBox { x, y, w, h };
    let mut labels = Vec::with_capacity((w * h) as usize);
    let mut rows = 0;
    for (n, line) in lines {
        let row = nums(n, line)?;
        if row.len() != w as usize {
            return Err(Error::parse(
                file,
                n,
                format!("expected {w} labels, found {}", row.len()),
            ));
        }
        if let Some(bad) = row.iter().find(|&&l| l == 0 || l > COLOR_NAMES as u32) {
            return Err(Error::parse(
                file,
                n,
                format!("color label {bad} outside 1..={COLOR_NAMES}"),
            ));
        }
        labels.extend(row.into_iter().map(|l| l as u8));
        rows += 1;
    }
    if rows != h {
        return Err(Error::parse(file, n, format!("expected {h} label rows, found {rows}")));
    }
    HeadBoxFrame::new(width, height, bbox, labels)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads `<stem>.mask.pgm`, `<stem>.flow.csv` and `<stem>.head.csv` files,
/// ordered by stem. Flow and head grids take their size from the mask of the
/// same frame, which is therefore required whenever either is present.
pub fn load_frame_dir(dir: &Path) -> Result<Vec<FrameInputs>> {
    let mut frames: BTreeMap<String, [Option<std::path::PathBuf>; 3]> = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        for (slot, suffix) in [FRAME_MASK_SUFFIX, FRAME_FLOW_SUFFIX, FRAME_HEAD_SUFFIX]
            .into_iter()
            .enumerate()
        {
            if let Some(stem) = name.strip_suffix(suffix) {
                frames.entry(stem.to_string()).or_default()[slot] = Some(path.clone());
            }
        }
    }
    if frames.is_empty() {
        return Err(Error::Empty("frame directory has no mask, flow or head files"));
    }
    let mut out = Vec::with_capacity(frames.len());
    for (stem, [mask, flow, head]) in frames {
        let mut inputs = FrameInputs::default();
        if let Some(p) = mask {
            inputs.mask = Some(parse_mask_pgm(&p.display().to_string(), &read(&p)?)?);
        }
        let size = inputs.mask.as_ref().map(|m| (m.width(), m.height()));
        for (p, is_flow) in [(flow, true), (head, false)] {
            let Some(p) = p else { continue };
            let (w, h) =
                size.ok_or_else(|| Error::invalid(format!("frame {stem:?} has no mask to size its flow/head grid")))?;
            let name = p.display().to_string();
            let text = read(&p)?;
            if is_flow {
                inputs.flow = Some(parse_flow_csv(&name, &text, w, h)?);
            } else {
                inputs.head = Some(parse_head_csv(&name, &text, w, h)?);
            }
        }
        out.push(inputs);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_prototypes() {
        let namer = ColorNamer::default();
        assert_eq!(namer.name([250, 5, 5]), 1);
        assert_eq!(namer.name([0, 0, 0]), 11);
        assert_eq!(namer.label_name(11), Some("black"));
    }

    #[test]
    fn pgm_round_trip() {
        let m = parse_mask_pgm("m", "P2\n# c\n3 2\n2\n0 1 0\n2 2 0\n").unwrap();
        assert_eq!(m.subject(1), &[(1, 0)]);
        assert_eq!(m.subject(2), &[(0, 1), (1, 1)]);
        let err = parse_mask_pgm("m", "P2\n3 2\n1\n0 1 0\n2 2 0\n").unwrap_err();
        assert!(err.to_string().starts_with("m:5:"), "{err}");
        assert!(parse_mask_pgm("m", "P2\n3 2\n2\n0 1\n").is_err());
    }

    #[test]
    fn flow_and_head_files() {
        let f = parse_flow_csv("f", "u,v\n1,0\n0,1\n3,4\n0,0\n", 2, 2).unwrap();
        assert_eq!(f.at(0, 1), [3.0, 4.0]);
        assert!(parse_flow_csv("f", "1,0\n", 2, 2).is_err());
        let h = parse_head_csv("h", "1,1,2,2\n3,3\n4,11\n", 4, 4).unwrap();
        assert_eq!(h.label(1, 1), 11);
        let err = parse_head_csv("h", "1,1,2,2\n3,3\n4,12\n", 4, 4).unwrap_err();
        assert!(err.to_string().starts_with("h:3:"), "{err}");
    }
}
