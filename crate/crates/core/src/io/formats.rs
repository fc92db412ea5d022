//! Line-oriented text formats: token streams, voxel sets, feature grids,
//! embedding tables and poses. Every format starts with a versioned header.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::codec::{SkeletonToken, TokenSequence, GRID_RESOLUTION};
use crate::error::{ParseError, Result};
use crate::geometry::Vec3;
use crate::model::{NormalizationRecord, Skeleton};
use crate::skinning::{unit_quaternion, EmbeddingMatrix, PoseSpec};
use crate::voxel::{OccupancySet, SparseFeatureGrid, VoxelCoord};

/// Splits a line on whitespace; double-quoted fields may contain spaces,
/// `\"` and `\\`.
pub fn split_fields(line: &str, line_no: usize) -> Result<Vec<String>, ParseError> {
    let mut fields = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let Some(&first) = chars.peek() else { break };
        let mut field = String::new();
        if first == '"' {
            chars.next();
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(c @ ('"' | '\\')) => field.push(c),
                        _ => return Err(ParseError::at_line(line_no, "bad escape in quoted field")),
                    },
                    Some(c) => field.push(c),
                    None => return Err(ParseError::at_line(line_no, "unterminated quote")),
                }
            }
            if chars.peek().is_some_and(|c| !c.is_whitespace()) {
                return Err(ParseError::at_line(line_no, "text after closing quote"));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                field.push(c);
                chars.next();
            }
        }
        fields.push(field);
    }
    Ok(fields)
}

/// Quotes a field when it would not survive [`split_fields`] bare.
pub fn quote_field(s: &str) -> String {
    if !s.is_empty() && !s.starts_with('"') && !s.chars().any(char::is_whitespace) {
        return s.to_string();
    }
    let mut out = String::from("\"");
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

/// Non-empty, non-comment lines with their 1-based numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// `key=value` settings of a header line.
fn header_settings<'a>(fields: &'a [&'a str], line: usize) -> Result<HashMap<&'a str, &'a str>, ParseError> {
    fields
        .iter()
        .map(|f| {
            f.split_once('=')
                .ok_or_else(|| ParseError::at_line(line, format!("expected key=value, found {f:?}")))
        })
        .collect()
}

fn setting<T: std::str::FromStr>(map: &HashMap<&str, &str>, key: &str, line: usize) -> Result<T, ParseError> {
    let raw = map
        .get(key)
        .ok_or_else(|| ParseError::at_line(line, format!("header is missing {key}=")))?;
    raw.parse()
        .map_err(|_| ParseError::at_line(line, format!("bad value for {key}: {raw:?}")))
}

fn parse_num<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T, ParseError> {
    field
        .parse()
        .map_err(|_| ParseError::at_line(line, format!("bad {what} {field:?}")))
}

fn parse_float(field: &str, line: usize) -> Result<f64, ParseError> {
    parse_num::<f64>(field, line, "number")
        .and_then(|x| x.is_finite().then_some(x).ok_or_else(|| ParseError::at_line(line, "non-finite number")))
}

fn expect_header(text: &str, magic: &str) -> Result<(usize, Vec<String>), ParseError> {
    let (line, header) = content_lines(text)
        .next()
        .ok_or_else(|| ParseError::at_line(1, format!("missing {magic:?} header")))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_string).collect();
    if fields.first().map(String::as_str) != Some(magic) || fields.get(1).map(String::as_str) != Some("v1") {
        return Err(ParseError::at_line(line, format!("expected header \"{magic} v1 ...\"")));
    }
    Ok((line, fields[2..].to_vec()))
}

/// Token stream with an optional normalization record for detokenizing back
/// into source coordinates.
pub fn write_tokens(seq: &TokenSequence, normalization: Option<&NormalizationRecord>) -> String {
    let mut out = format!(
        "tokens v1 grid={GRID_RESOLUTION} max_joints={} count={}\n",
        seq.max_joints,
        seq.tokens.len()
    );
    if let Some(r) = normalization {
        let t = r.translation;
        let _ = writeln!(out, "normalization {} {} {} {}", r.scale, t.x, t.y, t.z);
    }
    out.push_str("bos\n");
    for (k, t) in seq.tokens.iter().enumerate() {
        let _ = writeln!(out, "{k} {} {} {} {}", t.qx, t.qy, t.qz, t.parent);
    }
    if seq.terminated {
        out.push_str("eos\n");
    }
    out
}

pub fn read_tokens(text: &str) -> Result<(TokenSequence, Option<NormalizationRecord>)> {
    let (hline, header) = expect_header(text, "tokens")?;
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let settings = header_settings(&refs, hline)?;
    let grid: u32 = setting(&settings, "grid", hline)?;
    if grid != GRID_RESOLUTION {
        return Err(ParseError::at_line(hline, format!("unsupported grid {grid}")).into());
    }
    let max_joints: usize = setting(&settings, "max_joints", hline)?;
    let count: usize = setting(&settings, "count", hline)?;

    let mut normalization = None;
    let mut tokens = Vec::new();
    let mut state = 0; // 0: before bos, 1: tokens, 2: after eos
    for (line, l) in content_lines(text).skip(1) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        match (state, fields.as_slice()) {
            (0, ["normalization", s, x, y, z]) if normalization.is_none() => {
                let scale = parse_float(s, line)?;
                if !(scale > 0.0) {
                    return Err(ParseError::at_line(line, "scale must be positive").into());
                }
                normalization = Some(NormalizationRecord {
                    scale,
                    translation: Vec3::new(parse_float(x, line)?, parse_float(y, line)?, parse_float(z, line)?),
                });
            }
            (0, ["bos"]) => state = 1,
            (1, ["eos"]) => state = 2,
            (1, [k, qx, qy, qz, parent]) => {
                let k: usize = parse_num(k, line, "token index")?;
                if k != tokens.len() {
                    return Err(ParseError::at_line(line, format!("expected token {}, found {k}", tokens.len())).into());
                }
                let cell = |f: &str| -> Result<u8, ParseError> {
                    let q: u32 = parse_num(f, line, "cell")?;
                    if q >= GRID_RESOLUTION {
                        return Err(ParseError::at_line(line, format!("cell {q} outside grid")));
                    }
                    Ok(q as u8)
                };
                tokens.push(SkeletonToken {
                    qx: cell(qx)?,
                    qy: cell(qy)?,
                    qz: cell(qz)?,
                    parent: parse_num(parent, line, "parent")?,
                });
            }
            _ => return Err(ParseError::at_line(line, format!("unexpected line {l:?}")).into()),
        }
    }
    if state == 0 {
        return Err(ParseError::at_path("bos", "missing bos marker").into());
    }
    if tokens.len() != count {
        return Err(ParseError::at_path("count", format!("header says {count} tokens, found {}", tokens.len())).into());
    }
    Ok((
        TokenSequence {
            tokens,
            terminated: state == 2,
            max_joints,
        },
        normalization,
    ))
}

pub fn write_occupancy(set: &OccupancySet) -> String {
    let mut out = format!("occupancy v1 resolution={} count={}\n", set.resolution, set.len());
    for v in &set.active {
        let _ = writeln!(out, "{} {} {}", v.i, v.j, v.k);
    }
    out
}

fn parse_coord(fields: &[&str], resolution: u32, line: usize) -> Result<VoxelCoord, ParseError> {
    let c = |f: &str| -> Result<u32, ParseError> {
        let x: u32 = parse_num(f, line, "voxel index")?;
        if x >= resolution {
            return Err(ParseError::at_line(line, format!("voxel index {x} outside the grid")));
        }
        Ok(x)
    };
    Ok(VoxelCoord::new(c(fields[0])?, c(fields[1])?, c(fields[2])?))
}

pub fn read_occupancy(text: &str) -> Result<OccupancySet> {
    let (hline, header) = expect_header(text, "occupancy")?;
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let settings = header_settings(&refs, hline)?;
    let resolution: u32 = setting(&settings, "resolution", hline)?;
    let count: usize = setting(&settings, "count", hline)?;
    let mut set = OccupancySet::new(resolution);
    for (line, l) in content_lines(text).skip(1) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(ParseError::at_line(line, "expected: i j k").into());
        }
        set.insert(parse_coord(&fields, resolution, line)?);
    }
    if set.len() != count {
        return Err(ParseError::at_path("count", format!("header says {count} voxels, found {}", set.len())).into());
    }
    Ok(set)
}

pub fn write_feature_grid(grid: &SparseFeatureGrid) -> String {
    let mut out = format!(
        "sparse-grid v1 resolution={} dim={} count={}\n",
        grid.resolution,
        grid.dim,
        grid.len()
    );
    for (v, e) in &grid.entries {
        let _ = write!(out, "{} {} {} {}", v.i, v.j, v.k, e.count);
        for f in &e.feature {
            let _ = write!(out, " {f}");
        }
        out.push('\n');
    }
    out
}

pub fn read_feature_grid(text: &str) -> Result<SparseFeatureGrid> {
    let (hline, header) = expect_header(text, "sparse-grid")?;
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let settings = header_settings(&refs, hline)?;
    let resolution: u32 = setting(&settings, "resolution", hline)?;
    let dim: usize = setting(&settings, "dim", hline)?;
    let count: usize = setting(&settings, "count", hline)?;
    let mut grid = SparseFeatureGrid::new(resolution, dim);
    for (line, l) in content_lines(text).skip(1) {
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 4 + dim {
            return Err(ParseError::at_line(line, format!("expected {} fields", 4 + dim)).into());
        }
        let v = parse_coord(&fields, resolution, line)?;
        let count: usize = parse_num(fields[3], line, "count")?;
        let feature = fields[4..]
            .iter()
            .map(|f| parse_float(f, line))
            .collect::<Result<Vec<_>, _>>()?;
        if grid.entries.insert(v, crate::voxel::GridEntry { feature, count }).is_some() {
            return Err(ParseError::at_line(line, "duplicate voxel").into());
        }
    }
    if grid.len() != count {
        return Err(ParseError::at_path("count", format!("header says {count} voxels, found {}", grid.len())).into());
    }
    Ok(grid)
}

/// One row of an embedding file: an optional joint index, a label and a
/// vector. Joint files use `-` for a missing label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub joint: Option<usize>,
    pub label: Option<String>,
    pub vector: Vec<f64>,
}

/// Embedding file contents in file order, vectors as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingFile {
    pub fn vectors(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| r.vector.clone()).collect()
    }

    pub fn to_matrix(&self) -> Result<EmbeddingMatrix> {
        EmbeddingMatrix::new(
            self.rows.len(),
            self.dim,
            self.rows.iter().flat_map(|r| r.vector.iter().copied()).collect(),
        )
    }

    /// `(label, vector)` pairs for building a vocabulary table.
    pub fn labeled(&self) -> Vec<(String, Vec<f64>)> {
        self.rows
            .iter()
            .filter_map(|r| r.label.clone().map(|l| (l, r.vector.clone())))
            .collect()
    }
}

fn embedding_header(fields: &[String], line: usize) -> Result<(usize, usize), ParseError> {
    let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
    let settings = header_settings(&refs, line)?;
    let version: u32 = setting(&settings, "version", line)?;
    if version != 1 {
        return Err(ParseError::at_line(line, format!("unsupported version {version}")));
    }
    Ok((setting(&settings, "dim", line)?, setting(&settings, "count", line)?))
}

/// Reads `dim=<d> count=<n> version=1` followed by `label f_1 ... f_d`
/// rows, or `joint_index label f_1 ... f_d` rows when `joint_column` is set.
pub fn read_embeddings(text: &str, joint_column: bool) -> Result<EmbeddingFile> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| ParseError::at_line(1, "missing header"))?;
    let (dim, count) = embedding_header(&split_fields(header, hline)?, hline)?;
    let lead = if joint_column { 2 } else { 1 };
    let mut rows = Vec::new();
    for (line, l) in lines {
        let fields = split_fields(l, line)?;
        if fields.len() != lead + dim {
            return Err(ParseError::at_line(line, format!("expected {} fields, found {}", lead + dim, fields.len())).into());
        }
        let joint = if joint_column {
            Some(parse_num::<usize>(&fields[0], line, "joint index")?)
        } else {
            None
        };
        let raw_label = &fields[lead - 1];
        let label = if joint_column && raw_label == "-" {
            None
        } else {
            Some(raw_label.clone())
        };
        let vector = fields[lead..]
            .iter()
            .map(|f| parse_float(f, line))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(EmbeddingRow { joint, label, vector });
    }
    if rows.len() != count {
        return Err(ParseError::at_path("count", format!("header says {count} rows, found {}", rows.len())).into());
    }
    Ok(EmbeddingFile { dim, rows })
}

pub fn write_embeddings(file: &EmbeddingFile) -> String {
    let mut out = format!("dim={} count={} version=1\n", file.dim, file.rows.len());
    for r in &file.rows {
        if let Some(j) = r.joint {
            let _ = write!(out, "{j} ");
        }
        let label = r.label.as_deref().map(quote_field).unwrap_or_else(|| "-".into());
        out.push_str(&label);
        for x in &r.vector {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}

/// Reads `pose v1` followed by `<joint> qw qx qy qz [tx ty tz]` rows. A
/// joint is named or given by index; translation is allowed on the root.
/// Unlisted joints keep the identity rotation.
pub fn read_pose(text: &str, skeleton: &Skeleton) -> Result<PoseSpec> {
    expect_header(text, "pose")?;
    let mut pose = PoseSpec::identity(skeleton.len());
    let mut seen = vec![false; skeleton.len()];
    for (line, l) in content_lines(text).skip(1) {
        let fields = split_fields(l, line)?;
        if fields.len() != 5 && fields.len() != 8 {
            return Err(ParseError::at_line(line, "expected: joint qw qx qy qz [tx ty tz]").into());
        }
        let joint = skeleton
            .find_joint(&fields[0])
            .or_else(|| fields[0].parse::<usize>().ok().filter(|&j| j < skeleton.len()))
            .ok_or_else(|| ParseError::at_line(line, format!("unknown joint {:?}", fields[0])))?;
        if std::mem::replace(&mut seen[joint], true) {
            return Err(ParseError::at_line(line, format!("joint {:?} posed twice", fields[0])).into());
        }
        let mut q = [0.0; 4];
        for (i, c) in q.iter_mut().enumerate() {
            *c = parse_float(&fields[i + 1], line)?;
        }
        pose.rotations[joint] =
            unit_quaternion(q).map_err(|e| ParseError::at_line(line, e.to_string()))?;
        if fields.len() == 8 {
            if joint != skeleton.root {
                return Err(ParseError::at_line(line, "translation is only allowed on the root").into());
            }
            pose.root_translation = Vec3::new(
                parse_float(&fields[5], line)?,
                parse_float(&fields[6], line)?,
                parse_float(&fields[7], line)?,
            );
        }
    }
    Ok(pose)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Joint;

    #[test]
    fn token_stream_round_trip() {
        let seq = TokenSequence {
            tokens: vec![
                SkeletonToken { qx: 1, qy: 2, qz: 3, parent: 0 },
                SkeletonToken { qx: 127, qy: 0, qz: 5, parent: 0 },
            ],
            terminated: true,
            max_joints: 256,
        };
        let rec = NormalizationRecord { scale: 0.5, translation: Vec3::new(0.1, 0.2, 0.3) };
        let text = write_tokens(&seq, Some(&rec));
        assert_eq!(read_tokens(&text).unwrap(), (seq.clone(), Some(rec)));
        let bare = write_tokens(&TokenSequence { terminated: false, ..seq.clone() }, None);
        assert!(!read_tokens(&bare).unwrap().0.terminated);
        assert!(read_tokens(&text.replace("127", "128")).is_err());
        assert!(read_tokens("tokens v2\n").is_err());
    }

    #[test]
    fn quoted_fields() {
        assert_eq!(split_fields(r#"a "b c" "d\"e""#, 1).unwrap(), ["a", "b c", "d\"e"]);
        assert!(split_fields(r#""open"#, 1).is_err());
        for s in ["plain", "two words", "q\"uote", ""] {
            assert_eq!(split_fields(&quote_field(s), 1).unwrap(), [s]);
        }
    }

    #[test]
    fn embedding_files() {
        let text = "dim=2 count=2 version=1\nHead 1 0\n\"Left Hand\" 0 1\n";
        let f = read_embeddings(text, false).unwrap();
        assert_eq!(f.rows[1].label.as_deref(), Some("Left Hand"));
        assert_eq!(read_embeddings(&write_embeddings(&f), false).unwrap(), f);
        let joints = read_embeddings("dim=1 count=2 version=1\n0 Hip 1\n1 - 1\n", true).unwrap();
        assert_eq!(joints.rows[1].label, None);
        assert!(read_embeddings("dim=2 count=1 version=1\nHead 1\n", false).is_err());
    }

    #[test]
    fn pose_file() {
        let s = Skeleton::from_joints(vec![
            Joint::named("hip", Vec3::zeros(), None),
            Joint::named("knee", Vec3::y(), Some(0)),
        ])
        .unwrap();
        let half = 0.5f64.sqrt();
        let pose = read_pose(&format!("pose v1\nknee {half} 0 0 {half}\nhip 1 0 0 0 0 0 1\n"), &s).unwrap();
        assert_eq!(pose.root_translation, Vec3::z());
        assert!((pose.rotations[1].angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!(read_pose("pose v1\nknee 1 0 0 0 1 0 0\n", &s).is_err());
        assert!(read_pose("pose v1\nfoot 1 0 0 0\n", &s).is_err());
        assert!(read_pose("pose v1\nknee 2 0 0 0\n", &s).is_err());
    }
}
