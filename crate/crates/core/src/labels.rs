//! Joint label cleanup, nearest-neighbor label retrieval over embedding
//! tables, and contrastive scoring.

use std::collections::BTreeMap;

use crate::error::{Result, RigError};

const UNIT_TOLERANCE: f64 = 1e-5;
const GENERIC_STEMS: [&str; 3] = ["bone", "joint", "jnt"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

impl Side {
    fn prefix(self) -> &'static str {
        match self {
            Side::Left => "Left",
            Side::Right => "Right",
        }
    }
}

fn strip_skeleton_suffix(s: &str) -> &str {
    if let Some(pos) = s.rfind("_Skeleton_") {
        let tail = &s[pos + "_Skeleton_".len()..];
        if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
            return &s[..pos];
        }
    }
    s
}

fn is_tag(token: &str) -> bool {
    (2..=3).contains(&token.len()) && token.bytes().all(|b| b.is_ascii_uppercase())
}

fn side_token(token: &str) -> Option<Side> {
    match token {
        "L" | "l" => Some(Side::Left),
        "R" | "r" => Some(Side::Right),
        _ => None,
    }
}

/// A leading lowercase `l`/`r` glued to a capitalized word, as in `lShoulder`.
fn split_side_prefix(token: &str) -> Option<(Side, &str)> {
    let mut chars = token.chars();
    let side = match chars.next()? {
        'l' => Side::Left,
        'r' => Side::Right,
        _ => return None,
    };
    chars.next().filter(char::is_ascii_uppercase)?;
    Some((side, &token[1..]))
}

fn is_generic(label: &str) -> bool {
    let lower = label.to_ascii_lowercase();
    GENERIC_STEMS.iter().any(|stem| {
        lower
            .strip_prefix(stem)
            .is_some_and(|rest| rest.bytes().all(|b| b.is_ascii_digit()))
    })
}

fn title_case(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Rule-based joint name cleanup. Returns `None` for names that carry no
/// semantic content (empty, numeric, or generic `Bone003`-style ids).
pub fn clean_label(raw: &str) -> Option<String> {
    let segments: Vec<&str> = raw.trim().split("--").filter(|s| !s.is_empty()).collect();
    let (&last, earlier) = segments.split_last()?;
    let mut name = last.rsplit(':').next().unwrap_or(last).replace("pasted__", "");
    name = strip_skeleton_suffix(&name).to_string();

    let split = |s: &str| -> Vec<String> {
        s.split(|c: char| c == '_' || c == '.' || c == '-' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect()
    };
    let mut tokens = split(&name);

    // Rig-wide prefix repeated from the container name, e.g. `Bip001`.
    if let Some(prev) = earlier.last() {
        let prefix = split(prev.rsplit(':').next().unwrap_or(prev));
        let common = prefix.iter().zip(&tokens).take_while(|(a, b)| a == b).count();
        if common < tokens.len() {
            tokens.drain(..common);
        }
    }

    let mut side = None;
    let mut parts = Vec::new();
    for token in tokens {
        if let Some(s) = side_token(&token) {
            side.get_or_insert(s);
            continue;
        }
        if let Some((s, rest)) = split_side_prefix(&token) {
            side.get_or_insert(s);
            parts.push(rest.to_string());
            continue;
        }
        parts.push(token);
    }
    if parts.iter().any(|t| !is_tag(t)) {
        parts.retain(|t| !is_tag(t));
    }
    let mut body: String = parts.iter().map(|t| title_case(t)).collect();
    let b = body.as_bytes();
    if b.len() >= 2 && b[b.len() - 1] == b'J' && b[b.len() - 2].is_ascii_lowercase() {
        body.pop();
    }
    let label = match side {
        Some(s) if !body.starts_with(s.prefix()) => format!("{}{body}", s.prefix()),
        _ => body,
    };
    if label.is_empty() || label.chars().all(|c| c.is_ascii_digit()) || is_generic(&label) {
        return None;
    }
    Some(label)
}

fn checked_unit(label: &str, mut v: Vec<f64>, dim: usize, warnings: &mut Vec<String>) -> Result<Vec<f64>> {
    if v.len() != dim {
        return Err(RigError::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(RigError::NonFinite);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(RigError::InvalidArgument(format!("zero embedding for {label}")));
    }
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        let msg = format!("embedding for {label} has norm {norm:.6}, renormalized");
        log::warn!("{msg}");
        warnings.push(msg);
        v.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(v)
}

/// Label vocabulary: text label to unit vector, kept sorted by label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    /// Builds a table, renormalizing non-unit vectors. Returns the table and
    /// the warnings raised.
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        let mut map = BTreeMap::new();
        for (label, v) in entries {
            let v = checked_unit(&label, v, dim, &mut warnings)?;
            if map.insert(label.clone(), v).is_some() {
                return Err(RigError::InvalidArgument(format!("duplicate label {label:?}")));
            }
        }
        Ok((Self { dim, entries: map }, warnings))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.entries.get(label).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Unit embeddings in a skeleton's joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointEmbeddingSet {
    dim: usize,
    rows: Vec<Vec<f64>>,
}

impl JointEmbeddingSet {
    pub fn new(dim: usize, rows: Vec<Vec<f64>>) -> Result<(Self, Vec<String>)> {
        let mut warnings = Vec::new();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, v)| checked_unit(&format!("joint {i}"), v, dim, &mut warnings))
            .collect::<Result<Vec<_>>>()?;
        Ok((Self { dim, rows }, warnings))
    }

    /// Checks the set against a skeleton's joint count.
    pub fn for_joints(self, joints: usize) -> Result<Self> {
        if self.rows.len() != joints {
            return Err(RigError::DimensionMismatch {
                expected: joints,
                found: self.rows.len(),
            });
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ranked label candidates for one joint.
pub type RankedLabels = Vec<(String, f64)>;

/// Top-`k` vocabulary labels per joint by dot product, ties broken by label.
pub fn assign_labels(joints: &JointEmbeddingSet, vocab: &EmbeddingTable, k: usize) -> Result<Vec<RankedLabels>> {
    if vocab.is_empty() {
        return Err(RigError::InvalidArgument("empty vocabulary".into()));
    }
    if k == 0 {
        return Err(RigError::InvalidArgument("k must be at least 1".into()));
    }
    if joints.dim() != vocab.dim() {
        return Err(RigError::DimensionMismatch {
            expected: vocab.dim(),
            found: joints.dim(),
        });
    }
    Ok(joints
        .rows
        .iter()
        .map(|e| {
            let mut scored: Vec<(&str, f64)> = vocab.iter().map(|(label, v)| (label, dot(e, v))).collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
            scored
                .into_iter()
                .take(k)
                .map(|(label, s)| (label.to_string(), s))
                .collect()
        })
        .collect())
}

/// Fraction of joints whose true label is among their first `k` candidates.
pub fn topk_accuracy<S: AsRef<str>>(predictions: &[RankedLabels], truth: &[S], k: usize) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(RigError::DimensionMismatch {
            expected: truth.len(),
            found: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(RigError::InvalidArgument("no joints to score".into()));
    }
    let hits = predictions
        .iter()
        .zip(truth)
        .filter(|(ranked, t)| ranked.iter().take(k).any(|(label, _)| label == t.as_ref()))
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// `ln Σ exp(x)` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Contrastive loss with in-batch negatives: row `k` of `joints` is
/// matched with row `k` of `labels`.
pub fn info_nce(joints: &[Vec<f64>], labels: &[Vec<f64>], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(RigError::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if joints.len() != labels.len() {
        return Err(RigError::DimensionMismatch {
            expected: joints.len(),
            found: labels.len(),
        });
    }
    if joints.is_empty() {
        return Err(RigError::InvalidArgument("empty batch".into()));
    }
    let dim = joints[0].len();
    if let Some(bad) = joints.iter().chain(labels).find(|r| r.len() != dim) {
        return Err(RigError::DimensionMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let total: f64 = joints
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let logits: Vec<f64> = labels.iter().map(|l| dot(e, l) / temperature).collect();
            log_sum_exp(&logits) - logits[k]
        })
        .sum();
    Ok(total / joints.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preprocessing_examples() {
        let rows = [
            ("metarig--spine.1", "Spine1"),
            ("Armature--mixamorig:LeftForeArm", "LeftForeArm"),
            ("Armature--Mutant:LeftToeBase", "LeftToeBase"),
            ("GLTF_created_0--shoulder.R_Skeleton_14", "RightShoulder"),
            ("Bip001--Bip001_L_UpperArm", "LeftUpperArm"),
            ("group--pasted__Neck", "Neck"),
            ("SK_Female_Rig_V1_MainC--SK_Female_Rig_V1_SH_lShoulderJ", "LeftShoulder"),
        ];
        for (raw, want) in rows {
            assert_eq!(clean_label(raw).as_deref(), Some(want), "{raw}");
        }
    }

    #[test]
    fn generic_names_rejected() {
        for raw in ["Bone003", "Joint1", "", "--", "123", "Armature--bone_12", "Bone"] {
            assert_eq!(clean_label(raw), None, "{raw}");
        }
        assert_eq!(clean_label("hand.L").as_deref(), Some("LeftHand"));
        assert_eq!(clean_label("Left_hand_L").as_deref(), Some("LeftHand"));
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> EmbeddingTable {
        EmbeddingTable::new(
            entries[0].1.len(),
            entries.iter().map(|(l, v)| (l.to_string(), v.clone())).collect(),
        )
        .unwrap()
        .0
    }

    #[test]
    fn retrieval_examples() {
        let vocab = table(&[("Head", vec![1.0, 0.0]), ("Neck", vec![0.0, 1.0])]);
        let (joints, _) = JointEmbeddingSet::new(2, vec![vec![1.0, 0.0]]).unwrap();
        let ranked = assign_labels(&joints, &vocab, 1).unwrap();
        assert_eq!(ranked[0], vec![("Head".to_string(), 1.0)]);

        let s = 0.75f64.sqrt();
        let vocab = table(&[("A", vec![0.0, 0.0, 1.0]), ("B", vec![0.0, 1.0, 0.0])]);
        let (joints, _) = JointEmbeddingSet::new(3, vec![vec![s, 0.5, 0.0]]).unwrap();
        let ranked = assign_labels(&joints, &vocab, 2).unwrap();
        assert_eq!(ranked[0][0].0, "B");
        assert!((ranked[0][0].1 - 0.5).abs() < 1e-15);

        let vocab = table(&[("Zeta", vec![1.0, 0.0]), ("Alpha", vec![1.0, 0.0]), ("Mid", vec![0.0, 1.0])]);
        let (joints, _) = JointEmbeddingSet::new(2, vec![vec![1.0, 0.0]]).unwrap();
        let ranked = assign_labels(&joints, &vocab, 2).unwrap();
        let names: Vec<&str> = ranked[0].iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(names, ["Alpha", "Zeta"]);

        let (bad, _) = JointEmbeddingSet::new(3, vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(assign_labels(&bad, &vocab, 1), Err(RigError::DimensionMismatch { .. })));
    }

    #[test]
    fn non_unit_vectors_are_renormalized() {
        let (t, warnings) = EmbeddingTable::new(2, vec![("X".into(), vec![3.0, 4.0])]).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(t.get("X").unwrap(), &[0.6, 0.8]);
    }

    #[test]
    fn accuracy_examples() {
        let r = |labels: &[&str]| -> RankedLabels { labels.iter().map(|l| (l.to_string(), 0.0)).collect() };
        let preds = vec![r(&["a", "x", "y"]), r(&["x", "b", "y"]), r(&["x", "y", "c"]), r(&["x", "y", "z"])];
        let truth = ["a", "b", "c", "d"];
        assert_eq!(topk_accuracy(&preds, &truth, 1).unwrap(), 0.25);
        assert_eq!(topk_accuracy(&preds, &truth, 3).unwrap(), 0.75);
        assert_eq!(topk_accuracy(&preds[..1], &truth[..1], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&preds[3..], &truth[3..], 3).unwrap(), 0.0);
        assert!(topk_accuracy(&preds, &truth[..2], 1).is_err());
    }

    #[test]
    fn info_nce_examples() {
        let e = vec![vec![0.6, 0.8]];
        assert_eq!(info_nce(&e, &e, 0.07).unwrap(), 0.0);

        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let want = -(std::f64::consts::E / (std::f64::consts::E + 1.0)).ln();
        assert!((info_nce(&a, &a, 1.0).unwrap() - want).abs() < 1e-12);

        let same = vec![vec![1.0, 0.0]; 4];
        assert!((info_nce(&same, &same, 0.5).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(info_nce(&same, &same, 0.0).is_err());
    }
}
