//! File formats and asset loading.

pub mod document;
pub mod formats;
pub mod manifest;
pub mod obj;
pub mod rignet;
pub mod skin;

use std::path::{Path, PathBuf};

use crate::error::{ParseError, Result, RigError};
use crate::model::{Mesh, RiggedAsset};

pub use document::{read_rig_document, write_rig_document, RigDocument};
pub use manifest::{read_manifest, EvalManifest};
pub use obj::{parse_obj, write_obj};
pub use rignet::{parse_rignet_rig, RigNetRig};
pub use skin::{densify_skin, BoneNaming};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| RigError::Parse(ParseError::at_path(path.display().to_string(), e.to_string())))
}

/// Prefixes parse errors with the file they came from.
fn in_file<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        RigError::Parse(p) => RigError::Parse(ParseError::at_path(
            format!("{}: {}", path.display(), p.location),
            p.message,
        )),
        other => other,
    })
}

pub fn load_mesh(path: &Path) -> Result<(Mesh, Vec<String>)> {
    let obj = in_file(path, parse_obj(&read_file(path)?))?;
    Ok((obj.mesh, obj.warnings))
}

pub fn load_document(path: &Path) -> Result<RigDocument> {
    in_file(path, read_rig_document(&read_file(path)?))
}

/// Resolves a document's mesh reference against its own directory.
pub fn document_mesh_path(doc_path: &Path, doc: &RigDocument) -> Option<PathBuf> {
    doc.mesh
        .as_ref()
        .map(|m| doc_path.parent().unwrap_or(Path::new("")).join(m))
}

/// Loads a rig from a JSON document (`.json`) or a RigNet text file
/// (anything else). `mesh` overrides the document's mesh reference and is
/// required for RigNet files. `naming` applies to RigNet skins only.
pub fn load_asset(path: &Path, mesh: Option<&Path>, naming: BoneNaming) -> Result<(RiggedAsset, Vec<String>)> {
    let mut warnings = Vec::new();
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let asset = if is_json {
        let doc = load_document(path)?;
        let mesh_path = mesh.map(Path::to_path_buf).or_else(|| document_mesh_path(path, &doc));
        let mesh = match mesh_path {
            Some(p) => {
                let (m, w) = load_mesh(&p)?;
                warnings.extend(w);
                m
            }
            None => Mesh::default(),
        };
        let (asset, empty) = in_file(path, doc.to_asset(mesh))?;
        if empty > 0 {
            warnings.push(format!("{empty} vertices without skin weights got uniform rows"));
        }
        asset
    } else {
        let text = String::from_utf8_lossy(&read_file(path)?).into_owned();
        let rig = in_file(path, parse_rignet_rig(&text))?;
        let mesh_path = mesh.ok_or_else(|| {
            RigError::InvalidArgument(format!("{}: a mesh is required for RigNet rig files", path.display()))
        })?;
        let (mesh, w) = load_mesh(mesh_path)?;
        warnings.extend(w);
        let skinning = if rig.skin.is_empty() {
            crate::model::SkinningMatrix::zeros(0, 0)
        } else {
            let (s, empty) = densify_skin(&rig.skeleton, mesh.vertices.len(), &rig.skin, naming)?;
            if empty > 0 {
                warnings.push(format!("{empty} vertices without skin weights got uniform rows"));
            }
            s
        };
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        RiggedAsset {
            id,
            mesh,
            skeleton: rig.skeleton,
            skinning,
        }
    };
    Ok((asset, warnings))
}
