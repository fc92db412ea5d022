use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rigkit::codec::{bfs_order, detokenize, tokenize};
use rigkit::io::document::RigDocument;
use rigkit::io::formats::{
    read_embeddings, read_pose, read_tokens, write_feature_grid, write_occupancy, write_tokens, EmbeddingFile,
};
use rigkit::io::manifest::{write_manifest, ManifestConfig, ManifestPair};
use rigkit::io::{load_asset, load_document, read_manifest, write_obj, write_rig_document, BoneNaming, EvalManifest};
use rigkit::labels::{assign_labels, clean_label, info_nce, topk_accuracy, EmbeddingTable, JointEmbeddingSet};
use rigkit::metrics::{evaluate_record, BatchReport, MetricRecord};
use rigkit::model::{apply_normalization, normalize_unit_box, validate_asset};
use rigkit::skinning::{
    forward_kinematics, heuristic_skin, lbs_pose, prune_top_k, skinning_from_embeddings,
};
use rigkit::voxel::{asset_bone_features, build_skeleton_grid, rasterize_bone, voxelize_surface, OccupancySet};
use rigkit::{NormalizationRecord, RiggedAsset};

use crate::{Cli, Command, Naming, ReportFormat, RigInput, UsageError};

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let seed = cli.seed;
    match &cli.command {
        Command::Normalize { input, output } => {
            let (asset, _) = load(input)?;
            let (normalized, record) = normalize(&asset)?;
            let total = match input_normalization(&input.rig)? {
                Some(previous) => record.compose(&previous),
                None => record,
            };
            save_rig(output, &normalized, Some(&total))?;
        }
        Command::Validate { input } => {
            let (asset, _) = load(input)?;
            let report = validate_asset(&asset);
            if !report.is_empty() {
                for v in &report.violations {
                    println!("{v}");
                }
                eprintln!("{} violations", report.len());
                return Ok(ExitCode::from(1));
            }
            println!(
                "ok: {} joints, {} bones, {} vertices, {} faces",
                asset.skeleton.len(),
                asset.skeleton.bone_count(),
                asset.mesh.vertices.len(),
                asset.mesh.faces.len()
            );
        }
        Command::Tokenize { input, max_joints, output } => {
            let (asset, _) = load(input)?;
            let (normalized, record) = normalize(&asset)?;
            let seq = tokenize(&normalized.skeleton, *max_joints)?;
            emit(output.as_deref(), &write_tokens(&seq, Some(&record)))?;
        }
        Command::Detokenize { tokens, template, template_mesh, normalized, output } => {
            let text = read_text(tokens)?;
            let (seq, record) = read_tokens(&text).with_context(|| tokens.display().to_string())?;
            let mut skeleton = detokenize(&seq)?;
            let record = record.unwrap_or_else(NormalizationRecord::identity);
            let id = tokens.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let mut asset = RiggedAsset {
                id,
                mesh: Default::default(),
                skeleton: skeleton.clone(),
                skinning: rigkit::SkinningMatrix::zeros(0, 0),
            };
            if let Some(t) = template {
                let input = RigInput {
                    rig: t.clone(),
                    mesh: template_mesh.clone(),
                    naming: Naming::Tail,
                };
                let (tpl, _) = load(&input)?;
                // Tokens were ordered in normalized coordinates.
                let order = bfs_order(&apply_normalization(&tpl, &record).skeleton)?;
                let ordered = tpl.reorder_joints(&order.permutation);
                let same_tree = ordered.skeleton.len() == skeleton.len()
                    && ordered.skeleton.joints.iter().zip(&skeleton.joints).all(|(a, b)| a.parent == b.parent);
                if same_tree {
                    for (j, t) in skeleton.joints.iter_mut().zip(&ordered.skeleton.joints) {
                        j.name = t.name.clone();
                    }
                    let mut mesh = ordered.mesh.clone();
                    if *normalized {
                        for v in &mut mesh.vertices {
                            *v = record.apply(v);
                        }
                    }
                    asset = RiggedAsset {
                        id: ordered.id.clone(),
                        mesh,
                        skeleton: skeleton.clone(),
                        skinning: ordered.skinning.clone(),
                    };
                } else {
                    log::warn!("decoded tree differs from the template; names, mesh and skin are not carried over");
                }
            }
            if !*normalized {
                for j in &mut asset.skeleton.joints {
                    j.position = record.invert(&j.position);
                }
            }
            save_rig(output, &asset, (*normalized).then_some(&record))?;
        }
        Command::VoxelizeBones { input, resolution, output } => {
            check_resolution(*resolution)?;
            let (asset, _) = load(input)?;
            let (normalized, _) = normalize(&asset)?;
            let mut set = OccupancySet::new(*resolution);
            for (h, t) in normalized.skeleton.bone_segments() {
                for v in rasterize_bone(&h, &t, *resolution)?.active {
                    set.insert(v);
                }
            }
            emit(output.as_deref(), &write_occupancy(&set))?;
        }
        Command::VoxelizeSurface { input, resolution, output } => {
            check_resolution(*resolution)?;
            let (asset, _) = load(input)?;
            require_mesh(&asset)?;
            let (normalized, _) = normalize(&asset)?;
            emit(output.as_deref(), &write_occupancy(&voxelize_surface(&normalized.mesh, *resolution)?))?;
        }
        Command::BoneFeatures { input, features, resolution, epsilon, output } => {
            check_resolution(*resolution)?;
            let (asset, _) = load(input)?;
            require_mesh(&asset)?;
            if !asset.has_skinning() {
                bail!(UsageError(format!("{}: rig has no skin weights", input.rig.display())));
            }
            let (normalized, _) = normalize(&asset)?;
            let vertex_features: Vec<Vec<f64>> = match features {
                Some(p) => {
                    let file = read_embedding_file(p, false)?;
                    if file.rows.len() != normalized.mesh.vertices.len() {
                        bail!(
                            "{}: {} feature rows for {} vertices",
                            p.display(),
                            file.rows.len(),
                            normalized.mesh.vertices.len()
                        );
                    }
                    file.vectors()
                }
                None => normalized.mesh.vertices.iter().map(|v| vec![v.x, v.y, v.z]).collect(),
            };
            let bone_features = asset_bone_features(&normalized, &vertex_features, *epsilon)?;
            let grid = build_skeleton_grid(&normalized.skeleton.bone_segments(), &bone_features, *resolution)?;
            emit(output.as_deref(), &write_feature_grid(&grid))?;
        }
        Command::SkinHeuristic { input, sharpness, top4, output } => {
            let (mut asset, _) = load(input)?;
            require_mesh(&asset)?;
            let mut w = heuristic_skin(&asset.mesh, &asset.skeleton, *sharpness)?;
            if *top4 {
                w = prune_top_k(&w, 4);
            }
            asset.skinning = w;
            save_rig(output, &asset, input_normalization(&input.rig)?.as_ref())?;
        }
        Command::SkinFromEmbeddings { input, points, bones, output } => {
            let (mut asset, _) = load(input)?;
            require_mesh(&asset)?;
            let p = read_embedding_file(points, false)?.to_matrix()?;
            let b = read_embedding_file(bones, false)?.to_matrix()?;
            if p.rows() != asset.mesh.vertices.len() {
                bail!("{}: {} rows for {} vertices", points.display(), p.rows(), asset.mesh.vertices.len());
            }
            if b.rows() != asset.skeleton.bone_count() {
                bail!("{}: {} rows for {} bones", bones.display(), b.rows(), asset.skeleton.bone_count());
            }
            asset.skinning = skinning_from_embeddings(&p, &b)?;
            save_rig(output, &asset, input_normalization(&input.rig)?.as_ref())?;
        }
        Command::Pose { input, pose, output } => {
            let (asset, _) = load(input)?;
            require_mesh(&asset)?;
            if !asset.has_skinning() {
                bail!(UsageError(format!("{}: rig has no skin weights", input.rig.display())));
            }
            let spec = read_pose(&read_text(pose)?, &asset.skeleton).with_context(|| pose.display().to_string())?;
            let transforms = forward_kinematics(&asset.skeleton, &spec)?;
            let posed = lbs_pose(&asset.mesh, &asset.skinning, &transforms)?;
            emit(output.as_deref(), &write_obj(&posed))?;
        }
        Command::Eval { manifest, format, output, report } => {
            let batch = eval_manifest(manifest, seed)?;
            let json = serde_json::to_string_pretty(&batch)? + "\n";
            if let Some(r) = report {
                write_file(r, &json)?;
            }
            match format {
                ReportFormat::Table => emit(output.as_deref(), &format_table(&batch))?,
                ReportFormat::Json => emit(output.as_deref(), &json)?,
            }
        }
        Command::LabelAssign { joints, vocab, k, output } => {
            if *k == 0 {
                bail!(UsageError("-k must be positive".into()));
            }
            let joint_file = read_embedding_file(joints, true)?;
            let (table, warnings) = load_vocab(vocab)?;
            warnings.iter().for_each(|w| log::warn!("{}: {w}", vocab.display()));
            let (set, warnings) = JointEmbeddingSet::new(joint_file.dim, joint_file.vectors())?;
            warnings.iter().for_each(|w| log::warn!("{}: {w}", joints.display()));
            let ranked = assign_labels(&set, &table, *k)?;
            let mut out = String::new();
            for (row, (r, labels)) in joint_file.rows.iter().zip(&ranked).enumerate() {
                let joint = r.joint.unwrap_or(row);
                for (rank, (label, score)) in labels.iter().enumerate() {
                    let _ = writeln!(out, "{joint}\t{}\t{label}\t{score:.6}", rank + 1);
                }
            }
            let truth: Option<Vec<String>> = joint_file.rows.iter().map(|r| r.label.clone()).collect();
            if let Some(truth) = truth.filter(|t| !t.is_empty()) {
                for kk in [1, *k] {
                    let acc = topk_accuracy(&ranked, &truth, kk)?;
                    let _ = writeln!(out, "# top-{kk} accuracy {acc:.6}");
                    if *k == 1 {
                        break;
                    }
                }
            }
            emit(output.as_deref(), &out)?;
        }
        Command::LabelClean { names, input } => {
            let mut raw: Vec<String> = names.clone();
            if let Some(p) = input {
                raw.extend(read_text(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
            }
            if raw.is_empty() {
                bail!(UsageError("no names given".into()));
            }
            let mut out = String::new();
            for r in &raw {
                let cleaned = clean_label(r);
                let _ = writeln!(out, "{r}\t{}", cleaned.as_deref().unwrap_or("REJECT"));
            }
            print!("{out}");
        }
        Command::LabelScore { joints, vocab, temperature } => {
            if !(*temperature > 0.0) {
                bail!(UsageError("--temperature must be positive".into()));
            }
            let joint_file = read_embedding_file(joints, true)?;
            let (table, _) = load_vocab(vocab)?;
            let (set, _) = JointEmbeddingSet::new(joint_file.dim, joint_file.vectors())?;
            let mut js = Vec::new();
            let mut ls = Vec::new();
            let mut skipped = 0;
            for (i, r) in joint_file.rows.iter().enumerate() {
                match r.label.as_deref().and_then(|l| table.get(l)) {
                    Some(v) => {
                        js.push(set.row(i).to_vec());
                        ls.push(v.to_vec());
                    }
                    None => skipped += 1,
                }
            }
            if js.is_empty() {
                bail!("{}: no joint carries a label from the vocabulary", joints.display());
            }
            if skipped > 0 {
                log::warn!("{skipped} joints without a vocabulary label were skipped");
            }
            let loss = info_nce(&js, &ls, *temperature)?;
            println!("info_nce {loss:.9} pairs {} temperature {temperature}", js.len());
        }
        Command::RenderSkeleton { input, view, size, labels, output } => {
            let (asset, _) = load(input)?;
            let (normalized, _) = normalize(&asset)?;
            emit(output.as_deref(), &crate::render::svg(&normalized.skeleton, *view, *size, *labels))?;
        }
        Command::Synth { pairs, out, min_vertices, max_vertices, max_bones, jitter } => {
            if *max_bones < 2 || *min_vertices < 8 || min_vertices > max_vertices {
                bail!(UsageError("need --max-bones ≥ 2 and 8 ≤ --min-vertices ≤ --max-vertices".into()));
            }
            synth(out, *pairs, seed.unwrap_or(0), (*min_vertices, *max_vertices), *max_bones, *jitter)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn naming(n: Naming) -> BoneNaming {
    match n {
        Naming::Tail => BoneNaming::Tail,
        Naming::Head => BoneNaming::Head,
    }
}

fn load(input: &RigInput) -> Result<(RiggedAsset, Vec<String>)> {
    let (asset, warnings) = load_asset(&input.rig, input.mesh.as_deref(), naming(input.naming))?;
    for w in &warnings {
        log::warn!("{}: {w}", input.rig.display());
    }
    Ok((asset, warnings))
}

/// Unit-box normalization over mesh and joints, or joints alone for a rig
/// without a mesh.
fn normalize(asset: &RiggedAsset) -> Result<(RiggedAsset, NormalizationRecord)> {
    if asset.mesh.vertices.is_empty() {
        let record = NormalizationRecord::fit(asset.skeleton.joints.iter().map(|j| &j.position))?;
        Ok((apply_normalization(asset, &record), record))
    } else {
        Ok(normalize_unit_box(asset)?)
    }
}

fn input_normalization(path: &Path) -> Result<Option<NormalizationRecord>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        Ok(load_document(path)?.normalization())
    } else {
        Ok(None)
    }
}

fn require_mesh(asset: &RiggedAsset) -> Result<()> {
    if asset.mesh.vertices.is_empty() {
        bail!(UsageError(format!("rig {:?} has no mesh; pass --mesh", asset.id)));
    }
    Ok(())
}

fn check_resolution(r: u32) -> Result<()> {
    if r == 0 || r > 4096 {
        bail!(UsageError(format!("resolution {r} is outside 1..=4096")));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn read_embedding_file(path: &Path, joint_column: bool) -> Result<EmbeddingFile> {
    read_embeddings(&read_text(path)?, joint_column).with_context(|| path.display().to_string())
}

fn load_vocab(path: &Path) -> Result<(EmbeddingTable, Vec<String>)> {
    let file = read_embedding_file(path, false)?;
    Ok(EmbeddingTable::new(file.dim, file.labeled()).with_context(|| path.display().to_string())?)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn emit(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) if p.as_os_str() != "-" => write_file(p, content),
        _ => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

/// Writes the rig document and, when the asset has a mesh, an OBJ next to
/// it that the document references.
fn save_rig(path: &Path, asset: &RiggedAsset, normalization: Option<&NormalizationRecord>) -> Result<()> {
    let mesh_ref = if asset.mesh.vertices.is_empty() {
        None
    } else {
        let mesh_path = path.with_extension("obj");
        write_file(&mesh_path, &write_obj(&asset.mesh))?;
        mesh_path.file_name().map(|n| n.to_string_lossy().into_owned())
    };
    let doc = RigDocument::from_asset(asset, mesh_ref, normalization)?;
    write_file(path, &write_rig_document(&doc)?)
}

fn eval_manifest(path: &Path, seed: Option<u64>) -> Result<BatchReport> {
    let manifest: EvalManifest = read_manifest(&read_text(path)?).with_context(|| path.display().to_string())?;
    let config = manifest.config.eval_config(seed);
    let naming = manifest.config.bone_naming;
    let dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let resolve = |p: &str| dir.join(p);
    let load_one = |rig: &str, mesh: &Option<String>| -> Result<RiggedAsset> {
        let mesh = mesh.as_deref().map(resolve);
        let (asset, warnings) = load_asset(&resolve(rig), mesh.as_deref(), naming)?;
        for w in warnings {
            log::warn!("{rig}: {w}");
        }
        Ok(asset)
    };
    // Pairs are loaded and scored one at a time so only a few assets are
    // resident at once.
    let records = manifest
        .pairs
        .par_iter()
        .map(|p| -> Result<MetricRecord> {
            let pred = load_one(&p.pred, &p.pred_mesh)?;
            let reference = load_one(&p.reference, &p.ref_mesh)?;
            let record = evaluate_record(&p.id, &pred, &reference, &config).with_context(|| format!("pair {}", p.id))?;
            log::info!("scored {}", p.id);
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchReport::from_records(records, &config))
}

fn format_table(report: &BatchReport) -> String {
    let c = &report.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# pairs={} samples_per_bone={} n_points={} kl_epsilon={:e} seed={} pairing={} anchor={}",
        report.records.len(),
        c.samples_per_bone,
        c.skin.n_points,
        c.skin.epsilon,
        c.skin.seed,
        c.skin.pairing.name(),
        c.skin.anchor.name()
    );
    let _ = writeln!(out, "# chamfer: {}; skeleton columns scaled by 100", report.chamfer_convention);
    let width = report.records.iter().map(|r| r.id.len()).max().unwrap_or(0).max(4);
    let _ = writeln!(
        out,
        "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}  {:>10}",
        "id", "J2Jx100", "J2Bx100", "B2Bx100", "skin_l1", "skin_l2", "skin_kl"
    );
    let skin_cols = |s: Option<(f64, f64, f64)>| match s {
        Some((a, b, c)) => format!("{a:>10.4}  {b:>10.4}  {c:>10.4}"),
        None => format!("{:>10}  {:>10}  {:>10}", "-", "-", "-"),
    };
    for r in &report.records {
        let _ = writeln!(
            out,
            "{:<width$}  {:>10.4}  {:>10.4}  {:>10.4}  {}",
            r.id,
            r.j2j_x100,
            r.j2b_x100,
            r.b2b_x100,
            skin_cols(r.skin.map(|s| (s.l1, s.l2, s.kl)))
        );
    }
    let a = &report.aggregate;
    let _ = writeln!(
        out,
        "{:<width$}  {:>10.4}  {:>10.4}  {:>10.4}  {}",
        "mean",
        a.j2j_x100,
        a.j2b_x100,
        a.b2b_x100,
        skin_cols(a.skin.map(|s| (s.l1, s.l2, s.kl)))
    );
    out
}

/// Mesh resolution whose vertex count is at most `target`.
fn blob_resolution(target: usize) -> (usize, usize) {
    let rings = ((target as f64 / 2.0).sqrt().round() as usize).max(2);
    let segments = ((target.saturating_sub(2)) / (rings - 1)).max(3);
    (rings, segments)
}

fn synth(out: &Path, pairs: usize, seed: u64, vertices: (usize, usize), max_bones: usize, jitter: f64) -> Result<()> {
    let ids: Vec<String> = (0..pairs).map(|i| format!("pair{i:04}")).collect();
    let files: Vec<Vec<(PathBuf, String)>> = ids
        .par_iter()
        .enumerate()
        .map(|(i, id)| -> Result<Vec<(PathBuf, String)>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let target = rng.random_range(vertices.0..=vertices.1);
            let (rings, segments) = blob_resolution(target);
            let joints = rng.random_range(3..=max_bones);
            let reference = rigkit::synth::random_asset(&mut rng, id, joints, rings, segments);
            let pred = rigkit::synth::perturbed_prediction(&mut rng, &reference, jitter);
            let ref_doc = RigDocument::from_asset(&reference, Some(format!("{id}.obj")), None)?;
            let pred_doc = RigDocument::from_asset(&pred, Some(format!("../ref/{id}.obj")), None)?;
            Ok(vec![
                (PathBuf::from("ref").join(format!("{id}.obj")), write_obj(&reference.mesh)),
                (PathBuf::from("ref").join(format!("{id}.json")), write_rig_document(&ref_doc)?),
                (PathBuf::from("pred").join(format!("{id}.json")), write_rig_document(&pred_doc)?),
            ])
        })
        .collect::<Result<_>>()?;
    for (rel, content) in files.iter().flatten() {
        write_file(&out.join(rel), content)?;
    }
    let manifest = EvalManifest {
        config: ManifestConfig::default(),
        pairs: ids
            .iter()
            .map(|id| ManifestPair {
                id: id.clone(),
                pred: format!("pred/{id}.json"),
                reference: format!("ref/{id}.json"),
                pred_mesh: None,
                ref_mesh: None,
            })
            .collect(),
    };
    write_file(&out.join("manifest.toml"), &write_manifest(&manifest)?)?;
    log::info!("wrote {pairs} pairs under {}", out.display());
    Ok(())
}
