//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rigkit::codec::{bfs_order, detokenize, tokenize, DEFAULT_MAX_JOINTS};
use rigkit::io::formats::write_tokens;
use rigkit::io::{load_asset, BoneNaming};
use rigkit::labels::{clean_label, info_nce, topk_accuracy, RankedLabels};
use rigkit::metrics::{b2b, chamfer_j2j, evaluate_pair, point_segment_distance, solve_ot, uniform_mass, EvalConfig};
use rigkit::model::Skeleton;
use rigkit::skinning::{
    forward_kinematics, lbs_pose, skinning_from_embeddings, soft_cross_entropy, softmax_in_place, BoneTransforms,
    EmbeddingMatrix, PoseSpec,
};
use rigkit::synth::{random_asset, random_normalized_skeleton, random_skeleton};
use rigkit::voxel::{rasterize_bone, voxel_of_point, VoxelCoord};
use rigkit::{Joint, Mesh, SkinningMatrix, Vec3};

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what())
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit, || {
        format!("took {:.2}s, limit {limit}s", elapsed.as_secs_f64())
    })
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let bound = 3f64.sqrt() / 256.0;
    let (mut worst_pos, mut worst_j2j) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(3..=64);
        let s = random_normalized_skeleton(&mut rng, n);
        let ordered = bfs_order(&s).map_err(|e| e.to_string())?.skeleton;
        let decoded = detokenize(&tokenize(&s, DEFAULT_MAX_JOINTS).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        check(decoded.len() == ordered.len(), || "joint count changed".into())?;
        for (a, b) in decoded.joints.iter().zip(&ordered.joints) {
            check(a.parent == b.parent, || "topology changed".into())?;
            worst_pos = worst_pos.max((a.position - b.position).norm());
        }
        worst_j2j = worst_j2j.max(chamfer_j2j(&decoded.positions(), &s.positions()).map_err(|e| e.to_string())? * 100.0);
    }
    check(worst_pos <= bound, || format!("position error {worst_pos} > {bound}"))?;
    check(worst_j2j <= 0.677, || format!("J2J x100 {worst_j2j} > 0.677"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!("max position error {worst_pos:.6}, max J2J x100 {worst_j2j:.4}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..200 {
        let n = rng.random_range(2..=64);
        let s = random_skeleton(&mut rng, n);
        let base = write_tokens(&tokenize(&s, DEFAULT_MAX_JOINTS).map_err(|e| e.to_string())?, None);
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let shuffled = s.permuted(&perm);
            let text = write_tokens(&tokenize(&shuffled, DEFAULT_MAX_JOINTS).map_err(|e| e.to_string())?, None);
            check(text == base, || "token stream depends on storage order".into())?;
        }
    }
    within(start.elapsed(), 5.0)?;
    Ok("200 skeletons x 5 permutations byte-identical".into())
}

fn unit_points<R: Rng>(rng: &mut R, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
}

fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let dir = |x: &[Vec3], y: &[Vec3]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    0.5 * (dir(a, b) + dir(b, a))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst_chamfer = 0.0f64;
    for _ in 0..500 {
        let (na, nb) = (rng.random_range(1..80), rng.random_range(1..80));
        let a = unit_points(&mut rng, na);
        let b = unit_points(&mut rng, nb);
        let d = (chamfer_j2j(&a, &b).map_err(|e| e.to_string())? - brute_chamfer(&a, &b)).abs();
        worst_chamfer = worst_chamfer.max(d);
    }
    check(worst_chamfer <= 1e-12, || format!("chamfer deviates by {worst_chamfer:e}"))?;

    let mut worst_seg = 0.0f64;
    for _ in 0..500 {
        let v = unit_points(&mut rng, 3);
        let (p, a, b) = (v[0], v[1], v[2]);
        let sampled = (0..4096)
            .map(|s| (a + (b - a) * (s as f64 / 4095.0) - p).norm())
            .fold(f64::INFINITY, f64::min);
        worst_seg = worst_seg.max((point_segment_distance(&p, &a, &b) - sampled).abs());
    }
    check(worst_seg <= 1e-4, || format!("segment distance deviates by {worst_seg:e}"))?;

    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let (np, nr) = (rng.random_range(3..=40), rng.random_range(3..=40));
        let pred = random_normalized_skeleton(&mut rng, np).bone_segments();
        let reference = random_normalized_skeleton(&mut rng, nr).bone_segments();
        let coarse = b2b(&pred, &reference, 32).map_err(|e| e.to_string())?;
        let fine = b2b(&pred, &reference, 64).map_err(|e| e.to_string())?;
        worst_rel = worst_rel.max((coarse - fine).abs() / fine);
    }
    check(worst_rel <= 0.01, || format!("b2b relative change {worst_rel}"))?;
    Ok(format!(
        "chamfer {worst_chamfer:.1e}, segment {worst_seg:.1e}, b2b 32->64 change {:.3}%",
        worst_rel * 100.0
    ))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let perms = permutations(5);
    let (mut worst_obj, mut worst_marg) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let cost: Vec<Vec<f64>> = (0..5).map(|_| (0..5).map(|_| rng.random::<f64>()).collect()).collect();
        let plan = solve_ot(&cost, &uniform_mass(5), &uniform_mass(5)).map_err(|e| e.to_string())?;
        let best = perms
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>() / 5.0)
            .fold(f64::INFINITY, f64::min);
        worst_obj = worst_obj.max((plan.objective() - best).abs());
        for s in plan.row_sums().iter().chain(&plan.col_sums()) {
            worst_marg = worst_marg.max((s - 0.2).abs());
        }
    }
    check(perms.len() == 120, || "wrong permutation count".into())?;
    check(worst_obj <= 1e-9, || format!("objective off by {worst_obj:e}"))?;
    check(worst_marg <= 1e-9, || format!("marginals off by {worst_marg:e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("objective {worst_obj:.1e}, marginals {worst_marg:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let config = EvalConfig::default();
    let mut worst = 0.0f64;
    for i in 0..100 {
        let joints = rng.random_range(2..=64);
        let rings = rng.random_range(6..=30);
        let segments = rng.random_range(8..=60);
        let a = random_asset(&mut rng, &format!("a{i}"), joints, rings, segments);
        let r = evaluate_pair(&a, &a, &config).map_err(|e| e.to_string())?.record;
        let skin = r.skin.ok_or("no skin scores")?;
        for v in [r.j2j, r.j2b, r.b2b, skin.l1, skin.l2, skin.kl] {
            worst = worst.max(v.abs());
        }
    }
    check(worst <= 1e-6, || format!("largest self score {worst:e}"))?;
    Ok(format!("largest of six metrics {worst:.1e}"))
}

fn one_row(values: &[f64]) -> SkinningMatrix {
    SkinningMatrix::from_rows(&[values.to_vec()]).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (mut worst_sum, mut worst_shift) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(1..=64);
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        let c = rng.random_range(-50.0..50.0);
        let mut a = logits.clone();
        let mut b: Vec<f64> = logits.iter().map(|l| l + c).collect();
        softmax_in_place(&mut a);
        softmax_in_place(&mut b);
        worst_sum = worst_sum.max((a.iter().sum::<f64>() - 1.0).abs());
        for (x, y) in a.iter().zip(&b) {
            worst_shift = worst_shift.max((x - y).abs());
        }
    }
    let points = EmbeddingMatrix::new(4, 1, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
    let bones = EmbeddingMatrix::new(2, 1, vec![0.0, 3f64.ln()]).unwrap();
    let w = skinning_from_embeddings(&points, &bones).map_err(|e| e.to_string())?;
    check((w.get(0, 0) - 0.25).abs() <= 1e-12 && (w.get(0, 1) - 0.75).abs() <= 1e-12, || "analytic softmax".into())?;
    check(worst_sum <= 1e-9, || format!("row sum off by {worst_sum:e}"))?;
    check(worst_shift <= 1e-12, || format!("shift changes weights by {worst_shift:e}"))?;

    let ln2 = 2f64.ln();
    let uniform = one_row(&[0.5, 0.5]);
    let ce1 = soft_cross_entropy(&uniform, &uniform).map_err(|e| e.to_string())?;
    let ce2 = soft_cross_entropy(&one_row(&[1.0, 0.0]), &uniform).map_err(|e| e.to_string())?;
    check((ce1 - ln2).abs() <= 1e-9 && (ce2 - ln2).abs() <= 1e-9, || format!("cross entropy {ce1} {ce2}"))?;

    for _ in 0..1000 {
        let (rows, cols) = (rng.random_range(1..20), rng.random_range(1..10));
        let random_rows = |rng: &mut ChaCha8Rng| {
            let rs: Vec<Vec<f64>> = (0..rows)
                .map(|_| {
                    let mut r: Vec<f64> = (0..cols).map(|_| rng.random_range(-5.0..5.0)).collect();
                    softmax_in_place(&mut r);
                    r
                })
                .collect();
            SkinningMatrix::from_rows(&rs).unwrap()
        };
        let r = random_rows(&mut rng);
        let p = random_rows(&mut rng);
        let cross = soft_cross_entropy(&r, &p).map_err(|e| e.to_string())?;
        let own = soft_cross_entropy(&r, &r).map_err(|e| e.to_string())?;
        check(cross >= own - 1e-12, || format!("Gibbs violated: {cross} < {own}"))?;
    }
    Ok(format!("row sum {worst_sum:.1e}, shift {worst_shift:.1e}, ln 2 cases and Gibbs hold"))
}

/// Cells visited along the segment, found by dense sampling with bisection
/// at every change of cell.
fn sampled_cells(a: &Vec3, b: &Vec3, res: u32) -> BTreeSet<VoxelCoord> {
    fn refine(a: &Vec3, b: &Vec3, res: u32, t0: f64, c0: VoxelCoord, t1: f64, c1: VoxelCoord, out: &mut BTreeSet<VoxelCoord>) {
        if c0 == c1 || t1 - t0 < 1e-14 {
            return;
        }
        let tm = 0.5 * (t0 + t1);
        let cm = voxel_of_point(&(a + (b - a) * tm), res);
        out.insert(cm);
        refine(a, b, res, t0, c0, tm, cm, out);
        refine(a, b, res, tm, cm, t1, c1, out);
    }
    let steps = (((b - a).norm() * res as f64 * 32.0).ceil() as usize).max(1);
    let mut out = BTreeSet::new();
    let mut prev = (0.0, voxel_of_point(a, res));
    out.insert(prev.1);
    for s in 1..=steps {
        let t = s as f64 / steps as f64;
        let c = voxel_of_point(&(a + (b - a) * t), res);
        out.insert(c);
        refine(a, b, res, prev.0, prev.1, t, c, &mut out);
        prev = (t, c);
    }
    out
}

fn connected_26(cells: &BTreeSet<VoxelCoord>) -> bool {
    let Some(&first) = cells.iter().next() else {
        return true;
    };
    let mut seen = HashSet::from([first]);
    let mut queue = VecDeque::from([first]);
    while let Some(c) = queue.pop_front() {
        for di in -1i64..=1 {
            for dj in -1i64..=1 {
                for dk in -1i64..=1 {
                    let n = [c.i as i64 + di, c.j as i64 + dj, c.k as i64 + dk];
                    if n.iter().any(|&x| x < 0) {
                        continue;
                    }
                    let v = VoxelCoord::new(n[0] as u32, n[1] as u32, n[2] as u32);
                    if cells.contains(&v) && seen.insert(v) {
                        queue.push_back(v);
                    }
                }
            }
        }
    }
    seen.len() == cells.len()
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let res = 64;
    let mut total = 0;
    for n in 0..1000 {
        let v = unit_points(&mut rng, 2);
        let (a, b) = if n % 10 == 0 { (v[0], v[0]) } else { (v[0], v[1]) };
        let got: BTreeSet<VoxelCoord> = rasterize_bone(&a, &b, res).map_err(|e| e.to_string())?.active.into_iter().collect();
        let want = sampled_cells(&a, &b, res);
        check(got == want, || {
            format!(
                "segment {a:?}->{b:?}: {} cells vs {} sampled",
                got.len(),
                want.len()
            )
        })?;
        check(got.contains(&voxel_of_point(&a, res)) && got.contains(&voxel_of_point(&b, res)), || {
            "endpoint voxel missing".into()
        })?;
        check(connected_26(&got), || "not 26-connected".into())?;
        total += got.len();
    }
    Ok(format!("1000 segments, {total} voxels, all match the sampling oracle"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    for _ in 0..50 {
        let joints = rng.random_range(2..30);
        let a = random_asset(&mut rng, "a", joints, 8, 12);
        let t = forward_kinematics(&a.skeleton, &PoseSpec::identity(a.skeleton.len())).map_err(|e| e.to_string())?;
        check(t.rest == t.posed, || "identity pose moved a bone".into())?;
        let posed = lbs_pose(&a.mesh, &a.skinning, &t).map_err(|e| e.to_string())?;
        let worst = posed
            .vertices
            .iter()
            .zip(&a.mesh.vertices)
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        check(worst <= 1e-9, || format!("identity pose moved a vertex by {worst:e}"))?;
    }

    let rot = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
    let chain = Skeleton::from_joints(vec![
        Joint::new(Vec3::zeros(), None),
        Joint::new(Vec3::x(), Some(0)),
        Joint::new(Vec3::new(2.0, 0.0, 0.0), Some(1)),
    ])
    .unwrap();
    let mut pose = PoseSpec::identity(3);
    pose.rotations[0] = rot;
    let t = forward_kinematics(&chain, &pose).map_err(|e| e.to_string())?;
    let child = t.joint_world[1].translation.vector - t.joint_world[0].translation.vector;
    check((child - Vec3::y()).norm() <= 1e-9, || format!("child at {child:?}"))?;
    pose.rotations[1] = rot;
    let t = forward_kinematics(&chain, &pose).map_err(|e| e.to_string())?;
    let grand = t.joint_world[2].translation.vector - t.joint_world[1].translation.vector;
    check((grand + Vec3::x()).norm() <= 1e-9, || format!("grandchild offset {grand:?}"))?;

    let mesh = Mesh::new(vec![Vec3::new(0.3, 0.2, 0.1)], vec![]);
    let transforms = BoneTransforms {
        rest: vec![Isometry3::identity(); 2],
        posed: vec![
            Isometry3::identity(),
            Isometry3::from_parts(Translation3::new(2.0, 0.0, 0.0), UnitQuaternion::identity()),
        ],
        joint_world: vec![Isometry3::identity(); 3],
    };
    let moved = lbs_pose(&mesh, &one_row(&[0.5, 0.5]), &transforms).map_err(|e| e.to_string())?;
    let d = moved.vertices[0] - mesh.vertices[0];
    check((d - Vec3::x()).norm() <= 1e-9, || format!("blend moved vertex by {d:?}"))?;
    Ok("identity fixed point, 90 and 180 degree chains, linear blend".into())
}

fn criterion_9() -> Outcome {
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
        let got = clean_label(raw);
        check(got.as_deref() == Some(want), || format!("{raw} -> {got:?}, expected {want}"))?;
    }
    for raw in ["Bone003", "Joint1"] {
        check(clean_label(raw).is_none(), || format!("{raw} was not rejected"))?;
    }

    let e = vec![vec![0.6, 0.8]];
    let single = info_nce(&e, &e, 0.07).map_err(|e| e.to_string())?;
    check(single.abs() <= 1e-9, || format!("B=1 loss {single}"))?;
    let same = vec![vec![1.0, 0.0]; 4];
    let four = info_nce(&same, &same, 0.1).map_err(|e| e.to_string())?;
    check((four - 4f64.ln()).abs() <= 1e-9, || format!("identical B=4 loss {four}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let vocab: Vec<String> = (0..12).map(|i| format!("L{i}")).collect();
    for _ in 0..500 {
        let n = rng.random_range(1..30);
        let depth = rng.random_range(1..=vocab.len());
        let preds: Vec<RankedLabels> = (0..n)
            .map(|_| {
                let mut v = vocab.clone();
                v.shuffle(&mut rng);
                v.into_iter().take(depth).enumerate().map(|(i, l)| (l, -(i as f64))).collect()
            })
            .collect();
        let truth: Vec<&String> = (0..n).map(|_| &vocab[rng.random_range(0..vocab.len())]).collect();
        let mut last = 0.0;
        for k in 1..=depth + 2 {
            let acc = topk_accuracy(&preds, &truth, k).map_err(|e| e.to_string())?;
            check(acc >= last, || format!("top-{k} accuracy {acc} < {last}"))?;
            last = acc;
        }
    }
    Ok("7 preprocessing examples exact, generic names rejected, InfoNCE cases, top-k monotone".into())
}

fn run_cli(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rigkit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("rigkit {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let path = |p: &str| root.join(p).to_string_lossy().into_owned();
    run_cli(&["synth", "--pairs", "270", "--out", &path("set"), "--seed", "10"])?;

    let (mut max_v, mut max_b) = (0, 0);
    for i in 0..270 {
        for side in ["ref", "pred"] {
            let doc = root.join(format!("set/{side}/pair{i:04}.json"));
            let (a, _) = load_asset(&doc, None, BoneNaming::Tail).map_err(|e| e.to_string())?;
            max_v = max_v.max(a.mesh.vertices.len());
            max_b = max_b.max(a.skeleton.bone_count());
        }
    }
    check(max_v <= 5000 && max_b <= 64, || format!("synthetic set too large: {max_v} vertices, {max_b} bones"))?;

    let manifest = path("set/manifest.toml");
    let start = Instant::now();
    run_cli(&["eval", &manifest, "--threads", "1", "-o", &path("t1.txt"), "--report", &path("r1.json")])?;
    let single = start.elapsed();
    within(single, 120.0)?;
    for threads in ["2", "4", "7"] {
        let table = path(&format!("t{threads}.txt"));
        let report = path(&format!("r{threads}.json"));
        run_cli(&["eval", &manifest, "--threads", threads, "-o", &table, "--report", &report])?;
        for (a, b) in [("t1.txt", table), ("r1.json", report)] {
            let x = std::fs::read(root.join(a)).map_err(|e| e.to_string())?;
            let y = std::fs::read(Path::new(&b)).map_err(|e| e.to_string())?;
            check(x == y, || format!("{threads} threads changed {b}"))?;
        }
    }
    Ok(format!(
        "270 pairs (max {max_v} vertices, {max_b} bones) in {:.1}s single-threaded; identical for 1/2/4/7 threads",
        single.as_secs_f64()
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("tokenizer round trip", criterion_1),
        ("order determinism", criterion_2),
        ("metric oracles", criterion_3),
        ("optimal transport exactness", criterion_4),
        ("self-evaluation zero", criterion_5),
        ("skinning math", criterion_6),
        ("voxel traversal", criterion_7),
        ("forward kinematics and blend skinning", criterion_8),
        ("label pipeline", criterion_9),
        ("end-to-end throughput", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {label} ({secs:.2}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {label} ({secs:.2}s): {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
