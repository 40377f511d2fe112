use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use labelprop::nifti;
use labelprop::phantom::{BlobSpec, PhantomSpec};
use labelprop::volume::{Geometry, LabelSet, MultiLabelAnnotation, Volume};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelprop")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_spec() -> PhantomSpec {
    let blob = |label: u16, name: &str, center: [f64; 3], intensity: f64| BlobSpec {
        label,
        name: name.into(),
        center,
        intensity,
    };
    PhantomSpec {
        dims: [16, 12, 10],
        spacing: [1.0; 3],
        roi_radii: None,
        background_intensity: 0.0,
        blobs: vec![
            blob(1, "a", [3.0, 3.0, 5.0], 0.2),
            blob(2, "b", [12.0, 3.0, 5.0], 0.5),
            blob(3, "c", [8.0, 9.0, 5.0], 0.8),
        ],
        noise_sigma: 0.01,
        unlabeled_fraction: 0.4,
        conflict_fraction: 0.2,
        retain_blob_centers: true,
        seed: 3,
    }
}

fn make_phantom_dir(dir: &Path) -> PathBuf {
    let spec_path = dir.join("spec.json");
    fs::write(&spec_path, small_spec().to_json()).unwrap();
    let out = dir.join("ph");
    let o = run(&["phantom", "--spec", s(&spec_path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn annotation_args(ph: &Path) -> Vec<String> {
    ["a", "b", "c"].iter().map(|n| ph.join(format!("annotation_{n}.nii")).to_str().unwrap().to_owned()).collect()
}

fn propagate_args(ph: &Path, out: &Path) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "propagate".into(),
        "--guidance".into(),
        s(&ph.join("guidance.nii")).into(),
        "--roi".into(),
        s(&ph.join("roi.nii")).into(),
        "--labels".into(),
        s(&ph.join("labels.tsv")).into(),
        "--out".into(),
        s(out).into(),
        "--annotation".into(),
    ];
    v.extend(annotation_args(ph));
    v
}

fn run_owned(args: &[String]) -> Output {
    run(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

#[test]
fn phantom_then_propagate_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let ph = make_phantom_dir(dir.path());
    for f in ["guidance.nii", "roi.nii", "truth.nii", "labels.tsv", "annotation_a.nii", "annotation_c.nii"] {
        assert!(ph.join(f).is_file(), "{f}");
    }

    let out = dir.path().join("run");
    let mut args = propagate_args(&ph, &out);
    args.push("--soft".into());
    let o = run_owned(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("hard.nii").is_file());
    assert!(out.join("prob_b.nii").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["labels"].as_array().unwrap().len(), 3);
    assert_eq!(report["beta"], 10000.0);

    let pa = nifti::read_intensity(out.join("prob_a.nii")).unwrap();
    let pb = nifti::read_intensity(out.join("prob_b.nii")).unwrap();
    let pc = nifti::read_intensity(out.join("prob_c.nii")).unwrap();
    for i in 0..pa.len() {
        let sum = pa.data()[i] + pb.data()[i] + pc.data()[i];
        assert!((sum - 1.0).abs() < 1e-5, "voxel {i}: {sum}");
    }

    let rep = dir.path().join("eval/dice.txt");
    let mut eval: Vec<String> = vec!["evaluate".into(), "--pred".into(), s(&out.join("hard.nii")).into()];
    for (flag, path) in
        [("--target", ph.join("truth.nii")), ("--labels", ph.join("labels.tsv")), ("--roi", ph.join("roi.nii"))]
    {
        eval.extend([flag.to_owned(), s(&path).to_owned()]);
    }
    eval.extend(["--out".to_owned(), s(&rep).to_owned(), "--annotation".to_owned()]);
    eval.extend(annotation_args(&ph));
    let o = run_owned(&eval);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    let overall: f64 = stdout.trim().strip_prefix("overall\t").unwrap().parse().unwrap();
    assert!(overall > 0.9, "{overall}");
    assert!(fs::read_to_string(&rep).unwrap().contains("overall"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rep.with_extension("json")).unwrap()).unwrap();
    assert!(json["excluded_voxels"].as_u64().unwrap() > 0);
}

#[test]
fn evaluate_identical_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let ph = make_phantom_dir(dir.path());
    let truth = ph.join("truth.nii");
    let o = run(&[
        "evaluate",
        "--pred",
        s(&truth),
        "--target",
        s(&truth),
        "--labels",
        s(&ph.join("labels.tsv")),
        "--roi",
        s(&ph.join("roi.nii")),
        "--out",
        s(&dir.path().join("r.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), "overall\t1.000000");
    assert!(dir.path().join("r.txt").is_file());
}

#[test]
fn evaluate_mismatched_dims_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ph = make_phantom_dir(dir.path());
    let other = dir.path().join("other.nii");
    nifti::write_volume(&Volume::filled(Geometry::with_dims([4, 4, 4]).unwrap(), 1u16), &other).unwrap();
    let o = run(&[
        "evaluate",
        "--pred",
        s(&other),
        "--target",
        s(&ph.join("truth.nii")),
        "--labels",
        s(&ph.join("labels.tsv")),
        "--roi",
        s(&ph.join("roi.nii")),
        "--out",
        s(&dir.path().join("r.txt")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_roi_is_usage_error() {
    let o = run(&["propagate", "--guidance", "g.nii", "--labels", "l.tsv", "--annotation", "a.nii", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--roi"));
}

#[test]
fn nonexistent_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let ph = make_phantom_dir(dir.path());
    let mut args = propagate_args(&ph, &dir.path().join("run"));
    args[2] = s(&dir.path().join("missing.nii")).into();
    let o = run_owned(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.nii"));
}

#[test]
fn seedless_island_with_error_policy_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::with_dims([8, 3, 3]).unwrap();
    let roi = Volume::from_fn(g, |x, _, _| !(3..=4).contains(&x));
    let guidance = Volume::filled(g, 0.0f64);
    let labels = LabelSet::from_pairs([(1, "a"), (2, "b")]).unwrap();
    let mut sets = vec![Vec::new(); g.len()];
    sets[g.index(0, 0, 0)] = vec![1];
    sets[g.index(2, 2, 2)] = vec![2];
    let ann = MultiLabelAnnotation::from_sets(g, labels.clone(), &sets).unwrap();
    nifti::write_volume(&roi, dir.path().join("roi.nii")).unwrap();
    nifti::write_volume(&guidance, dir.path().join("g.nii")).unwrap();
    fs::write(dir.path().join("labels.tsv"), labels.to_text()).unwrap();
    let masks = ann.to_mask_volumes();
    nifti::write_volume(&masks[0], dir.path().join("a.nii")).unwrap();
    nifti::write_volume(&masks[1], dir.path().join("b.nii")).unwrap();

    let p = |f: &str| dir.path().join(f).to_str().unwrap().to_owned();
    let base = [
        "propagate".to_owned(),
        "--guidance".into(),
        p("g.nii"),
        "--roi".into(),
        p("roi.nii"),
        "--labels".into(),
        p("labels.tsv"),
        "--annotation".into(),
        p("a.nii"),
        p("b.nii"),
        "--out".into(),
        p("out"),
    ];
    let mut args = base.to_vec();
    args.extend(["--policy".into(), "error".into()]);
    let o = run_owned(&args);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("component") && err.contains("no seed"), "{err}");

    let o = run_owned(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["seedless_components"], 1);
    assert_eq!(report["seedless_voxels"], 27);
}

#[test]
fn fuse_rules() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::with_dims([3, 1, 1]).unwrap();
    let write = |name: &str, v: Vec<u16>| {
        let p = dir.path().join(name);
        nifti::write_volume(&Volume::new(g, v).unwrap(), &p).unwrap();
        p
    };
    let a = write("a.nii", vec![1, 2, 3]);
    let b = write("b.nii", vec![2, 2, 1]);
    let c = write("c.nii", vec![3, 1, 2]);
    let d = write("d.nii", vec![1, 2, 2]);
    let roi = dir.path().join("roi.nii");
    nifti::write_volume(&Volume::filled(g, true), &roi).unwrap();

    let out = dir.path().join("f/fused.nii");
    let o = run(&["fuse", "--in", s(&a), s(&b), s(&c), s(&d), "--roi", s(&roi), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(nifti::read_labels(&out).unwrap().data(), &[1, 2, 2]);

    let same = dir.path().join("same.nii");
    let o = run(&["fuse", "--in", s(&a), s(&a), "--roi", s(&roi), "--out", s(&same)]);
    assert!(o.status.success());
    assert_eq!(fs::read(&same).unwrap(), fs::read(&a).unwrap());

    let o = run(&["fuse", "--in", s(&a), "--roi", s(&roi), "--out", s(&same)]);
    assert_eq!(o.status.code(), Some(2));

    let other = dir.path().join("other.nii");
    nifti::write_volume(&Volume::filled(Geometry::with_dims([2, 2, 1]).unwrap(), 1u16), &other).unwrap();
    let o = run(&["fuse", "--in", s(&a), s(&other), "--roi", s(&roi), "--out", s(&same)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn phantom_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, small_spec().to_json()).unwrap();
    let gen = |out: &str, seed: &str| {
        let o = run(&["phantom", "--spec", s(&spec), "--seed", seed, "--out", s(&dir.path().join(out))]);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    gen("x", "7");
    gen("y", "7");
    gen("z", "8");
    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();
    for f in ["guidance.nii", "roi.nii", "truth.nii", "annotation_a.nii", "annotation_b.nii", "annotation_c.nii"] {
        assert_eq!(read("x", f), read("y", f), "{f}");
    }
    assert_ne!(read("x", "guidance.nii"), read("z", "guidance.nii"));
}

#[test]
fn builtin_phantom_emits_thirteen_masks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t");
    let o = run(&["phantom", "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let masks = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("annotation_"))
        .count();
    assert_eq!(masks, 13);
    assert_eq!(LabelSet::from_file(out.join("labels.tsv")).unwrap().len(), 13);
}

#[test]
fn bad_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, "{\"dims\": [4, 4]}").unwrap();
    let o = run(&["phantom", "--spec", s(&spec), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn info_reports_header_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let g = Geometry::new([4, 2, 1], [0.5, 1.0, 2.0], [0.0; 3]).unwrap();
    let p = dir.path().join("l.nii");
    nifti::write_volume(&Volume::new(g, vec![0u16, 0, 3, 3, 3, 7, 7, 0]).unwrap(), &p).unwrap();
    let o = run(&["info", "--in", s(&p)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("dims\t[4, 2, 1]"), "{out}");
    assert!(out.contains("spacing\t[0.5, 1.0, 2.0]"), "{out}");
    assert!(out.contains("range\t0\t7"), "{out}");
    for line in ["0\t3", "3\t3", "7\t2"] {
        assert!(out.lines().any(|l| l == line), "{line} in {out}");
    }

    let bad = dir.path().join("bad.nii");
    let mut bytes = fs::read(&p).unwrap();
    bytes[344..348].copy_from_slice(b"nope");
    fs::write(&bad, bytes).unwrap();
    let o = run(&["info", "--in", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad magic"), "{}", stderr(&o));
}
