use distill_harness::bundle::{read_frame_dir, write_atomic, write_frame};
use distill_harness::*;

fn scene() -> GeneratedScene {
    let spec = sample_scene(
        DistractorTaxonomy {
            kind: TaxonomyKind::Semantic,
            count: 6,
        },
        17,
        &SceneLayout::default(),
    )
    .unwrap();
    generate_scene(&spec).unwrap()
}

#[test]
fn bundle_round_trips_frames_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    write_bundle(dir.path(), &s).unwrap();
    assert!(bundle::is_bundle(dir.path()));
    let b = read_bundle(dir.path()).unwrap();
    assert_eq!(b.spec, s.spec);
    assert_eq!(b.frames, s.frames);
    assert_eq!(b.robot_masks, s.robot_masks);
    assert_eq!(b.background.as_ref(), Some(&s.background));
    assert_eq!(b.truth(), s.truth());
    for (i, o) in s.spec.objects.iter().enumerate() {
        for t in 0..s.frame_count() {
            assert_eq!(b.object_masks[&o.id][t], s.visible(i, t));
        }
    }
}

#[test]
fn reloaded_spec_renders_identical_frames() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    write_bundle(dir.path(), &s).unwrap();
    let again = generate_scene(&read_bundle(dir.path()).unwrap().spec).unwrap();
    assert_eq!(again.frames, s.frames);
}

#[test]
fn missing_ground_truth_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    write_bundle(dir.path(), &s).unwrap();
    std::fs::remove_file(dir.path().join("gt").join("robot_0003.rle.json")).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert!(err.to_string().contains("robot_0003"), "{err}");
}

#[test]
fn frame_dir_orders_by_number_and_reads_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let s = scene();
    for t in [10u64, 2, 0] {
        write_frame(dir.path(), t, &s.frames[t as usize % s.frame_count()]).unwrap();
        let rle = s.robot_masks[t as usize % s.frame_count()].to_rle();
        write_atomic(
            &dir.path().join(format!("{t:04}.robot.rle.json")),
            rle.to_json().as_bytes(),
        )
        .unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
    let frames = read_frame_dir(dir.path()).unwrap();
    let steps: Vec<u64> = frames.iter().map(|f| f.timestep).collect();
    assert_eq!(steps, [0, 2, 10]);
    assert_eq!(frames[1].observation, s.frames[2]);
    assert_eq!(frames[1].robot_mask, s.robot_masks[2]);
}

#[test]
fn frame_without_sidecar_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_frame(dir.path(), 0, &scene().frames[0]).unwrap();
    assert!(read_frame_dir(dir.path()).is_err());
}

#[test]
fn atomic_write_leaves_no_temp_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out").join("a.json");
    write_atomic(&path, b"{}").unwrap();
    write_atomic(&path, b"[]").unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), b"[]");
    let names: Vec<_> = std::fs::read_dir(path.parent().unwrap())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 1);
}
