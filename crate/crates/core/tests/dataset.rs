//! Analytic scenes, the on-disk layout and the loader.

use std::fs;

use fewtensorf::dataset::{
    load_scene, load_split, make_analytic_scene, render_field, AnalyticField, AnalyticSceneConfig, CameraModel,
    LoadOptions, SceneKind, Split,
};
use fewtensorf::error::Error;

fn small(kind: SceneKind) -> AnalyticSceneConfig {
    AnalyticSceneConfig {
        kind,
        width: 24,
        height: 20,
        n_train: 3,
        n_test: 2,
        samples_per_ray: 256,
        ..AnalyticSceneConfig::default()
    }
}

fn front_camera(w: usize) -> CameraModel {
    CameraModel::look_at([0.0, -4.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], w, w, 0.69).unwrap()
}

#[test]
fn center_ray_through_sphere_is_opaque() {
    let field = AnalyticField::new(SceneKind::Sphere, 50.0);
    let cam = front_camera(21);
    let white = render_field(&field, &cam, 512, [1.0; 3], 0.0, 100.0);
    let black = render_field(&field, &cam, 512, [0.0; 3], 0.0, 100.0);
    let c = 10 * 21 + 10;
    // The background shows through with weight 1 - opacity.
    for k in 0..3 {
        let transmittance = white[c][k] - black[c][k];
        assert!(transmittance.abs() < 1e-6, "transmittance {transmittance}");
    }
    // A corner ray misses everything.
    assert_eq!(white[0], [1.0; 3]);
    assert_eq!(black[0], [0.0; 3]);
}

#[test]
fn zero_density_renders_background() {
    let field = AnalyticField::new(SceneKind::SphereAndBoxes, 0.0);
    let bg = [0.1, 0.7, 0.3];
    let img = render_field(&field, &front_camera(16), 64, bg, 0.0, 100.0);
    assert!(img.iter().all(|&p| p == bg));
}

#[test]
fn generation_is_seeded() {
    let a = make_analytic_scene(&small(SceneKind::SphereAndBoxes)).unwrap();
    let b = make_analytic_scene(&small(SceneKind::SphereAndBoxes)).unwrap();
    assert_eq!(a, b);
    let c = make_analytic_scene(&AnalyticSceneConfig {
        seed: 1,
        ..small(SceneKind::SphereAndBoxes)
    })
    .unwrap();
    assert_ne!(a.train[0].camera, c.train[0].camera);

    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(da.path()).unwrap();
    b.write(db.path()).unwrap();
    for rel in ["transforms_train.json", "transforms_test.json", "train/r_000.png", "test/r_001.png"] {
        assert_eq!(fs::read(da.path().join(rel)).unwrap(), fs::read(db.path().join(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn written_scene_loads_back_and_rerenders() {
    let scene = make_analytic_scene(&small(SceneKind::SphereAndBoxes)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    scene.write(dir.path()).unwrap();
    let loaded = load_scene(dir.path(), &LoadOptions::default()).unwrap();
    assert_eq!(loaded.train.len(), 3);
    assert_eq!(loaded.test.len(), 2);
    assert!(loaded.val.is_empty());
    for (orig, back) in scene.train.iter().chain(&scene.test).zip(loaded.train.iter().chain(&loaded.test)) {
        assert_eq!(orig.camera, back.camera);
        let fresh = render_field(&scene.field, &back.camera, 256, [1.0; 3], 0.0, 100.0);
        for (p, q) in fresh.iter().zip(&back.rgb) {
            for k in 0..3 {
                assert!((p[k] - q[k] as f64).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn downscale_box_filters() {
    let scene = make_analytic_scene(&small(SceneKind::Boxes)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    scene.write(dir.path()).unwrap();
    let opts = LoadOptions {
        downscale: 2,
        ..LoadOptions::default()
    };
    let half = load_split(dir.path(), Split::Train, &opts).unwrap().unwrap();
    let full = &scene.train[0];
    assert_eq!((half[0].camera.width, half[0].camera.height), (12, 10));
    let avg = |u: usize, v: usize, k: usize| {
        (full.pixel(2 * u, 2 * v)[k]
            + full.pixel(2 * u + 1, 2 * v)[k]
            + full.pixel(2 * u, 2 * v + 1)[k]
            + full.pixel(2 * u + 1, 2 * v + 1)[k])
            / 4.0
    };
    for (u, v) in [(0, 0), (5, 4), (11, 9)] {
        for k in 0..3 {
            assert!((half[0].pixel(u, v)[k] - avg(u, v, k)).abs() < 1e-4);
        }
    }
}

#[test]
fn generated_rays_have_unit_directions() {
    let scene = make_analytic_scene(&small(SceneKind::Sphere)).unwrap();
    for img in &scene.train {
        for r in img.camera.all_rays::<f64>(0.0, 10.0) {
            let n = (r.direction[0].powi(2) + r.direction[1].powi(2) + r.direction[2].powi(2)).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_and_broken_inputs_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_scene(dir.path(), &LoadOptions::default()), Err(Error::Dataset { .. })));
    assert!(load_split(dir.path(), Split::Val, &LoadOptions::default()).unwrap().is_none());

    let scene = make_analytic_scene(&small(SceneKind::Sphere)).unwrap();
    scene.write(dir.path()).unwrap();
    let victim = dir.path().join("train/r_001.png");
    fs::remove_file(&victim).unwrap();
    match load_scene(dir.path(), &LoadOptions::default()) {
        Err(Error::Dataset { path, .. }) => assert_eq!(path, victim),
        other => panic!("expected a dataset error, got {other:?}"),
    }

    fs::write(dir.path().join("transforms_train.json"), "{ not json").unwrap();
    match load_scene(dir.path(), &LoadOptions::default()) {
        Err(Error::Dataset { path, .. }) => assert!(path.ends_with("transforms_train.json")),
        other => panic!("expected a dataset error, got {other:?}"),
    }
}

#[test]
fn empty_frame_list_loads_as_empty_split() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("transforms_train.json"),
        r#"{"camera_angle_x": 0.69, "frames": []}"#,
    )
    .unwrap();
    let scene = load_scene(dir.path(), &LoadOptions::default()).unwrap();
    assert!(scene.train.is_empty());
}
