//! Loading configuration and manifests from disk.

use std::fs;

use salience::models::{Registry, RegistryError};
use salience::params::{
    describe, load_global_config, load_manifest, resolve, GlobalConfig, ParamError, ParamMap, Scalar,
};

#[test]
fn global_config_file_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load_global_config(&tmp.path().join("missing.json")), Err(ParamError::Io { .. })));

    let broken = tmp.path().join("broken.json");
    fs::write(&broken, "{ \"parameters\": ").unwrap();
    assert!(matches!(load_global_config(&broken), Err(ParamError::Parse { .. })));

    let wrong = tmp.path().join("wrong.json");
    fs::write(&wrong, r#"{"parameters": {"smooth_size": {"default": "nine"}}}"#).unwrap();
    assert!(matches!(load_global_config(&wrong), Err(ParamError::Schema(_))));
}

#[test]
fn shipped_config_matches_the_builtin() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/config.json");
    assert_eq!(&load_global_config(path.as_ref()).unwrap(), &GlobalConfig::builtin());
}

#[test]
fn shipped_manifests_load() {
    for name in ["cG", "IMSIG", "uniform"] {
        let path = format!("{}/models/{name}/manifest.json", env!("CARGO_MANIFEST_DIR"));
        let m = load_manifest(path.as_ref()).unwrap();
        assert_eq!(m.name, name);
    }
}

#[test]
fn manifest_file_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(load_manifest(&tmp.path().join("none.json")), Err(ParamError::Io { .. })));
    let path = tmp.path().join("m.json");
    fs::write(&path, r#"{"name": "X", "long_name": "x", "citation": "c", "model_type": "native", "bogus": 1}"#)
        .unwrap();
    assert!(matches!(load_manifest(&path), Err(ParamError::Schema(_))));
}

#[test]
fn model_parameters_may_not_shadow_globals() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.json");
    fs::write(
        &path,
        r#"{"name": "X", "long_name": "x", "citation": "c", "model_type": "external",
            "launch": {"command": ["true"]},
            "parameters": {"smooth_std": {"default": 1.0, "description": "d", "valid_values": "any",
                                          "constraint": {"kind": "float_range"}}}}"#,
    )
    .unwrap();
    let dir = tmp.path().join("models/X");
    fs::create_dir_all(&dir).unwrap();
    fs::rename(&path, dir.join("manifest.json")).unwrap();
    let err = Registry::load(Some(&tmp.path().join("models")), tmp.path()).unwrap_err();
    match err {
        RegistryError::Manifest { source: ParamError::NameCollision { name, .. }, .. } => {
            assert_eq!(name, "smooth_std")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_run_parameters_are_rejected() {
    let reg = Registry::builtin("/nonexistent");
    let run: ParamMap = [("smooth_sizee".to_string(), Scalar::Int(3))].into_iter().collect();
    let err = resolve(reg.get("cG").unwrap().manifest(), &GlobalConfig::builtin(), &ParamMap::new(), &run).unwrap_err();
    assert!(matches!(err, ParamError::UnknownParameter { ref name, .. } if name == "smooth_sizee"), "{err:?}");
}

#[test]
fn describe_renders_tables() {
    let reg = Registry::builtin("/nonexistent");
    let global = GlobalConfig::builtin();
    let text = describe("global", &global, &reg).unwrap();
    let header = text.lines().find(|l| l.starts_with("Parameter")).unwrap();
    for col in ["Default", "Valid Values", "Description"] {
        assert!(header.contains(col));
    }
    assert!(text.lines().any(|l| l.starts_with("smooth_size") && l.contains('9')));

    let text = describe("cG", &global, &reg).unwrap();
    assert!(text.starts_with("cG - "));
    assert!(text.contains("prior_prop"));
    let text = describe("uniform", &global, &reg).unwrap();
    assert!(text.contains("No model-specific parameters."));
    assert!(matches!(describe("nope", &global, &reg), Err(RegistryError::UnknownModel(_))));
}
