use std::path::PathBuf;

use mechbio_core::io::Config;

fn defaults_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/defaults.cfg")
}

#[test]
fn shipped_defaults_match_the_built_in_defaults() {
    let c = Config::load(&defaults_path()).unwrap();
    assert_eq!(c, Config::default());
    assert_eq!(c.biology.a1, 0.015);
    assert_eq!(c.mechanics.inv_m, 68.9);
}

#[test]
fn load_save_load_is_a_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let c = Config::load(&defaults_path()).unwrap();
    let p = dir.path().join("saved.cfg");
    c.save(&p).unwrap();
    let again = Config::load(&p).unwrap();
    assert_eq!(again, c);
    let q = dir.path().join("saved2.cfg");
    again.save(&q).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
}

#[test]
fn bad_poisson_ratio_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "[mechanics]\nnu = 0.6\n").unwrap();
    let e = Config::load(&p).unwrap_err();
    assert!(e.is_validation());
    assert!(e.to_string().contains("mechanics.nu"), "{e}");
}
