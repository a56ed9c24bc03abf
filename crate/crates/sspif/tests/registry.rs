use std::path::Path;

use sspif::methodfile::{load_method, save_method, MethodFile};
use sspif::registry::Registry;
use sspif::Error;
use sspif_core::certify::certify;
use sspif_core::methods;
use sspif_core::optimize::has_monotone_abscissas;
use sspif_core::order::residuals_up_to;
use sspif_core::tableau::{abscissas, to_canonical, to_spijker};

fn shipped() -> Registry {
    Registry::open(&Registry::default_dir()).unwrap()
}

#[test]
fn shipped_registry_has_the_expected_methods() {
    let reg = shipped();
    for name in [
        "forward-euler",
        "essprk33",
        "essprk-plus33",
        "essprk43",
        "tsrk-plus-2-2",
        "tsrk-plus-3-3",
        "tsrk-plus-3-4",
        "tsrk-plus-4-3",
        "tsrk-plus-4-4",
        "tsrk-plus-5-4",
    ] {
        assert!(reg.find(name).is_some(), "missing {name}");
    }
    assert!(reg.lmm("ssp-lmm-3-2").is_ok());
}

#[test]
fn base_methods_match_their_classical_coefficients() {
    let reg = shipped();
    assert_eq!(reg.find("essprk33").unwrap().method, methods::essprk33());
    assert_eq!(reg.find("essprk-plus-3-3").unwrap().method, methods::essprk_plus33());
    assert_eq!(reg.find("ESSPRK43").unwrap().method, methods::essprk43());
}

#[test]
fn stored_coefficients_match_certification_and_order() {
    for f in shipped().methods() {
        let c = certify(&f.method).unwrap();
        let stored = f.certified_c.expect("shipped methods carry certified_C");
        assert!((c - stored).abs() <= 1e-8, "{}: stored {stored}, certified {c}", f.name);
        let report = residuals_up_to(&f.method, f.order).unwrap();
        assert!(report.max_residual() <= 1e-10, "{}: residual {:e}", f.name, report.max_residual());
    }
}

#[test]
fn canonical_form_at_certified_coefficient_is_a_convex_combination() {
    for f in shipped().methods() {
        let c = certify(&f.method).unwrap();
        let form = to_canonical(&f.method, c).unwrap();
        assert!(form.row_sum_defect() <= 1e-12, "{}: {:e}", f.name, form.row_sum_defect());
        assert!(form.min_entry() >= -1e-12, "{}: {:e}", f.name, form.min_entry());
        assert_eq!(to_spijker(&f.method).to_coefficients().unwrap(), f.method);
    }
}

#[test]
fn optimized_methods_have_non_decreasing_abscissas() {
    for f in shipped().methods().filter(|f| f.name.starts_with("tsrk-plus")) {
        let c = abscissas(&f.method).into_inner();
        assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{}: {c:?}", f.name);
        assert!(has_monotone_abscissas(&f.method));
        assert!(f.provenance.is_some(), "{} lacks seed/starts", f.name);
    }
}

#[test]
fn save_load_is_bit_identical_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    for f in shipped().methods() {
        let path = dir.path().join("m.tsrk");
        save_method(f, &path).unwrap();
        assert_eq!(&load_method(&path).unwrap(), f);
    }
}

#[test]
fn malformed_files_report_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.tsrk");
    let text = MethodFile::new("fe", 1, methods::forward_euler())
        .to_text()
        .replace("A = 0.0000000000000000e0", "A = 5.0000000000000000e-1");
    std::fs::write(&path, text).unwrap();
    match load_method(&path).unwrap_err() {
        e @ Error::Parse { .. } => {
            let msg = e.to_string();
            assert!(msg.contains("bad.tsrk:7"), "{msg}");
            assert_eq!(e.exit_code(), 3);
        }
        e => panic!("{e}"),
    }
    assert!(matches!(load_method(Path::new("/nonexistent/x.tsrk")), Err(Error::Io { .. })));
}

#[test]
fn insert_replaces_by_normalized_name() {
    let dir = tempfile::tempdir().unwrap();
    let mut reg = Registry::open(dir.path()).unwrap();
    reg.insert(MethodFile::new("eSSPRK(3,3)", 3, methods::essprk33())).unwrap();
    reg.insert(MethodFile::new("essprk-3-3", 3, methods::essprk33())).unwrap();
    let reopened = Registry::open(dir.path()).unwrap();
    assert_eq!(reopened.methods().count(), 1);
    assert_eq!(reopened.resolve("ESSPRK33").unwrap().name, "essprk-3-3");
    assert!(matches!(reopened.resolve("nope"), Err(Error::Usage(_))));
}
