use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use nnkit::model_io;
use nnkit::network::SequentialNetwork;
use nnkit::verification::{self, robustness_property, BabConfig, Engine, InputBox, Status};
use nnkit_ffi::*;

fn net() -> SequentialNetwork {
    SequentialNetwork::initialized("ffi", 2, &[6, 4], 3, true, 7)
}

fn load(n: &SequentialNetwork) -> *mut NnkitNetwork {
    let json = CString::new(model_io::to_json(n).unwrap()).unwrap();
    let mut h = ptr::null_mut();
    assert_eq!(unsafe { nnkit_network_from_json(json.as_ptr(), &mut h) }, NnkitStatus::Ok);
    h
}

fn last_error() -> String {
    let p = nnkit_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn forward_and_classify_match_library() {
    let n = net();
    let h = load(&n);
    let x = [0.3, 0.8];
    let mut y = [0.0; 3];
    unsafe {
        let (mut din, mut dout) = (0, 0);
        assert_eq!(nnkit_network_input_dim(h, &mut din), NnkitStatus::Ok);
        assert_eq!(nnkit_network_output_dim(h, &mut dout), NnkitStatus::Ok);
        assert_eq!((din, dout), (2, 3));
        assert_eq!(nnkit_network_forward(h, x.as_ptr(), 2, y.as_mut_ptr(), 3), NnkitStatus::Ok);
        assert_eq!(y.to_vec(), n.forward(&x).unwrap());
        let mut k = 99;
        assert_eq!(nnkit_network_classify(h, x.as_ptr(), 2, &mut k), NnkitStatus::Ok);
        assert_eq!(k, n.classify(&x).unwrap());

        assert_eq!(nnkit_network_forward(h, x.as_ptr(), 2, y.as_mut_ptr(), 2), NnkitStatus::BufferTooSmall);
        assert_eq!(nnkit_network_forward(h, x.as_ptr(), 1, y.as_mut_ptr(), 3), NnkitStatus::InvalidArgument);
        assert!(!last_error().is_empty());
        nnkit_network_free(h);
    }
}

#[test]
fn null_and_bad_inputs_report_errors() {
    unsafe {
        let mut h = ptr::null_mut();
        assert_eq!(nnkit_network_from_json(ptr::null(), &mut h), NnkitStatus::NullPointer);
        let bad = CString::new("{not json").unwrap();
        assert_eq!(nnkit_network_from_json(bad.as_ptr(), &mut h), NnkitStatus::Parse);
        assert!(h.is_null());
        let missing = CString::new("/nonexistent/dir/model.json").unwrap();
        assert_eq!(nnkit_network_load(missing.as_ptr(), &mut h), NnkitStatus::Io);
        assert!(last_error().contains("model.json"));
        let mut d = 0;
        assert_eq!(nnkit_network_input_dim(ptr::null(), &mut d), NnkitStatus::NullPointer);
        let mut p = ptr::null_mut();
        let junk = CString::new("(assert (<= Y_0 X_0))").unwrap();
        assert_eq!(nnkit_property_parse_smtlib(junk.as_ptr(), &mut p), NnkitStatus::Parse);
        nnkit_network_free(ptr::null_mut());
        nnkit_property_free(ptr::null_mut());
        nnkit_result_free(ptr::null_mut());
        nnkit_string_free(ptr::null_mut());
    }
    // a successful call clears the error
    let n = load(&net());
    assert!(nnkit_last_error().is_null());
    unsafe { nnkit_network_free(n) };
}

#[test]
fn save_and_load_round_trip() {
    let n = net();
    let h = load(&n);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(nnkit_network_save(h, path.as_ptr()), NnkitStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(nnkit_network_load(path.as_ptr(), &mut back), NnkitStatus::Ok);
        let x = [0.1, 0.7];
        let mut y = [0.0; 3];
        assert_eq!(nnkit_network_forward(back, x.as_ptr(), 2, y.as_mut_ptr(), 3), NnkitStatus::Ok);
        assert_eq!(y.to_vec(), n.forward(&x).unwrap());
        assert_eq!(model_io::load_model(dir.path().join("m.json")).unwrap(), n);
        nnkit_network_free(back);
        nnkit_network_free(h);
    }
}

#[test]
fn verify_matches_library_and_smtlib_round_trips() {
    let n = net();
    let h = load(&n);
    let x0 = [0.4, 0.6];
    let label = n.classify(&x0).unwrap();
    for (eps, engine) in [(0.0, NnkitEngine::Bab), (0.3, NnkitEngine::Bab), (0.05, NnkitEngine::Ibp)] {
        unsafe {
            let mut p = ptr::null_mut();
            assert_eq!(nnkit_property_robustness(x0.as_ptr(), 2, label, 3, eps, &mut p), NnkitStatus::Ok);
            let mut text = ptr::null_mut();
            assert_eq!(nnkit_property_to_smtlib(p, &mut text), NnkitStatus::Ok);
            let mut q = ptr::null_mut();
            assert_eq!(nnkit_property_parse_smtlib(text, &mut q), NnkitStatus::Ok);
            nnkit_string_free(text);

            let mut r = ptr::null_mut();
            assert_eq!(nnkit_verify(h, q, engine, 0.0, 0, 5, &mut r), NnkitStatus::Ok);
            let lib_prop = robustness_property(&x0, label, 3, eps, &InputBox::unit(2)).unwrap();
            let lib_engine = if engine == NnkitEngine::Ibp { Engine::Ibp } else { Engine::Bab };
            let cfg = BabConfig { seed: 5, ..Default::default() };
            let expect = verification::verify(&n, &lib_prop, lib_engine, &cfg).unwrap();

            let mut v = NnkitVerdict::Unknown;
            assert_eq!(nnkit_result_verdict(r, &mut v), NnkitStatus::Ok);
            let want = match expect.status {
                Status::Verified => NnkitVerdict::Verified,
                Status::Falsified => NnkitVerdict::Falsified,
                Status::Unknown => NnkitVerdict::Unknown,
            };
            assert_eq!(v, want);
            let mut nodes = 0;
            assert_eq!(nnkit_result_nodes(r, &mut nodes), NnkitStatus::Ok);
            assert_eq!(nodes, expect.stats.nodes);

            let (mut cx, mut cy, mut dj) = ([0.0; 2], [0.0; 3], 0usize);
            let st = nnkit_result_counterexample(r, cx.as_mut_ptr(), 2, cy.as_mut_ptr(), 3, &mut dj);
            match &expect.counterexample {
                Some(c) => {
                    assert_eq!(st, NnkitStatus::Ok);
                    assert_eq!(cx.to_vec(), c.input);
                    assert_eq!(cy.to_vec(), c.output);
                    assert_eq!(dj, c.disjunct);
                }
                None => assert_eq!(st, NnkitStatus::NotFound),
            }
            nnkit_result_free(r);
            nnkit_property_free(q);
            nnkit_property_free(p);
        }
    }
    unsafe { nnkit_network_free(h) };
}

#[test]
fn falsified_counterexample_is_copied() {
    // the wrong label on a point box is always falsified
    let n = net();
    let h = load(&n);
    let x0 = [0.2, 0.9];
    let wrong = (n.classify(&x0).unwrap() + 1) % 3;
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(nnkit_property_robustness(x0.as_ptr(), 2, wrong, 3, 0.0, &mut p), NnkitStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(nnkit_verify(h, p, NnkitEngine::Bab, 1.0, 100, 0, &mut r), NnkitStatus::Ok);
        let mut v = NnkitVerdict::Verified;
        nnkit_result_verdict(r, &mut v);
        assert_eq!(v, NnkitVerdict::Falsified);
        let (mut cx, mut cy) = ([0.0; 2], [0.0; 3]);
        assert_eq!(
            nnkit_result_counterexample(r, cx.as_mut_ptr(), 1, cy.as_mut_ptr(), 3, ptr::null_mut()),
            NnkitStatus::BufferTooSmall
        );
        assert_eq!(
            nnkit_result_counterexample(r, cx.as_mut_ptr(), 2, cy.as_mut_ptr(), 3, ptr::null_mut()),
            NnkitStatus::Ok
        );
        assert_eq!(cx, x0);
        assert_eq!(cy.to_vec(), n.forward(&x0).unwrap());
        nnkit_result_free(r);
        nnkit_property_free(p);
        nnkit_network_free(h);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nnkit.h")).unwrap();
    for sym in [
        "NNKIT_H",
        "typedef struct NnkitNetwork NnkitNetwork;",
        "NNKIT_STATUS_BUFFER_TOO_SMALL = 6",
        "nnkit_last_error(void)",
        "nnkit_network_forward(",
        "nnkit_property_parse_smtlib(",
        "nnkit_verify(",
        "nnkit_result_counterexample(",
    ] {
        assert!(header.contains(sym), "header lacks {sym}");
    }
}

const C_SMOKE: &str = r#"
#include <stdio.h>
#include "nnkit.h"
int main(int argc, char **argv) {
    NnkitNetwork *net = NULL;
    if (nnkit_network_load(argv[1], &net) != NNKIT_STATUS_OK) { fprintf(stderr, "%s\n", nnkit_last_error()); return 10; }
    double x[2] = {0.4, 0.6}, y[3];
    if (nnkit_network_forward(net, x, 2, y, 3) != NNKIT_STATUS_OK) return 11;
    size_t k = 0;
    if (nnkit_network_classify(net, x, 2, &k) != NNKIT_STATUS_OK) return 12;
    NnkitProperty *p = NULL;
    if (nnkit_property_robustness(x, 2, (k + 1) % 3, 3, 0.0, &p) != NNKIT_STATUS_OK) return 13;
    NnkitResult *r = NULL;
    if (nnkit_verify(net, p, NNKIT_ENGINE_BAB, 5.0, 0, 0, &r) != NNKIT_STATUS_OK) return 14;
    NnkitVerdict v;
    nnkit_result_verdict(r, &v);
    if (nnkit_network_forward(net, x, 2, y, 1) != NNKIT_STATUS_BUFFER_TOO_SMALL || !nnkit_last_error()) return 15;
    printf("%zu %d %.17g %.17g %.17g\n", k, (int)v, y[0], y[1], y[2]);
    nnkit_result_free(r);
    nnkit_property_free(p);
    nnkit_network_free(net);
    return 0;
}
"#;

#[test]
fn c_program_links_against_the_shared_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = profile_dir.join(format!("{}nnkit_ffi{}", std::env::consts::DLL_PREFIX, std::env::consts::DLL_SUFFIX));
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C smoke test: no C compiler or {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_SMOKE).unwrap();
    let model = dir.path().join("m.json");
    let n = net();
    model_io::save_model(&n, &model).unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg(format!("-I{}/include", env!("CARGO_MANIFEST_DIR")))
        .arg(format!("-L{}", profile_dir.display()))
        .arg("-lnnkit_ffi")
        .arg(format!("-Wl,-rpath,{}", profile_dir.display()))
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&bin).arg(&model).output().unwrap();
    assert!(out.status.success(), "smoke exited {:?}: {}", out.status, String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    let parts: Vec<&str> = line.split_whitespace().collect();
    let x = [0.4, 0.6];
    assert_eq!(parts[0].parse::<usize>().unwrap(), n.classify(&x).unwrap());
    assert_eq!(parts[1], "1");
    let y = n.forward(&x).unwrap();
    for i in 0..3 {
        assert_eq!(parts[2 + i].parse::<f64>().unwrap(), y[i]);
    }
}
