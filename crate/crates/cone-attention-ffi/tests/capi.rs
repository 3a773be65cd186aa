//! Exercises the C ABI from Rust and, when a C compiler is present,
//! compiles and runs a real C client against the generated header and
//! the static library.

use std::ffi::{CStr, CString};

use cone_attention::attention::{attend, pairwise_logits, AttentionBatch};
use cone_attention::kernels::{KernelConfig, KernelKind};
use cone_attention::matrix::Matrix;
use cone_attention_ffi::*;

#[test]
fn logit_matrix_matches_core_bitwise() {
    let json = CString::new(r#"{"kernel": "penumbral", "gamma": 2.0}"#).unwrap();
    let config = unsafe { ca_config_from_json(json.as_ptr()) };
    assert!(!config.is_null());

    let (n, m, d) = (3usize, 4, 3);
    let q: Vec<f64> = (0..n * d).map(|i| (i as f64 * 0.37).sin()).collect();
    let k: Vec<f64> = (0..m * d).map(|i| (i as f64 * 0.21).cos() * 0.8).collect();
    let mut out = vec![0.0; n * m];
    let status = unsafe {
        ca_logit_matrix(config, q.as_ptr(), n, k.as_ptr(), m, d, out.as_mut_ptr())
    };
    assert_eq!(status, CaStatus::Ok);

    let mut cfg = KernelConfig::new(KernelKind::Penumbral);
    cfg.gamma = 2.0;
    let batch = AttentionBatch::new(
        Matrix::from_vec(n, d, q).unwrap(),
        Matrix::from_vec(m, d, k).unwrap(),
        Matrix::zeros(m, 1),
        None,
    )
    .unwrap();
    let sim = pairwise_logits(&batch, &cfg).unwrap();
    assert_eq!(out, sim.logits.data());
    unsafe { ca_config_free(config) };
}

#[test]
fn attend_with_mask_and_heads_matches_core() {
    let json = CString::new(r#"{"kernel": "dot", "heads": 2}"#).unwrap();
    let config = unsafe { ca_config_from_json(json.as_ptr()) };
    assert!(!config.is_null());

    let (n, m, d, dv) = (2usize, 3, 4, 2);
    let q: Vec<f64> = (0..n * d).map(|i| (i as f64 * 0.11).sin()).collect();
    let k: Vec<f64> = (0..m * d).map(|i| (i as f64 * 0.29).cos()).collect();
    let v: Vec<f64> = (0..m * dv).map(|i| i as f64 * 0.5).collect();
    let mask: Vec<u8> = vec![1, 0, 1, 1, 1, 1];
    let mut out = vec![0.0; n * dv];
    let status = unsafe {
        ca_attend(
            config,
            q.as_ptr(),
            n,
            k.as_ptr(),
            m,
            d,
            v.as_ptr(),
            dv,
            mask.as_ptr(),
            out.as_mut_ptr(),
        )
    };
    assert_eq!(status, CaStatus::Ok);

    let mut cfg = KernelConfig::new(KernelKind::Dot);
    cfg.heads = 2;
    let batch = AttentionBatch::new(
        Matrix::from_vec(n, d, q).unwrap(),
        Matrix::from_vec(m, d, k).unwrap(),
        Matrix::from_vec(m, dv, v).unwrap(),
        Some(mask.iter().map(|&b| b != 0).collect()),
    )
    .unwrap();
    let expect = cone_attention::attention::multi_head(&batch, &cfg, 2).unwrap();
    assert_eq!(out, expect.data());
    unsafe { ca_config_free(config) };
}

#[test]
fn all_masked_row_is_an_error_with_message() {
    let json = CString::new(r#"{"kernel": "dot"}"#).unwrap();
    let config = unsafe { ca_config_from_json(json.as_ptr()) };
    let q = [0.0f64; 2];
    let k = [0.0f64; 4];
    let v = [0.0f64; 2];
    let mask = [0u8, 0];
    let mut out = [0.0f64; 1];
    let status = unsafe {
        ca_attend(config, q.as_ptr(), 1, k.as_ptr(), 2, 2, v.as_ptr(), 1, mask.as_ptr(), out.as_mut_ptr())
    };
    assert_eq!(status, CaStatus::InvalidArgument);
    let msg = unsafe { CStr::from_ptr(ca_last_error_message()) }.to_string_lossy();
    assert!(msg.contains("row 0"), "message: {msg}");

    let status = unsafe { ca_config_set_light_height(config, -2.0) };
    assert_eq!(status, CaStatus::InvalidArgument);
    unsafe { ca_config_free(config) };
}

#[test]
fn gradient_export_matches_core() {
    let name = CString::new("umbral").unwrap();
    let config = unsafe { ca_config_new(name.as_ptr()) };
    let q = [0.3, -0.2, 0.4];
    let k = [-0.1, 0.5, 0.2];
    let mut gq = [0.0f64; 3];
    let mut gk = [0.0f64; 3];
    let mut nonsmooth = 2u8;
    let status = unsafe {
        ca_logit_grad(config, q.as_ptr(), k.as_ptr(), 3, gq.as_mut_ptr(), gk.as_mut_ptr(), &mut nonsmooth)
    };
    assert_eq!(status, CaStatus::Ok);
    let cfg = KernelConfig::new(KernelKind::Umbral);
    let expect = cone_attention::gradients::kernel_grad(&q, &k, &cfg).unwrap();
    assert_eq!(gq.to_vec(), expect.grad_u);
    assert_eq!(gk.to_vec(), expect.grad_v);
    assert_eq!(nonsmooth != 0, expect.nonsmooth);
    unsafe { ca_config_free(config) };
}

#[test]
fn version_string_is_populated() {
    let version = unsafe { CStr::from_ptr(ca_version()) }.to_string_lossy();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}

/// Compiles tests/smoke.c against the generated header and the freshly
/// built static library, then runs it.
#[test]
fn c_client_compiles_and_runs() {
    let manifest = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    assert!(header_dir.join("cone_attention.h").exists(), "header not generated");

    let Some(compiler) = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok_and(|o| o.status.success())
        })
    else {
        panic!("no C compiler available to exercise the header");
    };

    // the staticlib lands next to this test binary's deps directory
    let mut static_lib = None;
    if let Ok(exe) = std::env::current_exe() {
        for dir in exe.ancestors().skip(1) {
            let candidate = dir.join("libcone_attention_ffi.a");
            if candidate.exists() {
                static_lib = Some(candidate);
                break;
            }
        }
    }
    let static_lib = static_lib.expect("libcone_attention_ffi.a not found near test binary");

    let out_dir = std::env::temp_dir().join(format!("coneattn-smoke-{}", std::process::id()));
    std::fs::create_dir_all(&out_dir).unwrap();
    let exe = out_dir.join("smoke");
    let status = std::process::Command::new(compiler)
        .arg(manifest.join("tests/smoke.c"))
        .arg(&static_lib)
        .arg(format!("-I{}", header_dir.display()))
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("compile smoke.c");
    assert!(status.success(), "C compilation failed");

    let run = std::process::Command::new(&exe).output().expect("run smoke");
    assert!(
        run.status.success(),
        "smoke test failed: {}",
        String::from_utf8_lossy(&run.stdout)
    );
    std::fs::remove_dir_all(&out_dir).ok();
}
