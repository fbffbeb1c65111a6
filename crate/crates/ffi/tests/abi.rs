use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use glyphspot::encoder::{EncoderArch, EncoderModel};
use glyphspot::pipeline::{model_to_bytes, save_model, spot, ClassifierModel, SpotConfig, SpotReport};
use glyphspot::raster::{save_png, synth_page, GrayImage, SynthConfig};
use glyphspot_ffi::*;

fn model() -> ClassifierModel {
    ClassifierModel::Encoder(EncoderModel::init(EncoderArch::default(), 3).unwrap())
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(gs_last_error()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn spot_matches_native_call() {
    let model = model();
    let bytes = model_to_bytes(&model);
    let page = synth_page(&SynthConfig::default(), 11).unwrap();
    let gray = page.image.to_u8();
    let native: SpotReport = {
        let reloaded = glyphspot::pipeline::model_from_bytes(&bytes).unwrap();
        let id = glyphspot::pipeline::model_id(&reloaded);
        let img = GrayImage::from_u8(page.image.width(), page.image.height(), &gray).unwrap();
        spot(&img, "p1", &reloaded, &id, &SpotConfig::default()).unwrap()
    };
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(gs_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut m), GsStatus::Ok);
        assert_eq!(CStr::from_ptr(gs_model_id(m)).to_str().unwrap(), native.model);
        let mut img = ptr::null_mut();
        let (w, h) = (page.image.width() as u32, page.image.height() as u32);
        assert_eq!(gs_image_from_gray8(gray.as_ptr(), w, h, &mut img), GsStatus::Ok);
        let page_id = CString::new("p1").unwrap();
        let mut report = ptr::null_mut();
        assert_eq!(gs_spot(m, img, page_id.as_ptr(), &mut report), GsStatus::Ok);
        assert_eq!(last_error(), "");

        assert_eq!(gs_report_accepted_count(report), native.accepted.len());
        assert_eq!(gs_report_rejected_count(report), native.rejected.len());
        for (i, b) in native.accepted.iter().enumerate() {
            let mut out = GsBox {
                x: 0,
                y: 0,
                width: 0,
                height: 0,
                score: 0.0,
            };
            assert_eq!(gs_report_accepted(report, i, &mut out), GsStatus::Ok);
            assert_eq!((out.x as usize, out.y as usize), (b.bbox.x, b.bbox.y));
            assert_eq!((out.width as usize, out.height as usize), (b.bbox.w, b.bbox.h));
            assert_eq!(out.score, b.score);
        }
        let json = CStr::from_ptr(gs_report_json(report)).to_str().unwrap();
        assert_eq!(json, serde_json::to_string(&native).unwrap());

        let mut out = GsBox {
            x: 0,
            y: 0,
            width: 0,
            height: 0,
            score: 0.0,
        };
        let n = native.rejected.len();
        assert_eq!(gs_report_rejected(report, n, &mut out), GsStatus::OutOfRange);
        assert!(last_error().contains("out of range"));

        gs_report_free(report);
        gs_image_free(img);
        gs_model_free(m);
    }
}

#[test]
fn load_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.gsm");
    save_model(&model(), &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    unsafe {
        let mut m = ptr::null_mut();
        let missing = CString::new(dir.path().join("none.gsm").to_str().unwrap()).unwrap();
        assert_eq!(gs_model_load(missing.as_ptr(), &mut m), GsStatus::Io);
        assert!(m.is_null());
        assert!(last_error().contains("none.gsm"));

        let good = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(gs_model_load(good.as_ptr(), &mut m), GsStatus::Ok);
        gs_model_free(m);

        let at = bytes.len() - 10;
        bytes[at] ^= 0x01;
        assert_eq!(
            gs_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut m),
            GsStatus::Checksum
        );
        let junk = b"not a model";
        assert_eq!(
            gs_model_from_bytes(junk.as_ptr(), junk.len(), &mut m),
            GsStatus::ModelFormat
        );
        assert_eq!(gs_model_load(ptr::null(), &mut m), GsStatus::NullArgument);
        assert_eq!(gs_model_load(good.as_ptr(), ptr::null_mut()), GsStatus::NullArgument);
    }
}

#[test]
fn image_errors_and_null_handles() {
    unsafe {
        let mut img = ptr::null_mut();
        let px = [0u8; 4];
        assert_eq!(
            gs_image_from_gray8(px.as_ptr(), 0, 4, &mut img),
            GsStatus::InvalidArgument
        );
        assert_eq!(gs_image_from_gray8(ptr::null(), 2, 2, &mut img), GsStatus::NullArgument);
        let mut report = ptr::null_mut();
        assert_eq!(
            gs_spot(ptr::null(), ptr::null(), ptr::null(), &mut report),
            GsStatus::NullArgument
        );
        assert_eq!(gs_report_accepted_count(ptr::null()), 0);
        assert!(gs_report_json(ptr::null()).is_null());
        assert!(gs_model_id(ptr::null()).is_null());
        gs_model_free(ptr::null_mut());
        gs_image_free(ptr::null_mut());
        gs_report_free(ptr::null_mut());
        assert_eq!(
            CStr::from_ptr(gs_version()).to_str().unwrap(),
            env!("CARGO_PKG_VERSION")
        );
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/glyphspot.h")).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 14, "{exports:?}");
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "header lacks {name}");
    }
    assert!(header.contains("typedef struct GsModel GsModel;"));
    assert!(header.contains("GS_STATUS_CHECKSUM = 6"));
}

/// Compiles a small C program against the header and static library.
#[test]
fn c_program_links_and_runs() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = Path::new(env!("CARGO_TARGET_TMPDIR"));
    let profile_dir = tmp
        .parent()
        .unwrap()
        .join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libglyphspot_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("m.gsm");
    save_model(&model(), &model_path).unwrap();
    let page_path = dir.path().join("page.png");
    save_png(&synth_page(&SynthConfig::default(), 4).unwrap().image, &page_path).unwrap();

    let c_src = dir.path().join("smoke.c");
    std::fs::write(
        &c_src,
        r#"#include <stdio.h>
#include "glyphspot.h"
int main(int argc, char **argv) {
    GsModel *m = NULL; GsImage *img = NULL; GsReport *r = NULL;
    if (gs_model_load(argv[1], &m) != GS_STATUS_OK) { fprintf(stderr, "%s\n", gs_last_error()); return 1; }
    if (gs_image_load(argv[2], &img) != GS_STATUS_OK) { fprintf(stderr, "%s\n", gs_last_error()); return 2; }
    if (gs_spot(m, img, "page", &r) != GS_STATUS_OK) { fprintf(stderr, "%s\n", gs_last_error()); return 3; }
    size_t n = gs_report_accepted_count(r) + gs_report_rejected_count(r);
    GsBox b;
    if (gs_report_rejected(r, 100000, &b) != GS_STATUS_OUT_OF_RANGE) return 4;
    printf("%s %zu\n", gs_model_id(m), n);
    gs_report_free(r); gs_image_free(img); gs_model_free(m);
    return n > 0 ? 0 : 5;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(cc)
        .arg(&c_src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(&model_path).arg(&page_path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("encoder-"));
}
