use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use erank::data_model::{write_embeddings, EmbeddingSet, LayerStrategy};
use erank_ffi::*;

fn last_error() -> String {
    let p = erank_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn spectrum_and_matrix_entry_points() {
    let sv = [76.35235595703125, 2.6761877219491637e-14, 1.1108339471383637e-15, 0.0];
    let mut r = 0.0;
    assert_eq!(unsafe { erank_effective_rank_from_spectrum(sv.as_ptr(), sv.len(), &mut r) }, ErankStatus::Ok);
    assert!((r - 1.0).abs() < 1e-9);

    // Two orthogonal rows of equal norm.
    let rows = [3.0, 0.0, 0.0, 0.0, 3.0, 0.0];
    assert_eq!(unsafe { erank_effective_rank(rows.as_ptr(), 2, 3, &mut r) }, ErankStatus::Ok);
    assert!((r - 2.0).abs() < 1e-12);

    let same = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
    let mut es = 0.0;
    assert_eq!(unsafe { erank_eigenscore(same.as_ptr(), 3, 2, 1e-3, &mut es) }, ErankStatus::Ok);
    assert!((es - 1e-3f64.ln()).abs() < 1e-9);

    assert_eq!(unsafe { erank_eigenscore(same.as_ptr(), 3, 2, 0.0, &mut es) }, ErankStatus::InvalidArgument);
    assert!(last_error().contains("alpha"));
}

#[test]
fn auroc_and_rouge() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut a = 0.0;
    assert_eq!(unsafe { erank_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut a) }, ErankStatus::Ok);
    assert_eq!(a, 0.75);

    let one_class = [1u8; 4];
    assert_eq!(unsafe { erank_auroc(scores.as_ptr(), one_class.as_ptr(), 4, &mut a) }, ErankStatus::InvalidArgument);
    assert!(last_error().contains("AUROC undefined"));

    let c = CString::new("Yuri Gagarin").unwrap();
    let r = CString::new("Gagarin").unwrap();
    let mut s = 0.0;
    assert_eq!(unsafe { erank_rouge_l(c.as_ptr(), r.as_ptr(), &mut s) }, ErankStatus::Ok);
    assert!((s - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn null_pointers_are_reported() {
    let mut r = 0.0;
    assert_eq!(unsafe { erank_effective_rank_from_spectrum(ptr::null(), 3, &mut r) }, ErankStatus::NullPointer);
    let sv = [1.0, 1.0];
    assert_eq!(
        unsafe { erank_effective_rank_from_spectrum(sv.as_ptr(), 2, ptr::null_mut()) },
        ErankStatus::NullPointer
    );
    assert!(last_error().contains("out_rank"));
    assert_eq!(unsafe { erank_rouge_l(ptr::null(), ptr::null(), &mut r) }, ErankStatus::NullPointer);
    unsafe {
        erank_store_free(ptr::null_mut());
        erank_set_free(ptr::null_mut());
    }
}

fn write_store(dir: &std::path::Path) -> std::path::PathBuf {
    let a = EmbeddingSet::from_rows(2, 1, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], LayerStrategy::M1).unwrap();
    let b = EmbeddingSet::from_rows(3, 1, &vec![vec![0.5f32, 0.5, 0.5]; 3], LayerStrategy::M1).unwrap();
    let mut buf = Vec::new();
    write_embeddings([("a", &a), ("b", &b)], &mut buf).unwrap();
    let path = dir.join("emb.bin");
    std::fs::write(&path, &buf).unwrap();
    path
}

#[test]
fn store_handles() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_store(dir.path());
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut store = ptr::null_mut();
    assert_eq!(unsafe { erank_store_open(cpath.as_ptr(), &mut store) }, ErankStatus::Ok);
    let mut len = 0;
    assert_eq!(unsafe { erank_store_len(store, &mut len) }, ErankStatus::Ok);
    assert_eq!(len, 2);

    let id = CString::new("a").unwrap();
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { erank_store_get(store, id.as_ptr(), &mut set) }, ErankStatus::Ok);
    let (mut m1, mut m2, mut n) = (0, 0, 0);
    assert_eq!(unsafe { erank_set_shape(set, &mut m1, &mut m2, &mut n) }, ErankStatus::Ok);
    assert_eq!((m1, m2, n), (2, 1, 3));
    let mut data = ptr::null();
    assert_eq!(unsafe { erank_set_data(set, &mut data) }, ErankStatus::Ok);
    assert_eq!(unsafe { std::slice::from_raw_parts(data, 6) }, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let mut r = 0.0;
    assert_eq!(unsafe { erank_set_effective_rank(set, &mut r) }, ErankStatus::Ok);
    assert!((r - 2.0).abs() < 1e-12);
    let mut es = 0.0;
    assert_eq!(unsafe { erank_set_eigenscore(set, 1e-3, &mut es) }, ErankStatus::Ok);
    assert!(es.is_finite());
    unsafe { erank_set_free(set) };

    let missing = CString::new("zzz").unwrap();
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { erank_store_get(store, missing.as_ptr(), &mut set) }, ErankStatus::NotFound);
    assert!(set.is_null());
    unsafe { erank_store_free(store) };
}

#[test]
fn truncated_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_store(dir.path());
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut store = ptr::null_mut();
    assert_eq!(unsafe { erank_store_open(cpath.as_ptr(), &mut store) }, ErankStatus::Corruption);
    assert!(store.is_null());

    let nowhere = CString::new(dir.path().join("absent.bin").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { erank_store_open(nowhere.as_ptr(), &mut store) }, ErankStatus::Io);
}

#[test]
fn header_compiles_as_c() {
    let header_dir = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        r#"#include "erank.h"
int main(void) {
    double sv[3] = {3.0, 2.0, 1.0};
    double r = 0.0;
    ErankStatus s = erank_effective_rank_from_spectrum(sv, 3, &r);
    ErankEmbeddingStore *store = NULL;
    (void)erank_store_open("x", &store);
    erank_store_free(store);
    return s == ERANK_STATUS_OK ? 0 : 1;
}
"#,
    )
    .unwrap();
    let status = match Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-c", "-I", header_dir])
        .arg(&src)
        .arg("-o")
        .arg(dir.path().join("use.o"))
        .status()
    {
        Ok(s) => s,
        Err(e) => {
            println!("skipping header check: no C compiler ({e})");
            return;
        }
    };
    assert!(status.success(), "generated header failed to compile");
}
