mod common;

use common::*;
use proptest::prelude::*;
use radar_fewshot::radar::io::{read_rdm, write_rdm};
use radar_fewshot::radar::{normalize, resize, MapMeta, RangeDopplerMap, RealMatrix};
use radar_fewshot::Error;

#[test]
fn transforms_match_naive_dft() {
    let err = fft_oracle(64, 3);
    assert!(err < 1e-6, "relative error {err:e}");
}

#[test]
fn single_scatterer_peaks_at_analytic_bins() {
    for (rb, db, want_r, want_d) in physics_oracle(4, 5) {
        assert!((rb as f64 - want_r.round()).abs() <= 1.0, "range bin {rb}, predicted {want_r:.2}");
        assert!((db as f64 - want_d.round()).abs() <= 1.0, "doppler bin {db}, predicted {want_d:.2}");
    }
}

#[test]
fn corrupted_magic_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame.rdm");
    let map = RangeDopplerMap {
        values: RealMatrix::from_vec(2, 3, vec![0.0, 0.5, 1.0, 0.25, 0.75, 0.125]).unwrap(),
        meta: MapMeta::default(),
    };
    write_rdm(&path, &map).unwrap();
    assert_eq!(read_rdm(&path).unwrap().values, map.values);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] = b'X';
    std::fs::write(&path, bytes).unwrap();
    match read_rdm(&path) {
        Err(e @ Error::Format { .. }) => assert!(e.to_string().contains("frame.rdm"), "{e}"),
        other => panic!("expected a format error, got {other:?}"),
    }
}

proptest! {
    #[test]
    fn normalized_maps_lie_in_unit_interval(v in prop::collection::vec(0.0f64..1e3, 12)) {
        prop_assume!(v.iter().any(|&x| x > 0.0));
        let n = normalize(&RealMatrix::from_vec(3, 4, v).unwrap()).unwrap();
        prop_assert!(n.data.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert_eq!(n.min(), 0.0);
    }

    #[test]
    fn resizing_keeps_constant_maps(c in 0.0f64..1.0, h in 1usize..20, w in 1usize..20) {
        let m = RealMatrix::from_vec(16, 12, vec![c; 192]).unwrap();
        let r = resize(&m, h, w).unwrap();
        prop_assert!(r.data.iter().all(|&x| (x - c).abs() < 1e-12));
    }
}
