use dtwin::model::{
    embedding_distance, l2_normalize, DistanceError, DistanceMetric, EmbeddingKind, EmbeddingVector,
};
use dtwin::source_prep::{build_mask, FaceContour, SourcePrepError, SourceSelection};
use proptest::prelude::*;

fn vector(values: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector::zero_padded(EmbeddingKind::Expression, &values).unwrap()
}

fn nonzero_values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 16)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn distances_are_symmetric_and_bounded(a in nonzero_values(), b in nonzero_values()) {
        let (a, b) = (vector(a), vector(b));
        for m in DistanceMetric::ALL {
            let ab = embedding_distance(&a, &b, m).unwrap();
            let ba = embedding_distance(&b, &a, m).unwrap();
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ab >= 0.0);
            prop_assert!(embedding_distance(&a, &a, m).unwrap().abs() <= 1e-12);
        }
        let c = embedding_distance(&a, &b, DistanceMetric::Cosine).unwrap();
        prop_assert!((0.0..=2.0).contains(&c));
    }

    #[test]
    fn cosine_ignores_positive_scale(a in nonzero_values(), b in nonzero_values(), s in 1e-3f64..1e3) {
        let scaled = vector(a.iter().map(|x| x * s).collect());
        let (a, b) = (vector(a), vector(b));
        let d0 = embedding_distance(&a, &b, DistanceMetric::Cosine).unwrap();
        let d1 = embedding_distance(&scaled, &b, DistanceMetric::Cosine).unwrap();
        prop_assert!((d0 - d1).abs() <= 1e-9);
    }

    #[test]
    fn euclidean_triangle_inequality(a in nonzero_values(), b in nonzero_values(), c in nonzero_values()) {
        let (a, b, c) = (vector(a), vector(b), vector(c));
        let d = |x, y| embedding_distance(x, y, DistanceMetric::Euclidean).unwrap();
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn normalization_is_idempotent(a in nonzero_values()) {
        let n = l2_normalize(&vector(a)).unwrap();
        prop_assert!((n.norm() - 1.0).abs() <= 1e-9);
        let nn = l2_normalize(&n).unwrap();
        for (x, y) in n.values().iter().zip(nn.values()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn selection_is_the_first_minimum(scores in prop::collection::vec(prop::option::of(0u8..6), 1..60)) {
        let scores: Vec<Option<f64>> = scores.into_iter().map(|s| s.map(f64::from)).collect();
        let mut expected = None;
        for (i, s) in scores.iter().enumerate() {
            if let Some(s) = s {
                match expected {
                    Some((_, best)) if best <= *s => {}
                    _ => expected = Some((i, *s)),
                }
            }
        }
        match (SourceSelection::from_scores(scores.clone()), expected) {
            (Ok(sel), Some((i, _))) => prop_assert_eq!(sel.frame_index, i),
            (Err(SourcePrepError::NoDetectableFace { frames }), None) => prop_assert_eq!(frames, scores.len()),
            (other, exp) => prop_assert!(false, "{:?} vs {:?}", other, exp),
        }
    }
}

#[test]
fn zero_vectors_are_rejected() {
    let z = vector(vec![0.0]);
    let a = vector(vec![1.0]);
    assert!(matches!(
        embedding_distance(&z, &a, DistanceMetric::Cosine),
        Err(DistanceError::ZeroVectorCosine)
    ));
    assert_eq!(
        embedding_distance(&z, &a, DistanceMetric::Euclidean).unwrap(),
        1.0
    );
    assert!(l2_normalize(&z).is_err());
}

/// Centre inside under the even-odd rule, or exactly on an edge.
fn point_in_polygon(points: &[(f64, f64)], px: f64, py: f64) -> bool {
    let n = points.len();
    let mut inside = false;
    for i in 0..n {
        let (ax, ay) = points[i];
        let (bx, by) = points[(i + 1) % n];
        let on_line = (bx - ax) * (py - ay) == (by - ay) * (px - ax);
        let within = px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by);
        if on_line && within {
            return true;
        }
        if (ay > py) != (by > py) && px < ax + (py - ay) / (by - ay) * (bx - ax) {
            inside = !inside;
        }
    }
    inside
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_matches_point_in_polygon(
        w in 4usize..40,
        h in 4usize..40,
        raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..9),
    ) {
        let points: Vec<(f64, f64)> = raw
            .iter()
            .map(|(u, v)| ((u * w as f64 * 4.0).round() / 4.0, (v * h as f64 * 4.0).round() / 4.0))
            .collect();
        let contour = FaceContour::new(points.clone()).unwrap();
        let expected: Vec<bool> = (0..h)
            .flat_map(|r| (0..w).map(move |c| (c, r)))
            .map(|(c, r)| point_in_polygon(&points, c as f64 + 0.5, r as f64 + 0.5))
            .collect();
        match build_mask(&contour, (w, h), 0) {
            Ok(mask) => prop_assert_eq!(mask.bits(), &expected[..]),
            Err(SourcePrepError::DegenerateContour) => prop_assert!(contour.area() < 1e-9),
            Err(SourcePrepError::EmptyMask) => prop_assert!(expected.iter().all(|b| !b)),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }
}
