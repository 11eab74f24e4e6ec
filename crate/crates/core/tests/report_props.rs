use kaya_core::report::pearson;
use proptest::prelude::*;

/// Raw-sum form over exact integers, computed independently of the centred form.
fn oracle(xs: &[i64], ys: &[i64]) -> Option<f64> {
    let n = xs.len() as i128;
    let sx: i128 = xs.iter().map(|&x| x as i128).sum();
    let sy: i128 = ys.iter().map(|&y| y as i128).sum();
    let sxy: i128 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| x as i128 * y as i128)
        .sum();
    let sxx: i128 = xs.iter().map(|&x| x as i128 * x as i128).sum();
    let syy: i128 = ys.iter().map(|&y| y as i128 * y as i128).sum();
    let num = n * sxy - sx * sy;
    let dx = n * sxx - sx * sx;
    let dy = n * syy - sy * sy;
    if dx == 0 || dy == 0 {
        return None;
    }
    Some(num as f64 / ((dx as f64).sqrt() * (dy as f64).sqrt()))
}

fn pts(xs: &[i64], ys: &[i64]) -> Vec<(f64, f64)> {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (x as f64, y as f64))
        .collect()
}

#[test]
fn known_value() {
    let r = pearson(&pts(&[1, 2, 3, 4], &[1, 3, 2, 4])).unwrap();
    assert!((r - 0.8).abs() < 1e-12, "{r}");
    assert_eq!(pearson(&pts(&[1, 2, 3], &[5, 5, 5])), None);
    assert_eq!(pearson(&pts(&[1], &[2])), None);
    let perfect = pearson(&pts(&[1, 2, 3], &[-2, -4, -6])).unwrap();
    assert!((perfect + 1.0).abs() < 1e-12);
}

fn series() -> impl Strategy<Value = (Vec<i64>, Vec<i64>)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-1_000_000i64..1_000_000, n),
            prop::collection::vec(-1_000_000i64..1_000_000, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn agrees_with_raw_sum_oracle((xs, ys) in series()) {
        match (pearson(&pts(&xs, &ys)), oracle(&xs, &ys)) {
            (None, None) => {}
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b),
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn bounded_symmetric_and_order_free((xs, ys) in series(), seed in any::<u64>()) {
        let p = pts(&xs, &ys);
        let r = pearson(&p);
        if let Some(v) = r {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
        let swapped: Vec<_> = p.iter().map(|&(x, y)| (y, x)).collect();
        match (r, pearson(&swapped)) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
            (a, b) => prop_assert_eq!(a, b),
        }
        let mut shuffled = p.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(r, pearson(&shuffled));
    }

    #[test]
    fn affine_maps_preserve_magnitude((xs, ys) in series(), a in 1i64..50, b in -1000i64..1000, neg in any::<bool>()) {
        let s = if neg { -a } else { a };
        let mapped: Vec<i64> = xs.iter().map(|x| s * x + b).collect();
        match (pearson(&pts(&xs, &ys)), pearson(&pts(&mapped, &ys))) {
            (Some(r0), Some(r1)) => {
                let expect = if neg { -r0 } else { r0 };
                prop_assert!((r1 - expect).abs() < 1e-9, "{} vs {}", r1, expect);
            }
            (None, None) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }
}
