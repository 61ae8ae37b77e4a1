use crate::error::{Error, Result};

use super::{BaleClass, BaleGeometry, ClassKey, SequencePlan};

/// Fills in `mass_per_meter` and `processing_periods` for a class.
///
/// `infeed_capacity` is the class's maximum infeed throughput in dry Mg per
/// period. The bale is assumed to be fed at the fastest speed that capacity
/// allows, and the period count is rounded up.
pub fn derive_bale_parameters(geometry: &BaleGeometry, class: &BaleClass, infeed_capacity: f64) -> Result<BaleClass> {
    geometry.validate()?;
    if !(infeed_capacity > 0.0 && infeed_capacity.is_finite()) {
        return Err(Error::validation(
            "infeed_capacity",
            format!("{}: must be positive, got {infeed_capacity}", class.key),
        ));
    }
    if !(class.density > 0.0) {
        return Err(Error::validation("density", format!("{}: must be positive", class.key)));
    }
    if !(class.bale_mass > 0.0) {
        return Err(Error::validation("bale_mass", format!("{}: must be positive", class.key)));
    }
    let c = geometry.width * geometry.height * class.density;
    let speed = infeed_capacity / c;
    // Tolerance keeps exact multiples (2.4 / 2.4) from rounding up to 2.
    let periods = (geometry.length / speed - 1e-9).ceil().max(1.0);
    if periods > u32::MAX as f64 {
        return Err(Error::validation("infeed_capacity", format!("{}: too small", class.key)));
    }
    Ok(BaleClass {
        mass_per_meter: c,
        processing_periods: periods as u32,
        ..class.clone()
    })
}

/// Places bales back to back from period 1.
///
/// Each bale's class must appear in `classes`; the returned plan refers to
/// classes by their index in that slice.
pub fn expand_sequence(bales: &[ClassKey], classes: &[BaleClass], horizon: u32) -> Result<SequencePlan> {
    let mut idx = Vec::with_capacity(bales.len());
    let mut starts = Vec::with_capacity(bales.len());
    let mut next: u64 = 1;
    for key in bales {
        let c = classes
            .iter()
            .position(|cl| cl.key == *key)
            .ok_or_else(|| Error::UnknownClass(key.to_string()))?;
        let p = classes[c].processing_periods;
        if p == 0 {
            return Err(Error::validation(
                "processing_periods",
                format!("{key}: not derived yet"),
            ));
        }
        idx.push(c);
        starts.push(next as u32);
        next += p as u64;
    }
    let occupied = next - 1;
    if occupied > horizon as u64 {
        return Err(Error::HorizonOverflow {
            required: occupied.min(u32::MAX as u64) as u32,
            horizon,
        });
    }
    Ok(SequencePlan {
        bales: idx,
        starts,
        occupied: occupied as u32,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use super::*;
    use crate::model::Moisture;

    fn class(density: f64) -> BaleClass {
        BaleClass::new(ClassKey::new("S", Moisture::Low), 0.4, 2, density).unwrap()
    }

    #[test]
    fn mass_per_meter_from_cross_section() {
        let g = BaleGeometry::new(1.2, 1.2, 2.4, 1.0).unwrap();
        let out = derive_bale_parameters(&g, &class(0.144), 1.0).unwrap();
        assert_relative_eq!(out.mass_per_meter, 0.20736, epsilon = 1e-12);
    }

    #[test]
    fn periods_round_up() {
        let g = BaleGeometry::new(1.2, 1.2, 2.4, 1.0).unwrap();
        let c = 1.2 * 1.2 * 0.144;
        // 2.4 m per period traverses the bale in one period.
        let one = derive_bale_parameters(&g, &class(0.144), 2.4 * c).unwrap();
        assert_eq!(one.processing_periods, 1);
        let three = derive_bale_parameters(&g, &class(0.144), 1.0 * c).unwrap();
        assert_eq!(three.processing_periods, 3);
    }

    #[test]
    fn rejects_non_positive_capacity() {
        let g = BaleGeometry::new(1.2, 1.2, 2.4, 1.0).unwrap();
        let err = derive_bale_parameters(&g, &class(0.144), 0.0).unwrap_err();
        assert!(err.to_string().contains("infeed_capacity"));
    }

    fn classes_with_periods(p: &[u32]) -> Vec<BaleClass> {
        p.iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut c = BaleClass::new(ClassKey::new(format!("F{i}"), Moisture::Medium), 0.4, 1, 0.15).unwrap();
                c.processing_periods = p;
                c
            })
            .collect()
    }

    #[test]
    fn empty_sequence_occupies_nothing() {
        let plan = expand_sequence(&[], &classes_with_periods(&[3]), 5).unwrap();
        assert_eq!(plan.occupied, 0);
        assert!((1..=5).all(|t| !plan.start_indicator(0, t)));
    }

    #[test]
    fn consecutive_starts() {
        let classes = classes_with_periods(&[3]);
        let key = classes[0].key.clone();
        let plan = expand_sequence(&[key.clone(), key], &classes, 10).unwrap();
        assert_eq!(plan.starts, vec![1, 4]);
        assert_eq!(plan.occupied, 6);
        assert!(plan.start_indicator(0, 1) && plan.start_indicator(0, 4));
        assert!(!plan.start_indicator(0, 2));
    }

    #[test]
    fn overflow_reports_required_periods() {
        let classes = classes_with_periods(&[3]);
        let key = classes[0].key.clone();
        match expand_sequence(&[key.clone(), key], &classes, 5) {
            Err(Error::HorizonOverflow { required, horizon }) => {
                assert_eq!((required, horizon), (6, 5));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_class_is_rejected() {
        let classes = classes_with_periods(&[1]);
        let err = expand_sequence(&[ClassKey::new("X", Moisture::High)], &classes, 5).unwrap_err();
        assert!(matches!(err, Error::UnknownClass(_)));
    }

    proptest! {
        #[test]
        fn mass_per_meter_is_linear(w in 0.1f64..3.0, h in 0.1f64..3.0, d in 0.01f64..1.0, k in 0.1f64..10.0) {
            let base = derive_bale_parameters(&BaleGeometry::new(w, h, 2.0, 1.0).unwrap(), &class(d), 1.0).unwrap();
            let scaled_w = derive_bale_parameters(&BaleGeometry::new(w * k, h, 2.0, 1.0).unwrap(), &class(d), 1.0).unwrap();
            let scaled_h = derive_bale_parameters(&BaleGeometry::new(w, h * k, 2.0, 1.0).unwrap(), &class(d), 1.0).unwrap();
            let scaled_d = derive_bale_parameters(&BaleGeometry::new(w, h, 2.0, 1.0).unwrap(), &class(d * k), 1.0).unwrap();
            for s in [scaled_w, scaled_h, scaled_d] {
                prop_assert!((s.mass_per_meter - k * base.mass_per_meter).abs() <= 1e-12 * s.mass_per_meter.max(1.0));
            }
        }

        #[test]
        fn starts_are_strictly_increasing(seq in proptest::collection::vec(0usize..3, 0..30)) {
            let classes = classes_with_periods(&[1, 2, 5]);
            let keys: Vec<_> = seq.iter().map(|&i| classes[i].key.clone()).collect();
            let plan = expand_sequence(&keys, &classes, 1000).unwrap();
            prop_assert_eq!(plan.indicator_count(), seq.len());
            for w in plan.starts.windows(2) {
                prop_assert!(w[0] < w[1]);
            }
            let total: u32 = seq.iter().map(|&i| classes[i].processing_periods).sum();
            prop_assert_eq!(plan.occupied, total);
        }
    }
}
