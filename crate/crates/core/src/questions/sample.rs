use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::record::MajorType;

const EPS: f64 = 1e-9;

/// Per-class quotas by the largest-remainder method: every class gets
/// `floor(fraction * size)`, then the classes with the largest fractional
/// parts get one more until the total reaches `round(fraction * total)`.
/// Ties go to the earlier class.
pub fn allocate(sizes: &[usize], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "sampling fraction {fraction} outside (0, 1]"
        )));
    }
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64 + EPS).round() as usize;
    let mut quotas = Vec::with_capacity(sizes.len());
    let mut remainders = Vec::with_capacity(sizes.len());
    for (i, &n) in sizes.iter().enumerate() {
        let exact = fraction * n as f64;
        let floor = ((exact + EPS).floor() as usize).min(n);
        quotas.push(floor);
        remainders.push((i, (exact - floor as f64).max(0.0)));
    }
    let assigned: usize = quotas.iter().sum();
    let mut extra = target.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    for (i, rem) in remainders {
        if extra == 0 {
            break;
        }
        if rem > EPS && quotas[i] < sizes[i] {
            quotas[i] += 1;
            extra -= 1;
        }
    }
    Ok(quotas)
}

/// Samples `fraction` of the items within each major class. Deterministic
/// for a given seed; the output keeps the input order.
pub fn stratified_sample<T: Clone>(
    items: &[T],
    class_of: impl Fn(&T) -> MajorType,
    fraction: f64,
    seed: u64,
) -> Result<Vec<T>> {
    let mut groups: BTreeMap<MajorType, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(class_of(item)).or_default().push(i);
    }
    let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
    let quotas = allocate(&sizes, fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; items.len()];
    for (members, quota) in groups.values_mut().zip(quotas) {
        members.shuffle(&mut rng);
        for &i in &members[..quota] {
            keep[i] = true;
        }
    }
    Ok(items
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(item, _)| item.clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus(sizes: &[(MajorType, usize)]) -> Vec<(usize, MajorType)> {
        let mut v = Vec::new();
        for &(m, n) in sizes {
            for _ in 0..n {
                v.push((v.len(), m));
            }
        }
        v
    }

    #[test]
    fn ninety_ten_at_one_tenth() {
        let items = corpus(&[(MajorType::Human, 90), (MajorType::Entity, 10)]);
        let s = stratified_sample(&items, |x| x.1, 0.1, 1).unwrap();
        let humans = s.iter().filter(|x| x.1 == MajorType::Human).count();
        assert_eq!((humans, s.len() - humans), (9, 1));
    }

    #[test]
    fn full_fraction_is_identity() {
        let items = corpus(&[(MajorType::Human, 7), (MajorType::Other, 3)]);
        assert_eq!(stratified_sample(&items, |x| x.1, 1.0, 5).unwrap(), items);
    }

    #[test]
    fn empty_input() {
        let items: Vec<(usize, MajorType)> = Vec::new();
        assert!(stratified_sample(&items, |x| x.1, 0.5, 5)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn rejects_bad_fraction() {
        assert!(allocate(&[10], 0.0).is_err());
        assert!(allocate(&[10], 1.5).is_err());
        assert!(allocate(&[10], f64::NAN).is_err());
    }

    #[test]
    fn one_third_of_four_classes() {
        assert_eq!(
            allocate(&[4000, 3000, 2000, 1000], 1.0 / 3.0).unwrap(),
            vec![1333, 1000, 667, 333]
        );
    }

    proptest! {
        #[test]
        fn quotas_are_floor_or_ceil(
            sizes in proptest::collection::vec(0usize..500, 1..6),
            fraction in 0.001f64..=1.0,
        ) {
            let q = allocate(&sizes, fraction).unwrap();
            for (&n, &k) in sizes.iter().zip(&q) {
                let exact = fraction * n as f64;
                prop_assert!(k as f64 >= exact.floor() - 1e-6 && k as f64 <= exact.ceil() + 1e-6,
                    "n={n} k={k} exact={exact}");
            }
            let total: usize = sizes.iter().sum();
            let target = (fraction * total as f64).round() as i64;
            prop_assert!((q.iter().sum::<usize>() as i64 - target).abs() <= 1);
        }

        #[test]
        fn sampling_is_deterministic(seed in any::<u64>(), a in 0usize..50, b in 0usize..50) {
            let items = corpus(&[(MajorType::Human, a), (MajorType::Location, b)]);
            let x = stratified_sample(&items, |x| x.1, 0.4, seed).unwrap();
            let y = stratified_sample(&items, |x| x.1, 0.4, seed).unwrap();
            prop_assert_eq!(&x, &y);
            prop_assert!(x.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
}
