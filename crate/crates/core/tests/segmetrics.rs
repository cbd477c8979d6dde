mod common;

use patchlock::rng::uniform;
use patchlock::segmetrics::{ConfusionCounts, SegmentationMap, IGNORE_LABEL};
use proptest::prelude::*;
use rand_chacha::ChaCha20Rng;

fn random_map(h: usize, w: usize, classes: usize, ignore_frac: f64, r: &mut ChaCha20Rng) -> SegmentationMap {
    let labels = (0..h * w)
        .map(|_| {
            if uniform(r) < ignore_frac {
                IGNORE_LABEL
            } else {
                ((uniform(r) * classes as f64) as usize).min(classes - 1) as u8
            }
        })
        .collect();
    SegmentationMap::new(h, w, labels).unwrap()
}

/// Full C×C confusion matrix, then tp = diagonal, fp = column sum − diagonal,
/// fn = row sum − diagonal.
fn brute_force(pred: &[u8], gt: &[u8], c: usize) -> (Vec<u64>, Vec<u64>, Vec<u64>) {
    let mut m = vec![vec![0u64; c]; c];
    for (&p, &g) in pred.iter().zip(gt) {
        if g != IGNORE_LABEL {
            m[g as usize][p as usize] += 1;
        }
    }
    let tp: Vec<u64> = (0..c).map(|k| m[k][k]).collect();
    let fp = (0..c).map(|k| (0..c).map(|g| m[g][k]).sum::<u64>() - m[k][k]).collect();
    let fn_ = (0..c).map(|k| m[k].iter().sum::<u64>() - m[k][k]).collect();
    (tp, fp, fn_)
}

#[test]
fn matches_brute_force_on_100_random_maps() {
    let mut r = common::rng(6);
    for t in 0..100 {
        let c = 2 + t % 5;
        let (h, w) = (1 + (uniform(&mut r) * 9.0) as usize, 1 + (uniform(&mut r) * 9.0) as usize);
        let pred = random_map(h, w, c, 0.0, &mut r);
        let gt = random_map(h, w, c, 0.1, &mut r);
        let mut cc = ConfusionCounts::new(c);
        cc.accumulate(&pred, &gt).unwrap();
        let (tp, fp, fn_) = brute_force(pred.labels(), gt.labels(), c);
        assert_eq!((cc.tp.clone(), cc.fp.clone(), cc.fn_.clone()), (tp.clone(), fp.clone(), fn_.clone()));
        let rep = cc.miou();
        for k in 0..c {
            let union = tp[k] + fp[k] + fn_[k];
            let want = (union > 0).then(|| tp[k] as f64 / union as f64);
            assert_eq!(rep.per_class[k], want);
        }
        let v = rep.miou.unwrap();
        assert!((0.0..=1.0).contains(&v));
    }
}

#[test]
fn streaming_equals_batch_and_merge() {
    let mut r = common::rng(8);
    let pairs: Vec<_> = (0..10).map(|_| (random_map(4, 6, 5, 0.0, &mut r), random_map(4, 6, 5, 0.2, &mut r))).collect();

    let mut streamed = ConfusionCounts::new(5);
    for (p, g) in &pairs {
        streamed.accumulate(p, g).unwrap();
    }

    let concat = |f: fn(&(SegmentationMap, SegmentationMap)) -> &SegmentationMap| {
        SegmentationMap::new(40, 6, pairs.iter().flat_map(|pr| f(pr).labels().to_vec()).collect()).unwrap()
    };
    let mut batch = ConfusionCounts::new(5);
    batch.accumulate(&concat(|p| &p.0), &concat(|p| &p.1)).unwrap();
    assert_eq!(streamed, batch);

    let mut merged = ConfusionCounts::new(5);
    for (p, g) in &pairs {
        let mut one = ConfusionCounts::new(5);
        one.accumulate(p, g).unwrap();
        merged.merge(&one).unwrap();
    }
    assert_eq!(merged, streamed);
    assert!(merged.merge(&ConfusionCounts::new(3)).is_err());
}

#[test]
fn label_ppm_round_trip() {
    let mut r = common::rng(2);
    let m = random_map(5, 9, 4, 0.3, &mut r);
    let mut buf = Vec::new();
    m.write_ppm(&mut buf).unwrap();
    assert_eq!(SegmentationMap::read_ppm(&mut buf.as_slice()).unwrap(), m);
}

proptest! {
    #[test]
    fn permutation_invariance(
        pairs in prop::collection::vec((0u8..4, prop_oneof![4 => 0u8..4, 1 => Just(IGNORE_LABEL)]), 1..64),
        seed in any::<u64>(),
    ) {
        let n = pairs.len();
        let (p, g): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let mut cc = ConfusionCounts::new(4);
        cc.accumulate(&SegmentationMap::new(1, n, p.clone()).unwrap(), &SegmentationMap::new(1, n, g.clone()).unwrap()).unwrap();

        let mut idx: Vec<usize> = (0..n).collect();
        let mut r = common::rng(seed);
        for i in (1..n).rev() {
            let j = ((uniform(&mut r) * (i + 1) as f64) as usize).min(i);
            idx.swap(i, j);
        }
        let ps: Vec<u8> = idx.iter().map(|&i| p[i]).collect();
        let gs: Vec<u8> = idx.iter().map(|&i| g[i]).collect();
        let mut shuffled = ConfusionCounts::new(4);
        shuffled.accumulate(&SegmentationMap::new(1, n, ps).unwrap(), &SegmentationMap::new(1, n, gs).unwrap()).unwrap();
        prop_assert_eq!(cc, shuffled);
    }

    #[test]
    fn accumulation_is_monotone(
        a in prop::collection::vec(0u8..3, 12),
        b in prop::collection::vec(0u8..3, 12),
    ) {
        let mut cc = ConfusionCounts::new(3);
        let before = cc.clone();
        cc.accumulate(&SegmentationMap::new(3, 4, a).unwrap(), &SegmentationMap::new(3, 4, b).unwrap()).unwrap();
        for k in 0..3 {
            prop_assert!(cc.tp[k] >= before.tp[k] && cc.fp[k] >= before.fp[k] && cc.fn_[k] >= before.fn_[k]);
        }
        prop_assert_eq!(cc.tp.iter().sum::<u64>() + cc.fn_.iter().sum::<u64>(), 12);
    }
}
