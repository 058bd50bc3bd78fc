use atm::divergence::{
    energy_distance, jeffreys_kl, mdd_batch_terms, mdd_full, mdd_population, mmd_gaussian,
    total_variation, PairNorm,
};
use atm::models::entropy_weight;
use atm::trainer::{sgd_update, HalfHalfSampler};
use atm::{fmt_f64, DomainTag, FiniteDist, SampleSet, Tape, Tensor};
use proptest::prelude::*;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |data| Tensor::new(r, c, data).unwrap())
    })
}

/// Two sets sharing a dimension.
fn set_pair() -> impl Strategy<Value = (SampleSet, SampleSet)> {
    (1usize..=5, 1usize..=8, 1usize..=8).prop_flat_map(|(d, ns, nt)| {
        (
            prop::collection::vec(-5.0f64..5.0, ns * d),
            prop::collection::vec(-5.0f64..5.0, nt * d),
        )
            .prop_map(move |(a, b)| {
                (
                    SampleSet::new(Tensor::new(ns, d, a).unwrap(), None, DomainTag::Source)
                        .unwrap(),
                    SampleSet::new(Tensor::new(nt, d, b).unwrap(), None, DomainTag::Target)
                        .unwrap(),
                )
            })
    })
}

fn probs(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    })
}

fn dist_pair() -> impl Strategy<Value = (FiniteDist, FiniteDist)> {
    (2usize..=6).prop_flat_map(|k| {
        (probs(k), probs(k)).prop_map(|(p, q)| {
            (FiniteDist::one_hot(p).unwrap(), FiniteDist::one_hot(q).unwrap())
        })
    })
}

/// Aligned source/target batch with labels in `0..c`.
fn batch() -> impl Strategy<Value = (Tensor, Tensor, Vec<usize>, Vec<usize>)> {
    (1usize..=10, 1usize..=4, 1usize..=4).prop_flat_map(|(n, d, c)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * d),
            prop::collection::vec(-3.0f64..3.0, n * d),
            prop::collection::vec(0..c, n),
            prop::collection::vec(0..c, n),
        )
            .prop_map(move |(a, b, ys, yt)| {
                (
                    Tensor::new(n, d, a).unwrap(),
                    Tensor::new(n, d, b).unwrap(),
                    ys,
                    yt,
                )
            })
    })
}

fn batch_terms(sf: &Tensor, tf: &Tensor, ys: &[usize], yt: &[usize]) -> [f64; 3] {
    let mut tape = Tape::new();
    let s = tape.constant(sf.clone());
    let t = tape.constant(tf.clone());
    let terms = mdd_batch_terms(&mut tape, s, t, ys, yt).unwrap();
    terms.as_array().map(|v| tape.value(v).item().unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mdd_full_is_symmetric_and_nonnegative((s, t) in set_pair()) {
        let st = mdd_full(&s, &t).unwrap();
        let ts = mdd_full(&t, &s).unwrap();
        prop_assert_eq!(st.to_bits(), ts.to_bits());
        prop_assert!(st >= 0.0);
    }

    #[test]
    fn self_divergences_vanish((s, _) in set_pair(), bandwidth in 0.1f64..5.0) {
        prop_assert!(energy_distance(&s, &s).unwrap().abs() <= 1e-12);
        prop_assert!(mmd_gaussian(&s, &s, bandwidth).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn finite_divergences_are_bounded((p, q) in dist_pair()) {
        let tv = total_variation(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&tv));
        let j = jeffreys_kl(&p, &q).unwrap();
        prop_assert!(j >= 0.0);
        prop_assert_eq!(jeffreys_kl(&p, &p).unwrap(), 0.0);
        if p.probs() != q.probs() {
            prop_assert!(j > 0.0);
        }
        for norm in [PairNorm::SquaredL2, PairNorm::L1] {
            prop_assert!(mdd_population(&p, &q, norm).unwrap() >= 0.0);
        }
    }
}

proptest! {
    #[test]
    fn coincident_points_have_zero_mdd(point in prop::collection::vec(-5.0f64..5.0, 1..4), ns in 1usize..5, nt in 1usize..5) {
        let d = point.len();
        let rows = |n: usize| Tensor::new(n, d, point.repeat(n)).unwrap();
        let s = SampleSet::new(rows(ns), None, DomainTag::Source).unwrap();
        let t = SampleSet::new(rows(nt), None, DomainTag::Target).unwrap();
        prop_assert_eq!(mdd_full(&s, &t).unwrap(), 0.0);
    }

    #[test]
    fn batch_mdd_terms_are_nonnegative((sf, tf, ys, yt) in batch()) {
        for v in batch_terms(&sf, &tf, &ys, &yt) {
            prop_assert!(v >= 0.0);
        }
    }

    #[test]
    fn batch_mdd_permutation_invariance((sf, tf, ys, yt) in batch(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = sf.rows();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let base = batch_terms(&sf, &tf, &ys, &yt);

        let pick = |y: &[usize], p: &[usize]| p.iter().map(|&i| y[i]).collect::<Vec<_>>();
        let joint = batch_terms(
            &sf.select_rows(&perm).unwrap(),
            &tf.select_rows(&perm).unwrap(),
            &pick(&ys, &perm),
            &pick(&yt, &perm),
        );
        for (a, b) in base.iter().zip(joint) {
            prop_assert!((a - b).abs() <= 1e-10);
        }

        let mut other: Vec<usize> = (0..n).collect();
        other.shuffle(&mut rng);
        let within = batch_terms(
            &sf.select_rows(&perm).unwrap(),
            &tf.select_rows(&other).unwrap(),
            &pick(&ys, &perm),
            &pick(&yt, &other),
        );
        prop_assert!((base[1] - within[1]).abs() <= 1e-10);
        prop_assert!((base[2] - within[2]).abs() <= 1e-10);
    }

    #[test]
    fn transpose_is_an_involution(m in matrix(6, 6)) {
        prop_assert_eq!(m.transpose().transpose(), m);
    }

    #[test]
    fn matmul_with_identity(m in matrix(6, 6)) {
        prop_assert_eq!(m.matmul(&Tensor::identity(m.cols())).unwrap(), m.clone());
        prop_assert_eq!(Tensor::identity(m.rows()).matmul(&m).unwrap(), m);
    }

    #[test]
    fn float_text_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let back: f64 = fmt_f64(v).parse().unwrap();
        prop_assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn entropy_weights_have_unit_mean(rows in prop::collection::vec(probs(3), 1..10)) {
        let p = Tensor::from_rows(&rows.iter().map(|r| r.as_slice()).collect::<Vec<_>>()).unwrap();
        let w = entropy_weight(&p).unwrap();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn plain_sgd_is_gradient_descent(w in matrix(3, 3), lr in 0.0f64..1.0) {
        let g = w.map(|x| 0.5 * x - 1.0);
        let mut p = w.clone();
        let mut v = Tensor::zeros(w.rows(), w.cols());
        sgd_update(&mut p, &g, &mut v, lr, 0.0, 0.0).unwrap();
        for ((a, b), gi) in p.data().iter().zip(w.data()).zip(g.data()) {
            prop_assert_eq!(*a, b - lr * gi);
        }
    }

    #[test]
    fn sampler_shape(ns in 1usize..60, nt in 1usize..60, nb in 1usize..20, seed in any::<u64>(), epoch in 0usize..5) {
        let sampler = HalfHalfSampler::new(ns, nt, nb, seed, epoch).unwrap();
        let expected = ns.max(nt).div_ceil(nb);
        prop_assert_eq!(sampler.batches(), expected);
        let batches: Vec<_> = sampler.collect();
        prop_assert_eq!(batches.len(), expected);
        let mut seen_s = vec![0usize; ns];
        let mut seen_t = vec![0usize; nt];
        for b in &batches {
            prop_assert_eq!(b.source.len(), nb);
            prop_assert_eq!(b.target.len(), nb);
            b.source.iter().for_each(|&i| seen_s[i] += 1);
            b.target.iter().for_each(|&i| seen_t[i] += 1);
        }
        // Cyclic reads: counts per domain differ by at most one.
        for seen in [&seen_s, &seen_t] {
            let (lo, hi) = (seen.iter().min().unwrap(), seen.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
            prop_assert!(*lo >= 1);
        }
    }

    #[test]
    fn gradient_reversal_is_identity_forward(m in matrix(4, 4), coeff in 0.0f64..3.0) {
        let mut tape = Tape::new();
        let x = tape.param(m.clone());
        let y = tape.grad_reverse(x, coeff).unwrap();
        prop_assert_eq!(tape.value(y), &m);
        let s = tape.mean(y).unwrap();
        tape.backward(s).unwrap();
        let n = m.len() as f64;
        for g in tape.grad(x).unwrap().data() {
            prop_assert!((g + coeff / n).abs() <= 1e-15);
        }
    }
}
