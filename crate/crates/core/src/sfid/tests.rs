use super::*;
use crate::autodiff::{grad_check_graph, sigmoid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const D: usize = 4;
const DE: usize = 3;

struct Fixture {
    p: SfIdParams,
    h: Tensor,
    c_slot: Tensor,
    c_inte: Tensor,
    last: Tensor,
}

fn fixture(seed: u64, t: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = SfIdParams::init(D, DE, 3, 5, &mut rng);
    p.id_b = Tensor::uniform(&[DE], 0.5, &mut rng);
    Fixture {
        p,
        h: Tensor::uniform(&[t, D], 1.0, &mut rng),
        c_slot: Tensor::uniform(&[t, D], 1.0, &mut rng),
        c_inte: Tensor::uniform(&[1, D], 1.0, &mut rng),
        last: Tensor::uniform(&[1, D], 1.0, &mut rng),
    }
}

fn vec_mat(x: &[f64], m: &Tensor) -> Vec<f64> {
    let (r, c) = m.dims2();
    (0..c).map(|j| (0..r).map(|i| x[i] * m.at(i, j)).sum()).collect()
}

fn naive_sf(f: &Fixture, query: &[f64], global: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
    let t = f.c_slot.dims2().0;
    let wq = vec_mat(query, &f.p.sf_w);
    let mut factors: Vec<f64> = (0..t)
        .map(|i| (0..D).map(|d| f.p.sf_v.data()[d] * (f.c_slot.at(i, d) + wq[d]).tanh()).sum())
        .collect();
    if global {
        let s: f64 = factors.iter().sum();
        factors = vec![s; t];
    }
    let r_slot = (0..t)
        .map(|i| f.c_slot.row(i).iter().map(|x| x * factors[i]).collect())
        .collect();
    (factors, r_slot)
}

/// Returns `(alpha, r)` of the diagonal pooling over `values` rows.
fn naive_id(f: &Fixture, left: &[Vec<f64>], right: &[Vec<f64>], values: &[Vec<f64>], act: fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let t = left.len();
    let score = |i: usize, j: usize| -> f64 {
        let a = vec_mat(&left[i], &f.p.id_v1);
        let b = vec_mat(&right[j], &f.p.id_v2);
        (0..DE).map(|k| f.p.id_w.data()[k] * act(a[k] + b[k] + f.p.id_b.data()[k])).sum()
    };
    let alpha: Vec<f64> = (0..t)
        .map(|i| {
            let z: f64 = (0..t).map(|j| score(i, j).exp()).sum();
            score(i, i).exp() / z
        })
        .collect();
    let r = (0..D).map(|d| (0..t).map(|i| alpha[i] * values[i][d]).sum()).collect();
    (alpha, r)
}

fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.dims2().0).map(|i| t.row(i).to_vec()).collect()
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn sf_subnet_matches_loops() {
    let f = fixture(41, 5);
    for corr in [Correlation::PerPosition, Correlation::Global] {
        let mut g = Graph::new();
        let v = f.p.bind(&mut g);
        let c = g.constant(f.c_slot.clone());
        let q = g.constant(f.c_inte.clone());
        let out = sf_subnet(&mut g, c, q, &v, corr).unwrap();
        let (factors, r_slot) = naive_sf(&f, f.c_inte.data(), corr == Correlation::Global);
        if corr == Correlation::PerPosition {
            assert_close(g.value(out.factors), &factors, 1e-12);
        } else {
            assert_close(g.value(out.factors), &factors[..1], 1e-12);
        }
        assert_close(g.value(out.r_slot), &r_slot.concat(), 1e-12);
    }
}

#[test]
fn id_subnet_from_slots_matches_loops() {
    let f = fixture(42, 4);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let r_slot = g.constant(f.c_slot.clone());
    let h = g.constant(f.h.clone());
    let c = g.constant(f.c_inte.clone());
    let out = id_subnet_from_slots(&mut g, r_slot, h, c, &v).unwrap();
    let (alpha, r) = naive_id(&f, &rows(&f.c_slot), &rows(&f.h), &rows(&f.c_slot), f64::tanh);
    assert_close(g.value(out.alpha), &alpha, 1e-12);
    assert_close(g.value(out.r), &r, 1e-12);
    let r_inte: Vec<f64> = r.iter().zip(f.c_inte.data()).map(|(a, b)| a + b).collect();
    assert_close(g.value(out.r_inte), &r_inte, 1e-12);
}

#[test]
fn id_subnet_from_states_matches_loops() {
    let f = fixture(43, 4);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let h = g.constant(f.h.clone());
    let c_slot = g.constant(f.c_slot.clone());
    let c = g.constant(f.c_inte.clone());
    let out = id_subnet_from_states(&mut g, h, c_slot, c, &v).unwrap();
    let (alpha, r) = naive_id(&f, &rows(&f.h), &rows(&f.c_slot), &rows(&f.h), sigmoid);
    assert_close(g.value(out.alpha), &alpha, 1e-12);
    assert_close(g.value(out.r), &r, 1e-12);
}

#[test]
fn pair_weights_are_distributions_and_alpha_is_their_diagonal() {
    let f = fixture(44, 6);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let r_slot = g.constant(f.c_slot.clone());
    let h = g.constant(f.h.clone());
    let c = g.constant(f.c_inte.clone());
    let out = id_subnet_from_slots(&mut g, r_slot, h, c, &v).unwrap();
    let w = g.tensor(out.pair_weights);
    let alpha = g.value(out.alpha);
    for i in 0..6 {
        assert!((w.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.row(i).iter().all(|&x| x > 0.0 && x < 1.0));
        assert_eq!(alpha[i], w.at(i, i));
    }
}

fn run(f: &Fixture, config: &ModeConfig) -> (Tensor, Tensor) {
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let h = g.constant(f.h.clone());
    let ctx = context_set(&mut g, f);
    let s = run_sf_id(&mut g, h, &ctx, config, &v).unwrap();
    (g.tensor(s.r_slot), g.tensor(s.r_inte))
}

fn context_set(g: &mut Graph<'_>, f: &Fixture) -> ContextSet {
    let slot = g.constant(f.c_slot.clone());
    let intent = g.constant(f.c_inte.clone());
    ContextSet {
        slot,
        slot_weights: slot,
        intent,
        intent_weights: intent,
    }
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[test]
fn sf_first_iterations_unroll_by_hand() {
    let f = fixture(45, 5);
    let mut query = f.c_inte.data().to_vec();
    let mut r_slot = Vec::new();
    for k in 1..=3 {
        r_slot = naive_sf(&f, &query, false).1;
        let (_, r) = naive_id(&f, &r_slot, &rows(&f.h), &r_slot, f64::tanh);
        query = add(&r, f.c_inte.data());
        let config = ModeConfig {
            iterations: k,
            ..ModeConfig::default()
        };
        let (got_slot, got_inte) = run(&f, &config);
        assert_close(got_slot.data(), &r_slot.concat(), 1e-12);
        assert_close(got_inte.data(), &query, 1e-12);
    }
    assert!(!r_slot.is_empty());
}

#[test]
fn id_first_iterations_unroll_by_hand() {
    let f = fixture(46, 4);
    let (_, r) = naive_id(&f, &rows(&f.h), &rows(&f.c_slot), &rows(&f.h), sigmoid);
    let mut r_inte = add(&r, f.c_inte.data());
    let mut r_slot = naive_sf(&f, &r_inte, false).1;
    let config = |k| ModeConfig {
        mode: Mode::IdFirst,
        iterations: k,
        ..ModeConfig::default()
    };
    let (s, i) = run(&f, &config(1));
    assert_close(s.data(), &r_slot.concat(), 1e-12);
    assert_close(i.data(), &r_inte, 1e-12);
    for k in 2..=3 {
        let (_, r) = naive_id(&f, &r_slot, &rows(&f.h), &r_slot, f64::tanh);
        r_inte = add(&r, f.c_inte.data());
        r_slot = naive_sf(&f, &r_inte, false).1;
        let (s, i) = run(&f, &config(k));
        assert_close(s.data(), &r_slot.concat(), 1e-12);
        assert_close(i.data(), &r_inte, 1e-12);
    }
}

#[test]
fn ablations_route_the_expected_vectors() {
    let f = fixture(47, 3);
    let cfg = |ablation| ModeConfig {
        ablation,
        ..ModeConfig::default()
    };
    let (s, i) = run(&f, &cfg(Ablation::None));
    assert_eq!(s, f.c_slot);
    assert_eq!(i, f.c_inte);

    let (s, i) = run(&f, &cfg(Ablation::SfOnly));
    assert_close(s.data(), &naive_sf(&f, f.c_inte.data(), false).1.concat(), 1e-12);
    assert_eq!(i, f.c_inte);

    let (s, i) = run(&f, &cfg(Ablation::IdOnly));
    assert_eq!(s, f.c_slot);
    let (_, r) = naive_id(&f, &rows(&f.c_slot), &rows(&f.h), &rows(&f.c_slot), f64::tanh);
    assert_close(i.data(), &add(&r, f.c_inte.data()), 1e-12);

    let (s, i) = run(&f, &cfg(Ablation::NoInteraction));
    assert_close(s.data(), &naive_sf(&f, f.c_inte.data(), false).1.concat(), 1e-12);
    let (_, r) = naive_id(&f, &rows(&f.h), &rows(&f.c_slot), &rows(&f.h), sigmoid);
    assert_close(i.data(), &add(&r, f.c_inte.data()), 1e-12);
}

#[test]
fn iteration_count_does_not_matter_without_interaction() {
    let f = fixture(48, 4);
    let a = run(&f, &ModeConfig { ablation: Ablation::NoInteraction, iterations: 1, ..ModeConfig::default() });
    let b = run(&f, &ModeConfig { ablation: Ablation::NoInteraction, iterations: 4, ..ModeConfig::default() });
    assert_eq!(a, b);
}

#[test]
fn zero_iterations_is_a_config_error() {
    let f = fixture(49, 2);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let h = g.constant(f.h.clone());
    let ctx = context_set(&mut g, &f);
    let config = ModeConfig {
        iterations: 0,
        ..ModeConfig::default()
    };
    let err = run_sf_id(&mut g, h, &ctx, &config, &v).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn heads_concatenate_then_project() {
    let f = fixture(50, 3);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let h = g.constant(f.h.clone());
    let c = g.constant(f.c_slot.clone());
    let last = g.constant(f.last.clone());
    let ri = g.constant(f.c_inte.clone());
    let slots = predict_slots(&mut g, h, c, &v).unwrap();
    let intent = predict_intent(&mut g, last, ri, &v).unwrap();
    assert_eq!(g.shape(slots), &[3, 5]);
    assert_eq!(g.shape(intent), &[1, 3]);
    for i in 0..3 {
        let joined = [f.h.row(i), f.c_slot.row(i)].concat();
        assert_close(g.tensor(slots).row(i), &vec_mat(&joined, &f.p.slot_head), 1e-12);
    }
    let joined = [f.last.data(), f.c_inte.data()].concat();
    assert_close(g.value(intent), &vec_mat(&joined, &f.p.intent_head), 1e-12);
}

#[test]
fn mismatched_lengths_are_rejected() {
    let f = fixture(51, 3);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let h = g.constant(Tensor::zeros(&[2, D]));
    let c = g.constant(f.c_slot.clone());
    assert!(predict_slots(&mut g, h, c, &v).is_err());
    assert!(id_subnet_from_slots(&mut g, c, h, c, &v).is_err());
}

#[test]
fn block_gradients_match_finite_differences() {
    let f = fixture(52, 3);
    for mode in [Mode::SfFirst, Mode::IdFirst] {
        let config = ModeConfig {
            mode,
            iterations: 2,
            ..ModeConfig::default()
        };
        let names: Vec<String> = f.p.tensors().into_iter().map(|(n, _)| n).collect();
        for (k, name) in names.iter().enumerate() {
            let target = f.p.tensors()[k].1.clone();
            let rep = grad_check_graph(
                |g, probe| {
                    let mut vars = f.p.bind_owned(g).vars();
                    vars[k] = probe;
                    let v = SfIdVars::from_slice(&vars);
                    let h = g.constant(f.h.clone());
                    let last = g.constant(f.last.clone());
                    let ctx = context_set(g, &f);
                    let s = run_sf_id(g, h, &ctx, &config, &v).expect("valid config");
                    let slots = predict_slots(g, h, s.r_slot, &v)?;
                    let intent = predict_intent(g, last, s.r_inte, &v)?;
                    let a = g.cross_entropy(slots, &[0, 3, 1])?;
                    let b = g.cross_entropy(intent, &[2])?;
                    g.add(a, b)
                },
                &target,
                1e-5,
                1e-5,
            )
            .unwrap();
            assert!(rep.passed(), "{mode} {name}: {rep:?}");
        }
    }
}

#[test]
fn keywords_round_trip() {
    for m in [Mode::SfFirst, Mode::IdFirst] {
        assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
    }
    for a in [Ablation::Full, Ablation::NoInteraction, Ablation::SfOnly, Ablation::IdOnly, Ablation::None] {
        assert_eq!(a.to_string().parse::<Ablation>().unwrap(), a);
    }
    for c in [Correlation::PerPosition, Correlation::Global] {
        assert_eq!(c.to_string().parse::<Correlation>().unwrap(), c);
    }
    assert!("sideways".parse::<Mode>().is_err());
}

#[test]
fn single_position_and_flat_scorer_cases() {
    let mut f = fixture(53, 1);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let r_slot = g.constant(f.c_slot.clone());
    let h = g.constant(f.h.clone());
    let c = g.constant(f.c_inte.clone());
    let out = id_subnet_from_slots(&mut g, r_slot, h, c, &v).unwrap();
    assert_eq!(g.value(out.alpha), &[1.0]);
    assert_close(g.value(out.r_inte), &add(f.c_slot.data(), f.c_inte.data()), 1e-15);
    drop(g);

    f = fixture(54, 4);
    f.p.id_w = Tensor::zeros(&[DE, 1]);
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let h = g.constant(f.h.clone());
    let c_slot = g.constant(f.c_slot.clone());
    let c = g.constant(f.c_inte.clone());
    let out = id_subnet_from_states(&mut g, h, c_slot, c, &v).unwrap();
    assert!(g.value(out.alpha).iter().all(|&a| (a - 0.25).abs() < 1e-15));
    let mean: Vec<f64> = (0..D).map(|d| (0..4).map(|t| f.h.at(t, d)).sum::<f64>() / 4.0).collect();
    assert_close(g.value(out.r), &mean, 1e-12);
}

#[test]
fn zero_sf_vector_annihilates_slot_reinforcement() {
    let mut f = fixture(55, 3);
    f.p.sf_v = Tensor::zeros(&[D, 1]);
    let (s, _) = run(&f, &ModeConfig { ablation: Ablation::SfOnly, ..ModeConfig::default() });
    assert!(s.data().iter().all(|&x| x == 0.0));
}

#[test]
fn intent_head_logit_gap_gives_three_to_one() {
    let mut f = fixture(56, 2);
    f.p.intent_head = Tensor::zeros(&[2 * D, 2]);
    f.p.intent_head.data_mut()[0] = 3f64.ln();
    let mut g = Graph::new();
    let v = f.p.bind(&mut g);
    let mut last = Tensor::zeros(&[1, D]);
    last.data_mut()[0] = 1.0;
    let last = g.constant(last);
    let ri = g.constant(f.c_inte.clone());
    let logits = predict_intent(&mut g, last, ri, &v).unwrap();
    let probs = g.softmax(logits, 1).unwrap();
    assert_close(g.value(probs), &[0.75, 0.25], 1e-15);
}
