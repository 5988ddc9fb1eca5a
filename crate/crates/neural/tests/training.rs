use rand::Rng;
use sgda_neural::{adam_step, he_normal, seeded_rng, AdamConfig, AdamState, Graph, ParamStore, Tensor};

/// Two Gaussian blobs in the plane, one per class.
fn toy_problem(seed: u64) -> (Vec<[f64; 2]>, Vec<usize>) {
    let mut rng = seeded_rng(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..64 {
        let class = i % 2;
        let c = if class == 0 { -1.0 } else { 1.0 };
        xs.push([c + rng.gen_range(-0.4..0.4), c + rng.gen_range(-0.4..0.4)]);
        ys.push(class);
    }
    (xs, ys)
}

fn train(seed: u64, steps: usize) -> (Vec<f64>, ParamStore) {
    let (xs, ys) = toy_problem(7);
    let mut rng = seeded_rng(seed);
    let mut store = ParamStore::new();
    let w = store.add("w", he_normal(vec![2, 2], 2, &mut rng));
    let b = store.add("b", Tensor::zeros(vec![2]));
    let mut adam = AdamState::new(&store, AdamConfig::default());
    let flat: Vec<f64> = xs.iter().flatten().copied().collect();
    let mut losses = Vec::new();
    for _ in 0..steps {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![xs.len(), 2], flat.clone()).unwrap());
        let (wv, bv) = (g.param(&store, w), g.param(&store, b));
        let logits = g.dense(x, wv, bv).unwrap();
        let loss = g.softmax_cross_entropy(logits, &ys).unwrap();
        losses.push(g.value(loss).data()[0]);
        g.backward(loss).unwrap();
        store.zero_grad();
        g.accumulate_param_grads(&mut store).unwrap();
        adam_step(&mut store, &mut adam).unwrap();
    }
    (losses, store)
}

#[test]
fn adam_descends_monotonically_on_moving_average() {
    let (losses, _) = train(11, 200);
    let window = 20;
    let avgs: Vec<f64> = losses
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect();
    for pair in avgs.windows(2) {
        assert!(pair[1] <= pair[0], "moving average rose: {pair:?}");
    }
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn identical_seeds_give_identical_parameters() {
    let (_, a) = train(3, 50);
    let (_, b) = train(3, 50);
    for ((_, ta), (_, tb)) in a.iter().zip(b.iter()) {
        let ba: Vec<u64> = ta.data().iter().map(|v| v.to_bits()).collect();
        let bb: Vec<u64> = tb.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(ba, bb);
    }
}
