//! Central finite differences against the analytic reverse pass.

use rand::Rng;
use sgda_neural::{seeded_rng, Graph, Tensor, Var};

const H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

/// Builds a scalar loss from the given inputs. The loss is made generic with a
/// fixed random projection so every output element carries gradient.
type Build<'a> = dyn Fn(&mut Graph, &[Var]) -> Var + 'a;

fn check(inputs: Vec<Tensor>, build: &Build<'_>) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| g.input(t.clone().with_requires_grad()))
        .collect();
    let out = build(&mut g, &vars);
    g.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();

    let eval = |inputs: &[Tensor]| {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).data()[0]
    };
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut plus = inputs.clone();
            plus[i].data_mut()[j] += H;
            let mut minus = inputs.clone();
            minus[i].data_mut()[j] -= H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            worst = worst.max(rel_err(fd, analytic[i][j]));
        }
    }
    worst
}

fn random(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum with fixed weights so the loss is not symmetric in outputs.
fn project(g: &mut Graph, v: Var, seed: u64) -> Var {
    let shape = g.value(v).shape().to_vec();
    let mut rng = seeded_rng(seed);
    let w = g.input(random(shape, &mut rng));
    let p = g.mul(v, w).unwrap();
    g.sum(p)
}

#[test]
fn conv1d_gradients() {
    let mut rng = seeded_rng(1);
    for case in 0..20 {
        let batch = rng.gen_range(1..=2);
        let c_in = rng.gen_range(1..=3);
        let c_out = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=4);
        let stride = rng.gen_range(1..=2);
        let padding = rng.gen_range(0..=2);
        let len = rng.gen_range(k.max(2)..=9);
        let x = random(vec![batch, c_in, len], &mut rng);
        let w = random(vec![c_out, c_in, k], &mut rng);
        let b = random(vec![c_out], &mut rng);
        let err = check(vec![x, w, b], &|g, v| {
            let y = g.conv1d(v[0], v[1], v[2], stride, padding).unwrap();
            project(g, y, case)
        });
        assert!(err < 1e-4, "case {case}: rel err {err}");
    }
}

#[test]
fn dense_gradients() {
    let mut rng = seeded_rng(2);
    for case in 0..20 {
        let n_in = rng.gen_range(1..=6);
        let n_out = rng.gen_range(1..=5);
        let x = if case % 2 == 0 {
            random(vec![n_in], &mut rng)
        } else {
            random(vec![rng.gen_range(1..=3), n_in], &mut rng)
        };
        let w = random(vec![n_out, n_in], &mut rng);
        let b = random(vec![n_out], &mut rng);
        let err = check(vec![x, w, b], &|g, v| {
            let y = g.dense(v[0], v[1], v[2]).unwrap();
            project(g, y, case)
        });
        assert!(err < 1e-4, "case {case}: rel err {err}");
    }
}

#[test]
fn elementwise_gradients() {
    let mut rng = seeded_rng(3);
    for case in 0..20 {
        let shape = vec![rng.gen_range(1..=3), rng.gen_range(1..=5)];
        // keep leaky-relu inputs away from the kink
        let mut a = random(shape.clone(), &mut rng);
        a.data_mut()
            .iter_mut()
            .for_each(|v| *v += 0.1 * v.signum());
        let b = random(shape.clone(), &mut rng);
        let err = check(vec![a, b], &|g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            let d = g.sub(s, v[1]).unwrap();
            let m = g.mul(d, v[1]).unwrap();
            let l = g.leaky_relu(v[0], 0.01).unwrap();
            let r = g.residual_add(l, m).unwrap();
            let e = g.exp(r);
            let q = g.square(e);
            let sg = g.sigmoid(q);
            let sc = g.scale(sg, 1.7);
            let sh = g.add_scalar(sc, -0.3);
            project(g, sh, case)
        });
        assert!(err < 1e-4, "case {case}: rel err {err}");
    }
}

#[test]
fn pooling_gradients() {
    let mut rng = seeded_rng(4);
    for case in 0..20 {
        let x = random(
            vec![rng.gen_range(1..=2), rng.gen_range(1..=4), rng.gen_range(1..=8)],
            &mut rng,
        );
        let err = check(vec![x], &|g, v| {
            let p = g.global_avg_pool(v[0]).unwrap();
            project(g, p, case)
        });
        assert!(err < 1e-4, "case {case}: rel err {err}");
    }
}

#[test]
fn cross_entropy_gradients() {
    let mut rng = seeded_rng(5);
    for case in 0..20 {
        let batch = rng.gen_range(1..=3);
        let classes = rng.gen_range(2..=6);
        let targets: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
        let logits = random(vec![batch, classes], &mut rng);
        let err = check(vec![logits], &|g, v| g.softmax_cross_entropy(v[0], &targets).unwrap());
        assert!(err < 1e-4, "case {case}: rel err {err}");
    }
}

#[test]
fn leaky_relu_negative_branch_slope() {
    let x = Tensor::from_vec(vec![-3.0]);
    let mut g = Graph::new();
    let v = g.input(x.clone().with_requires_grad());
    let y = g.leaky_relu(v, 0.01).unwrap();
    let s = g.sum(y);
    g.backward(s).unwrap();
    let analytic = g.grad(v).unwrap()[0];
    let f = |x: f64| if x >= 0.0 { x } else { 0.01 * x };
    let fd = (f(-3.0 + H) - f(-3.0 - H)) / (2.0 * H);
    assert!((analytic - 0.01).abs() < 1e-15);
    assert!((fd - analytic).abs() < 1e-6);
}

#[test]
fn reshape_and_mean_gradients() {
    let mut rng = seeded_rng(6);
    let x = random(vec![2, 6], &mut rng);
    let err = check(vec![x], &|g, v| {
        let r = g.reshape(v[0], vec![3, 4]).unwrap();
        let sq = g.square(r);
        g.mean(sq)
    });
    assert!(err < 1e-4);
}
