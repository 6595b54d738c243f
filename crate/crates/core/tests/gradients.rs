//! Central-difference checks of the hand-written backward pass on
//! instances with random biases and unnormalized prototypes, where the loss
//! is strongly curved and a finer step is needed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pointdr::bank::MemoryBank;
use pointdr::labels::{TrainId, IGNORED};
use pointdr::loss::{contrastive_loss, cross_entropy};
use pointdr::matrix::Mat;
use pointdr::model::{Model, ModelConfig};

fn random_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect())
}

struct Instance {
    model: Model,
    xw: Mat,
    yw: Vec<TrainId>,
    xs: Mat,
    ys: Vec<TrainId>,
    bank: MemoryBank,
    lambda: f64,
    tau: f64,
}

impl Instance {
    fn random(seed: u64) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig {
            input_dim: r.gen_range(2..=5),
            hidden: vec![r.gen_range(3..=6)],
            embed_dim: r.gen_range(2..=4),
            num_classes: r.gen_range(2..=4),
            voxel_size: 0.5,
        };
        let mut model = Model::new(cfg.clone(), seed).unwrap();
        for i in 0..model.num_params() {
            model.set_param(i, model.param(i) + r.gen_range(-0.2..0.2));
        }
        let n = r.gen_range(2..=6);
        let c = cfg.num_classes as u8;
        Self {
            xw: random_mat(&mut r, n, cfg.input_dim),
            yw: (0..n).map(|_| r.gen_range(0..c)).collect(),
            xs: random_mat(&mut r, n, cfg.input_dim),
            ys: (0..n).map(|_| if r.gen_bool(0.2) { IGNORED } else { r.gen_range(0..c) }).collect(),
            bank: MemoryBank::from_parts(random_mat(&mut r, cfg.num_classes, cfg.embed_dim), 0.9, vec![true; cfg.num_classes])
                .unwrap(),
            lambda: r.gen_range(0.1..1.0),
            tau: r.gen_range(0.1..1.0),
            model,
        }
    }

    fn loss(&self, model: &Model) -> f64 {
        let w = model.infer(&self.xw).unwrap();
        let s = model.infer(&self.xs).unwrap();
        cross_entropy(&w.logits, &self.yw).unwrap().loss
            + self.lambda * contrastive_loss(&s.embeddings, &self.ys, &self.bank, self.tau).unwrap().loss
    }

    fn analytic(&mut self) -> Vec<f64> {
        let m = &mut self.model;
        m.zero_grad();
        let w = m.forward(&self.xw).unwrap();
        let ce = cross_entropy(&w.logits, &self.yw).unwrap();
        m.backward(None, Some(&ce.grad)).unwrap();
        let s = m.forward(&self.xs).unwrap();
        let mut ct = contrastive_loss(&s.embeddings, &self.ys, &self.bank, self.tau).unwrap();
        ct.grad.scale(self.lambda);
        m.backward(Some(&ct.grad), None).unwrap();
        (0..m.num_params()).map(|i| m.grad(i)).collect()
    }
}

#[test]
fn fine_step_agrees_on_curved_instances() {
    let h = 1e-6;
    let mut agree = 0;
    let mut total = 0;
    for seed in 0..30 {
        let mut inst = Instance::random(seed);
        let grads = inst.analytic();
        let mut probe = inst.model.clone();
        for (i, &g) in grads.iter().enumerate() {
            let p = probe.param(i);
            probe.set_param(i, p + h);
            let plus = inst.loss(&probe);
            probe.set_param(i, p - h);
            let minus = inst.loss(&probe);
            probe.set_param(i, p);
            let numeric = (plus - minus) / (2.0 * h);
            total += 1;
            if (g - numeric).abs() <= 1e-5 * g.abs().max(numeric.abs()).max(1e-3) {
                agree += 1;
            }
        }
    }
    // ReLU kinks inside a stencil are rare at this step; allow a handful.
    assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total} parameters agree");
}

#[test]
fn contrastive_gradient_matches_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (n, d, c) = (r.gen_range(1..6), r.gen_range(1..5), r.gen_range(1..5));
        let f = random_mat(&mut r, n, d);
        let labels: Vec<TrainId> = (0..n).map(|_| r.gen_range(0..c as u8)).collect();
        let bank = MemoryBank::from_parts(random_mat(&mut r, c, d), 0.5, vec![true; c]).unwrap();
        let tau = r.gen_range(0.1..1.0);
        let out = contrastive_loss(&f, &labels, &bank, tau).unwrap();
        let h = 1e-6;
        for k in 0..n * d {
            let mut p = f.clone();
            p.as_mut_slice()[k] += h;
            let mut m = f.clone();
            m.as_mut_slice()[k] -= h;
            let fd = (contrastive_loss(&p, &labels, &bank, tau).unwrap().loss
                - contrastive_loss(&m, &labels, &bank, tau).unwrap().loss)
                / (2.0 * h);
            assert!((fd - out.grad.as_slice()[k]).abs() < 1e-6, "{fd} vs {}", out.grad.as_slice()[k]);
        }
    }
}
