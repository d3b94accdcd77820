//! Shared fixtures for the integration tests: a central-difference gradient
//! checker and the small models it is run on.
#![allow(dead_code)]

use ndarray::Array2;
use pgos_core::autodiff::{Mat, Tape, Var};
use pgos_core::embedder::{
    batch_objective, loss_dc, loss_ips, loss_pc, loss_recon_graph, BatchInput, Decoder, Embedder, EmbedderConfig,
    Encoder, PrototypeSet,
};
use pgos_core::graph::{augment, AugmentationConfig, Graph};
use pgos_core::rng::{stream, Rng};
use pgos_core::sac::{q_min_on_tape, Actor, TwinCritics};
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

pub struct GradReport {
    pub name: &'static str,
    pub params: usize,
    /// Per-coordinate `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`.
    pub errors: Vec<f64>,
}

impl GradReport {
    pub fn fraction_within(&self, tol: f64) -> f64 {
        self.errors.iter().filter(|&&e| e <= tol).count() as f64 / self.errors.len() as f64
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().cloned().fold(0.0, f64::max)
    }
}

/// `build` puts a model with the given parameter values on a fresh tape and
/// returns the scalar objective together with the parameter variables.
pub fn check_gradients(
    name: &'static str,
    params: Vec<Mat>,
    build: impl Fn(&Tape, &[Mat]) -> (Var, Vec<Var>),
) -> GradReport {
    let t = Tape::new();
    let (out, vars) = build(&t, &params);
    let analytic = t.backward(out).collect(&vars);
    let value = |p: &[Mat]| {
        let t = Tape::new();
        let (o, _) = build(&t, p);
        t.scalar_value(o)
    };
    let mut errors = Vec::new();
    for (pi, m) in params.iter().enumerate() {
        for idx in 0..m.len() {
            let (r, c) = (idx / m.ncols(), idx % m.ncols());
            let mut plus = params.clone();
            plus[pi][[r, c]] += FD_STEP;
            let mut minus = params.clone();
            minus[pi][[r, c]] -= FD_STEP;
            let numeric = (value(&plus) - value(&minus)) / (2.0 * FD_STEP);
            let a = analytic[pi][[r, c]];
            errors.push((a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR));
        }
    }
    GradReport { name, params: params.iter().map(Mat::len).sum(), errors }
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn bind_all(t: &Tape, p: &[Mat]) -> Vec<Var> {
    p.iter().map(|m| t.var(m.clone())).collect()
}

pub fn dc_case() -> GradReport {
    let mut rng = stream(1, "fd-dc", 0);
    let params = vec![gaussian(5, 3, &mut rng), gaussian(5, 3, &mut rng)];
    check_gradients("L_DC", params, |t, p| {
        let v = bind_all(t, p);
        let z1 = t.normalize_rows(v[0]);
        let z2 = t.normalize_rows(v[1]);
        (loss_dc(t, z1, z2, &[0, 1, 0, 2, 1], &[0, 1, 1, 2, 2], 0.5), v)
    })
}

pub fn pc_case() -> GradReport {
    let mut rng = stream(1, "fd-pc", 0);
    let params = vec![gaussian(5, 3, &mut rng), gaussian(5, 3, &mut rng), gaussian(3, 3, &mut rng)];
    check_gradients("L_PC", params, |t, p| {
        let v = bind_all(t, p);
        let z1 = t.normalize_rows(v[0]);
        let z2 = t.normalize_rows(v[1]);
        let c = t.normalize_rows(v[2]);
        (loss_pc(t, z1, z2, c, 0.5), v)
    })
}

pub fn ips_case() -> GradReport {
    let mut rng = stream(1, "fd-ips", 0);
    check_gradients("L_IPS", vec![gaussian(4, 3, &mut rng)], |t, p| {
        let v = bind_all(t, p);
        let c = t.normalize_rows(v[0]);
        (loss_ips(t, c), v)
    })
}

pub fn small_graphs(count: usize, feature_dim: usize, seed: u64) -> Vec<Graph> {
    let mut rng = stream(seed, "fd-graphs", 0);
    (0..count)
        .map(|i| {
            let n = 4 + i % 3;
            let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|j| (j, j + 1)).collect();
            edges.push((0, n - 1));
            if n > 4 {
                edges.push((1, 3));
            }
            Graph::from_edges(n, &edges, gaussian(n, feature_dim, &mut rng)).unwrap()
        })
        .collect()
}

fn small_decoder(rng: &mut Rng) -> Decoder {
    Decoder::new(3, 4, 2, 2, rng)
}

fn with_params<T: Clone>(model: &T, values: &[Mat], params_mut: impl Fn(&mut T) -> Vec<&mut Mat>) -> T {
    let mut m = model.clone();
    for (dst, src) in params_mut(&mut m).into_iter().zip(values) {
        dst.assign(src);
    }
    m
}

pub fn recon_case() -> GradReport {
    let mut rng = stream(1, "fd-recon", 0);
    let decoder = small_decoder(&mut rng);
    let g = small_graphs(1, 2, 3).remove(0);
    let noise = gaussian(g.n(), 2, &mut rng);
    let mut params: Vec<Mat> = decoder.params().into_iter().cloned().collect();
    params.push(gaussian(1, 3, &mut rng));
    check_gradients("L_recon", params, move |t, p| {
        let d = with_params(&decoder, &p[..p.len() - 1], |m| m.params_mut());
        let dv = d.bind(t);
        let latent = t.var(p[p.len() - 1].clone());
        let out = dv.decode(t, latent, noise.clone());
        let mut vars = dv.vars();
        vars.push(latent);
        (loss_recon_graph(t, &g, out, 1.0).0, vars)
    })
}

pub fn total_case() -> GradReport {
    let mut rng = stream(1, "fd-total", 0);
    let emb = Embedder {
        encoder: Encoder::new(2, &[4], 3, &mut rng),
        decoder: small_decoder(&mut rng),
        prototypes: PrototypeSet::new(gaussian(3, 3, &mut rng), 0.5).unwrap(),
    };
    let cfg = EmbedderConfig { dim: 3, k: 3, tau: 0.5, gamma: 0.1, ..EmbedderConfig::default() };
    let graphs = small_graphs(3, 2, 5);
    let aug = AugmentationConfig { edge_drop_p: 0.2, feat_mask_p: 0.2 };
    let view1: Vec<Graph> = graphs.iter().map(|g| augment(g, &aug, &mut rng)).collect();
    let view2: Vec<Graph> = graphs.iter().map(|g| augment(g, &aug, &mut rng)).collect();
    let noise: Vec<Mat> = graphs.iter().map(|g| gaussian(g.n(), 2, &mut rng)).collect();
    let params: Vec<Mat> = emb.params().into_iter().cloned().collect();
    check_gradients("L_total", params, move |t, p| {
        let e = with_params(&emb, p, |m| m.params_mut());
        let vars = e.bind(t);
        let batch = BatchInput {
            graphs: graphs.iter().collect(),
            view1: view1.clone(),
            view2: view2.clone(),
            noise: noise.clone(),
        };
        let losses = batch_objective(t, &vars, &batch, &cfg).unwrap();
        (losses.total, vars.vars())
    })
}

pub fn actor_case() -> GradReport {
    let mut rng = stream(1, "fd-actor", 0);
    let actor = Actor::new(2, &[6], 0.3, &mut rng);
    let critics = TwinCritics::new(2, &[6], &mut rng);
    let states = gaussian(6, 2, &mut rng);
    let eps = gaussian(6, 2, &mut rng);
    let params: Vec<Mat> = actor.net.params().into_iter().cloned().collect();
    check_gradients("actor", params, move |t, p| {
        let mut a = actor.clone();
        for (dst, src) in a.net.params_mut().into_iter().zip(p) {
            dst.assign(src);
        }
        let av = a.bind(t);
        let cv = critics.bind(t, false);
        let s = t.constant(states.clone());
        let (act, lp) = av.sample(t, s, eps.clone());
        let q = q_min_on_tape(t, &cv, s, act);
        let weighted = t.scale(lp, 0.2);
        let diff = t.sub(weighted, q);
        (t.mean(diff), av.vars())
    })
}

/// Every case with its relative-error tolerance.
pub fn gradient_cases() -> Vec<(GradReport, f64)> {
    vec![
        (dc_case(), 1e-4),
        (pc_case(), 1e-4),
        (ips_case(), 1e-4),
        (recon_case(), 1e-4),
        (total_case(), 1e-4),
        (actor_case(), 1e-3),
    ]
}
