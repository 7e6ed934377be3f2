//! Dense oracles shared by the integration tests and the acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snapsci::adaptive::{online_gradient, online_loss, online_step, OnlineConfig, ScaleDenoiser};
use snapsci::model::{CfaOperator, ForwardModel, MaskStack, Plane, VideoCube};
use snapsci::priors::{
    cnn_backward, cnn_forward, Activation, CnnDenoiser, ConvLayer, DdnetParams, DdnetSpec, FeatureMap, PriorParams,
    TrainableDenoiser,
};
use snapsci::solvers::{q_update_from, x_update_closed, SolverState, Var};

pub type Check = Result<f64, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cube(h: usize, w: usize, c: usize, b: usize, rng: &mut ChaCha8Rng) -> VideoCube<f64> {
    VideoCube::from_vec(h, w, c, b, (0..h * w * c * b).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
}

pub fn random_plane(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Plane<f64> {
    Plane::from_vec(h, w, (0..h * w).map(|_| rng.random::<f64>() - 0.5).collect()).unwrap()
}

/// Tiny random problem: `h, w <= 8` (even when colour), `B <= 4`.
pub struct Instance {
    pub masks: MaskStack<f64>,
    pub cfa: Option<CfaOperator>,
}

impl Instance {
    pub fn random(color: bool, rng: &mut ChaCha8Rng) -> Self {
        let (h, w) = if color {
            (2 * rng.random_range(1..=4), 2 * rng.random_range(1..=4))
        } else {
            (rng.random_range(1..=8), rng.random_range(1..=8))
        };
        let b = rng.random_range(1..=4);
        let masks = if rng.random_bool(0.5) {
            MaskStack::random_binary(h, w, b, 0.5, rng)
        } else {
            MaskStack::random_uniform(h, w, b, 0.0, 1.0, rng)
        };
        Instance {
            masks,
            cfa: color.then(|| CfaOperator::new(h, w).unwrap()),
        }
    }

    pub fn model(&self) -> ForwardModel<'_, f64> {
        ForwardModel::new(&self.masks, self.cfa.as_ref()).unwrap()
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let c = if self.cfa.is_some() { 3 } else { 1 };
        (self.masks.height(), self.masks.width(), c, self.masks.frames())
    }
}

/// Matrix of a linear map given as a closure on flat vectors.
pub fn dense(n_in: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut cols = Vec::with_capacity(n_in);
    let mut e = vec![0.0; n_in];
    for j in 0..n_in {
        e[j] = 1.0;
        cols.push(DVector::from_vec(f(&e)));
        e[j] = 0.0;
    }
    DMatrix::from_columns(&cols)
}

fn cube_of(shape: (usize, usize, usize, usize), v: &[f64]) -> VideoCube<f64> {
    VideoCube::from_vec(shape.0, shape.1, shape.2, shape.3, v.to_vec()).unwrap()
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn max_entry(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &v| a.max(v.abs()))
}

/// Dense matrices of `H`, `T_M` and `A = H T_M` for an instance.
pub struct DenseOps {
    pub h: DMatrix<f64>,
    pub t: Option<DMatrix<f64>>,
    pub a: DMatrix<f64>,
    pub at: DMatrix<f64>,
    pub ht: DMatrix<f64>,
    pub tt: Option<DMatrix<f64>>,
}

pub fn dense_ops(inst: &Instance) -> DenseOps {
    let model = inst.model();
    let (h, w, c, b) = inst.dims();
    let mshape = (h, w, 1, b);
    let sshape = (h, w, c, b);
    let hm = dense(h * w * b, |v| inst.masks.apply_h(&cube_of(mshape, v)).unwrap().into_vec());
    let ht = dense(h * w, |v| {
        inst.masks.adjoint_h(&Plane::from_vec(h, w, v.to_vec()).unwrap()).unwrap().into_vec()
    });
    let a = dense(h * w * c * b, |v| model.apply(&cube_of(sshape, v)).unwrap().into_vec());
    let at = dense(h * w, |v| model.adjoint(&Plane::from_vec(h, w, v.to_vec()).unwrap()).unwrap().into_vec());
    let (t, tt) = match inst.cfa {
        Some(_) => (
            Some(dense(h * w * c * b, |v| model.mosaic(&cube_of(sshape, v)).unwrap().into_vec())),
            Some(dense(h * w * b, |v| model.mosaic_adjoint(&cube_of(mshape, v)).unwrap().into_vec())),
        ),
        None => (None, None),
    };
    DenseOps { h: hm, t, a, at, ht, tt }
}

/// Adjointness (inner products and dense transposes), diagonal `H H^T`,
/// `T T^T = I` and `T^T T` a 0/1 diagonal projector. Returns the largest
/// relative adjointness error.
pub fn operator_algebra(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for n in 0..instances {
        let inst = Instance::random(n % 2 == 1, &mut r);
        let model = inst.model();
        let (h, w, c, b) = inst.dims();
        let x = random_cube(h, w, c, b, &mut r);
        let y = random_plane(h, w, &mut r);
        let lhs: f64 = model.apply(&x).unwrap().as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        let rhs = x.dot(&model.adjoint(&y).unwrap());
        worst = worst.max(rel(lhs, rhs, 1e-300));
        let q = random_cube(h, w, 1, b, &mut r);
        let lhs: f64 = inst.masks.apply_h(&q).unwrap().as_slice().iter().zip(y.as_slice()).map(|(a, b)| a * b).sum();
        worst = worst.max(rel(lhs, q.dot(&inst.masks.adjoint_h(&y).unwrap()), 1e-300));
        if inst.cfa.is_some() {
            let lhs = model.mosaic(&x).unwrap().dot(&q);
            worst = worst.max(rel(lhs, x.dot(&model.mosaic_adjoint(&q).unwrap()), 1e-300));
        }

        let d = dense_ops(&inst);
        let scale = max_entry(&d.a).max(1e-300);
        let e = max_entry(&(&d.at - d.a.transpose())) / scale;
        worst = worst.max(e);
        worst = worst.max(max_entry(&(&d.ht - d.h.transpose())) / max_entry(&d.h).max(1e-300));

        let gram = &d.h * d.h.transpose();
        let r_diag = inst.masks.gram();
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let want = if i == j { r_diag.as_slice()[i] } else { 0.0 };
                if i != j && gram[(i, j)] != 0.0 {
                    return Err(format!("H H^T off-diagonal ({i},{j}) = {}", gram[(i, j)]));
                }
                if (gram[(i, j)] - want).abs() > 1e-14 * want.max(1.0) {
                    return Err(format!("H H^T diagonal {i}: {} vs r = {want}", gram[(i, j)]));
                }
            }
        }
        if let (Some(t), Some(tt)) = (&d.t, &d.tt) {
            if tt != &t.transpose() {
                return Err("mosaic adjoint is not the transpose".into());
            }
            let ttt = t * t.transpose();
            if ttt != DMatrix::identity(t.nrows(), t.nrows()) {
                return Err("T T^T != I".into());
            }
            let p = t.transpose() * t;
            for i in 0..p.nrows() {
                for j in 0..p.ncols() {
                    let v = p[(i, j)];
                    if (i != j && v != 0.0) || (i == j && v != 0.0 && v != 1.0) {
                        return Err(format!("T^T T entry ({i},{j}) = {v}"));
                    }
                }
            }
            if &p * &p != p {
                return Err("T^T T not idempotent".into());
            }
        }
        if worst > 1e-12 {
            return Err(format!("adjointness error {worst:e} on instance {n}"));
        }
    }
    Ok(worst)
}

fn lu_solve(m: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    m.lu().solve(&b).expect("oracle system is nonsingular")
}

fn rel_vec(a: &[f64], b: &DVector<f64>) -> f64 {
    let num: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.norm().max(1e-300)
}

pub struct RandomState {
    pub inst: Instance,
    pub state: SolverState<f64>,
    pub y: Plane<f64>,
}

pub fn random_state(color: bool, r: &mut ChaCha8Rng) -> RandomState {
    let inst = Instance::random(color, r);
    let (h, w, c, b) = inst.dims();
    let rho = 10f64.powf(r.random_range(-2.0..2.0));
    let tau = 10f64.powf(r.random_range(-2.0..2.0));
    let x0 = random_cube(h, w, c, b, r);
    let mut state = {
        let model = inst.model();
        SolverState::new(x0, &model, rho, tau).unwrap()
    };
    state.u = random_cube(h, w, 1, b, r);
    state.v = random_cube(h, w, c, b, r);
    state.w = random_cube(h, w, c, b, r);
    state.q = random_cube(h, w, 1, b, r);
    let y = random_plane(h, w, r);
    RandomState { inst, state, y }
}

/// `argmin_q 1/2||y - Hq||^2 + rho/2||q - (T x - u/rho)||^2` and
/// `argmin_x rho/2||q - T x + u/rho||^2 + tau/2||x - v - w/tau||^2`
/// against dense LU solves. Returns the largest relative error.
pub fn closed_form_oracles(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for n in 0..instances {
        let RandomState { inst, mut state, y } = random_state(n % 2 == 1, &mut r);
        let model = inst.model();
        let d = dense_ops(&inst);
        let (rho, tau) = (state.rho, state.tau);
        let nq = d.h.ncols();
        let nx = d.a.ncols();
        let t = d.t.clone().unwrap_or_else(|| DMatrix::identity(nq, nq));
        let xv = DVector::from_column_slice(state.x.as_slice());
        let uv = DVector::from_column_slice(state.u.as_slice());
        let yv = DVector::from_column_slice(y.as_slice());
        let p = &t * &xv - &uv / rho;
        let lhs = d.h.transpose() * &d.h + DMatrix::identity(nq, nq) * rho;
        let q_star = lu_solve(lhs, d.h.transpose() * &yv + &p * rho);
        q_update_from(&mut state, &y, &model, Var::X).unwrap();
        let e = rel_vec(state.q.as_slice(), &q_star);
        if e > 1e-8 {
            return Err(format!("q-step relative error {e:e} on instance {n}"));
        }
        worst = worst.max(e);

        let qv = DVector::from_column_slice(state.q.as_slice());
        let vv = DVector::from_column_slice(state.v.as_slice());
        let wv = DVector::from_column_slice(state.w.as_slice());
        let lhs = t.transpose() * &t * rho + DMatrix::identity(nx, nx) * tau;
        let rhs = t.transpose() * (&qv * rho + &uv) + &vv * tau + &wv;
        let x_star = lu_solve(lhs, rhs);
        x_update_closed(&mut state, &model).unwrap();
        let e = rel_vec(state.x.as_slice(), &x_star);
        if e > 1e-8 {
            return Err(format!("x-step relative error {e:e} on instance {n}"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Central difference of `f` along coordinate `i` of `theta`.
pub fn central_diff(theta: &[f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut t = theta.to_vec();
    t[i] = theta[i] + h;
    let fp = f(&t);
    t[i] = theta[i] - h;
    let fm = f(&t);
    (fp - fm) / (2.0 * h)
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Gradients below this magnitude are compared absolutely.
const FD_FLOOR: f64 = 1e-6;

/// Compares `analytic` against central differences at `samples` random
/// coordinates (all of them when `samples >= len`).
fn fd_check(
    name: &str,
    theta: &[f64],
    analytic: &[f64],
    samples: usize,
    r: &mut ChaCha8Rng,
    mut f: impl FnMut(&[f64]) -> f64,
) -> Check {
    let idx: Vec<usize> = if samples >= theta.len() {
        (0..theta.len()).collect()
    } else {
        (0..samples).map(|_| r.random_range(0..theta.len())).collect()
    };
    let mut worst: f64 = 0.0;
    for i in idx {
        let num = central_diff(theta, i, FD_STEP, &mut f);
        let e = rel(analytic[i], num, FD_FLOOR);
        if e > FD_TOL {
            return Err(format!("{name}: coordinate {i} analytic {} vs numeric {num} (rel {e:e})", analytic[i]));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

fn random_map(c: usize, h: usize, w: usize, r: &mut ChaCha8Rng) -> FeatureMap<f64> {
    FeatureMap::from_vec(c, h, w, (0..c * h * w).map(|_| r.random::<f64>() - 0.5).collect()).unwrap()
}

fn randomize(params: &mut PriorParams<f64>, r: &mut ChaCha8Rng) {
    let flat: Vec<f64> = (0..params.parameter_count()).map(|_| r.random::<f64>() - 0.5).collect();
    params.set_flat(&flat).unwrap();
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameter and input gradients of `<g, net(input)>` for one network.
fn network_check(name: &str, mut params: PriorParams<f64>, r: &mut ChaCha8Rng) -> Check {
    let (h, w) = (5, 4);
    let input = random_map(params.in_channels(), h, w, r);
    let g = random_map(params.out_channels(), h, w, r);
    let (_, cache) = params.forward_cached(&input).unwrap();
    let pattern = PriorParams::activation_pattern(&cache);
    let mut grads = params.zeros_like();
    let gin = params.backward(&cache, &g, &mut grads, true).unwrap().unwrap();
    let theta = params.to_flat();
    let mut worst = fd_check(&format!("{name} params"), &theta, &grads.to_flat(), usize::MAX, r, |t| {
        params.set_flat(t).unwrap();
        let (out, c) = params.forward_cached(&input).unwrap();
        assert_eq!(PriorParams::activation_pattern(&c), pattern, "{name}: step crossed a ReLU kink");
        dot(&out.data, &g.data)
    })?;
    params.set_flat(&theta).unwrap();
    let e = fd_check(&format!("{name} input"), &input.data, &gin.data, usize::MAX, r, |x| {
        let inp = FeatureMap::from_vec(input.channels, h, w, x.to_vec()).unwrap();
        dot(&params.forward(&inp).unwrap().data, &g.data)
    })?;
    worst = worst.max(e);
    Ok(worst)
}

/// Finite-difference checks of every trainable layer type, the CNN
/// denoiser, the DDNet demosaicer and the online update path.
pub fn gradient_suite(seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for act in [Activation::Relu, Activation::Linear] {
        let mut p = PriorParams { layers: vec![ConvLayer::zeros(2, 3, act)] };
        randomize(&mut p, &mut r);
        worst = worst.max(network_check(&format!("conv {}", act.tag()), p, &mut r)?);
    }
    let mut stack = PriorParams::zeros(2, 4, 2, 3);
    randomize(&mut stack, &mut r);
    worst = worst.max(network_check("conv stack", stack, &mut r)?);

    // CNN denoiser: parameters and input through the residual wrapper.
    let mut cnn = CnnDenoiser::<f64>::with_shape(6, 3, seed);
    let x = random_cube(6, 4, 1, 3, &mut r).map(|v| v + 0.5);
    let g = random_cube(6, 4, 1, 3, &mut r);
    let sigma = 25.0;
    let (pg, ig) = cnn_backward(&cnn.params, &x, sigma, &g).unwrap();
    let theta = cnn.parameters();
    worst = worst.max(fd_check("cnn params", &theta, &pg.to_flat(), 200, &mut r, |t| {
        cnn.set_parameters(t).unwrap();
        cnn_forward(&cnn.params, &x, sigma).unwrap().dot(&g)
    })?);
    cnn.set_parameters(&theta).unwrap();
    worst = worst.max(fd_check("cnn input", x.as_slice(), ig.as_slice(), usize::MAX, &mut r, |v| {
        let xi = cube_of(x.shape(), v);
        cnn_forward(&cnn.params, &xi, sigma).unwrap().dot(&g)
    })?);

    // DDNet: parameters of both cascaded networks.
    let spec = DdnetSpec { window: 3, width: 4, depth: 2 };
    let mut dd = DdnetParams::<f64>::new(spec, seed);
    let flat: Vec<f64> = dd.to_flat().iter().map(|_| (r.random::<f64>() - 0.5) * 0.5).collect();
    dd.set_flat(&flat).unwrap();
    let m = random_cube(4, 6, 1, 3, &mut r).map(|v| v + 0.5);
    let g = random_cube(4, 6, 3, 3, &mut r);
    let grad = dd.backward(&m, &g).unwrap().to_flat();
    worst = worst.max(fd_check("ddnet params", &flat, &grad, 200, &mut r, |t| {
        dd.set_flat(t).unwrap();
        dd.forward(&m).unwrap().dot(&g)
    })?);

    // Online loss gradient through the CNN and the colour forward model.
    let masks = MaskStack::random_uniform(4, 4, 2, 0.0, 1.0, &mut r);
    let cfa = CfaOperator::new(4, 4).unwrap();
    let model = ForwardModel::new(&masks, Some(&cfa)).unwrap();
    let input = random_cube(4, 4, 3, 2, &mut r).map(|v| v + 0.5);
    let y = random_plane(4, 4, &mut r).map_plane(|v| v + 1.0);
    let mut cnn = CnnDenoiser::<f64>::with_shape(5, 3, seed + 1);
    let theta = cnn.parameters();
    let grad = online_gradient(&cnn, &y, &model, &input, sigma).unwrap();
    worst = worst.max(fd_check("online loss", &theta, &grad, 200, &mut r, |t| {
        cnn.set_parameters(t).unwrap();
        online_loss(&y, &masks, Some(&cfa), &cnn.denoise_cube(&input, sigma)).unwrap()
    })?);

    // One plain SGD step moves the weights by exactly lr * gradient.
    cnn.set_parameters(&theta).unwrap();
    let lr = 1e-3;
    let cfg = OnlineConfig {
        lr,
        backtracking: false,
        ..OnlineConfig::default()
    };
    online_step(&mut cnn, &y, &model, &input, sigma, &cfg).unwrap();
    let moved: Vec<f64> = theta.iter().zip(cnn.parameters()).map(|(a, b)| (a - b) / lr).collect();
    cnn.set_parameters(&theta).unwrap();
    worst = worst.max(fd_check("online step", &theta, &moved, 200, &mut r, |t| {
        cnn.set_parameters(t).unwrap();
        online_loss(&y, &masks, Some(&cfa), &cnn.denoise_cube(&input, sigma)).unwrap()
    })?);

    // Scale denoiser: l(theta) = ||y - theta A x||^2 has a closed-form slope.
    let s = ScaleDenoiser { theta: 0.7 };
    let ax = model.apply(&input).unwrap();
    let closed: f64 = -2.0 * dot(ax.as_slice(), &y.as_slice().iter().zip(ax.as_slice()).map(|(a, b)| a - 0.7 * b).collect::<Vec<_>>());
    let g = online_gradient(&s, &y, &model, &input, sigma).unwrap()[0];
    let e = (g - closed).abs() / closed.abs().max(1e-300);
    if e > 1e-6 {
        return Err(format!("scale denoiser gradient {g} vs closed form {closed}"));
    }
    Ok(worst)
}

trait PlaneExt {
    fn map_plane(&self, f: impl Fn(f64) -> f64) -> Plane<f64>;
}

impl PlaneExt for Plane<f64> {
    fn map_plane(&self, f: impl Fn(f64) -> f64) -> Plane<f64> {
        Plane::from_vec(self.height(), self.width(), self.as_slice().iter().map(|&v| f(v)).collect()).unwrap()
    }
}

trait DenoiseCube {
    fn denoise_cube(&self, x: &VideoCube<f64>, sigma: f64) -> VideoCube<f64>;
}

impl DenoiseCube for CnnDenoiser<f64> {
    fn denoise_cube(&self, x: &VideoCube<f64>, sigma: f64) -> VideoCube<f64> {
        cnn_forward(&self.params, x, sigma).unwrap()
    }
}
