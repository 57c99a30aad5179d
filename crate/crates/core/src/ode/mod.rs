//! ODE systems, numerical integration and forward sensitivities.
//!
//! A system exposes derivatives of its right-hand side with respect to the
//! joint variable `z = (x, xi)` (states first, then parameters) through a
//! [`Jet`]. Forward sensitivities of order 1–3 follow from the chain rule
//! applied to the extended sensitivities `Z_i = dz/dxi^i = (S_i, e_i)`.

mod dopri;
mod systems;

pub use dopri::{solve, Tolerances};
pub use systems::{FitzhughNagumo, LotkaVolterra, ZeroSystem};

use crate::error::{Error, Result};

/// Right-hand side value and derivatives up to third order in `z = (x, xi)`.
#[derive(Debug, Clone)]
pub struct Jet {
    dx: usize,
    n: usize,
    order: usize,
    f: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Vec<f64>,
}

impl Jet {
    pub fn new(state_dim: usize, param_dim: usize, order: usize) -> Self {
        let n = state_dim + param_dim;
        Self {
            dx: state_dim,
            n,
            order,
            f: vec![0.0; state_dim],
            d1: vec![0.0; state_dim * n],
            d2: if order >= 2 { vec![0.0; state_dim * n * n] } else { Vec::new() },
            d3: if order >= 3 { vec![0.0; state_dim * n * n * n] } else { Vec::new() },
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of joint variables `D_x + D_xi`.
    pub fn vars(&self) -> usize {
        self.n
    }

    pub fn state_dim(&self) -> usize {
        self.dx
    }

    pub fn clear(&mut self) {
        self.f.iter_mut().for_each(|v| *v = 0.0);
        self.d1.iter_mut().for_each(|v| *v = 0.0);
        self.d2.iter_mut().for_each(|v| *v = 0.0);
        self.d3.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn f(&self, l: usize) -> f64 {
        self.f[l]
    }
    pub fn d1(&self, l: usize, a: usize) -> f64 {
        self.d1[l * self.n + a]
    }
    pub fn d2(&self, l: usize, a: usize, b: usize) -> f64 {
        self.d2[(l * self.n + a) * self.n + b]
    }
    pub fn d3(&self, l: usize, a: usize, b: usize, c: usize) -> f64 {
        self.d3[((l * self.n + a) * self.n + b) * self.n + c]
    }

    pub fn set_f(&mut self, l: usize, v: f64) {
        self.f[l] = v;
    }
    pub fn set1(&mut self, l: usize, a: usize, v: f64) {
        self.d1[l * self.n + a] = v;
    }
    /// Sets a second derivative and its mirror entry. Ignored below order 2.
    pub fn set2(&mut self, l: usize, a: usize, b: usize, v: f64) {
        if self.order < 2 {
            return;
        }
        let n = self.n;
        self.d2[(l * n + a) * n + b] = v;
        self.d2[(l * n + b) * n + a] = v;
    }
    /// Sets a third derivative and all index permutations. Ignored below order 3.
    pub fn set3(&mut self, l: usize, a: usize, b: usize, c: usize, v: f64) {
        if self.order < 3 {
            return;
        }
        let n = self.n;
        for (p, q, r) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
            self.d3[((l * n + p) * n + q) * n + r] = v;
        }
    }
}

/// A parametrised system `x' = f(x, xi, t)`.
pub trait OdeSystem: Send + Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn name(&self) -> &str;
    /// Highest derivative order the system can supply in [`OdeSystem::jet`].
    fn max_order(&self) -> usize {
        3
    }
    /// Reject parameter values at which the right-hand side is singular.
    fn check_params(&self, _params: &[f64]) -> Result<()> {
        Ok(())
    }
    fn rhs(&self, t: f64, x: &[f64], params: &[f64], dx: &mut [f64]);
    /// Fill `jet` (already cleared) up to `jet.order()`.
    fn jet(&self, t: f64, x: &[f64], params: &[f64], jet: &mut Jet);
}

/// Solution sampled at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `states[t][d]`.
    pub states: Vec<Vec<f64>>,
}

/// State and parameter sensitivities at the observation times.
///
/// Layout: `s(t, i, l) = dX_l/dxi^i`, `ds(t, k, i, l) = d^2 X_l / dxi^k dxi^i`,
/// `dds(t, j, k, i, l) = d^3 X_l / dxi^j dxi^k dxi^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityState {
    pub times: Vec<f64>,
    state_dim: usize,
    param_dim: usize,
    order: usize,
    x: Vec<f64>,
    s: Vec<f64>,
    ds: Vec<f64>,
    dds: Vec<f64>,
}

impl SensitivityState {
    pub fn zeros(times: Vec<f64>, state_dim: usize, param_dim: usize, order: usize) -> Self {
        let tau = times.len();
        let (dx, d) = (state_dim, param_dim);
        Self {
            times,
            state_dim,
            param_dim,
            order,
            x: vec![0.0; tau * dx],
            s: vec![0.0; tau * d * dx],
            ds: if order >= 2 { vec![0.0; tau * d * d * dx] } else { Vec::new() },
            dds: if order >= 3 { vec![0.0; tau * d * d * d * dx] } else { Vec::new() },
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }
    pub fn param_dim(&self) -> usize {
        self.param_dim
    }
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn x(&self, t: usize, l: usize) -> f64 {
        self.x[t * self.state_dim + l]
    }
    pub fn s(&self, t: usize, i: usize, l: usize) -> f64 {
        self.s[(t * self.param_dim + i) * self.state_dim + l]
    }
    pub fn ds(&self, t: usize, k: usize, i: usize, l: usize) -> f64 {
        let d = self.param_dim;
        self.ds[((t * d + k) * d + i) * self.state_dim + l]
    }
    pub fn dds(&self, t: usize, j: usize, k: usize, i: usize, l: usize) -> f64 {
        let d = self.param_dim;
        self.dds[(((t * d + j) * d + k) * d + i) * self.state_dim + l]
    }

    pub fn x_mut(&mut self, t: usize, l: usize) -> &mut f64 {
        &mut self.x[t * self.state_dim + l]
    }
    pub fn s_mut(&mut self, t: usize, i: usize, l: usize) -> &mut f64 {
        &mut self.s[(t * self.param_dim + i) * self.state_dim + l]
    }
    pub fn ds_mut(&mut self, t: usize, k: usize, i: usize, l: usize) -> &mut f64 {
        let d = self.param_dim;
        &mut self.ds[((t * d + k) * d + i) * self.state_dim + l]
    }
    pub fn dds_mut(&mut self, t: usize, j: usize, k: usize, i: usize, l: usize) -> &mut f64 {
        let d = self.param_dim;
        &mut self.dds[(((t * d + j) * d + k) * d + i) * self.state_dim + l]
    }

    pub fn trajectory(&self) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: (0..self.n_times())
                .map(|t| (0..self.state_dim).map(|l| self.x(t, l)).collect())
                .collect(),
        }
    }

    /// Sensitivities of `ln X`, for noise models defined on the log scale.
    pub fn log_transform(&self) -> Result<SensitivityState> {
        let mut out = SensitivityState::zeros(self.times.clone(), self.state_dim, self.param_dim, self.order);
        let d = self.param_dim;
        for t in 0..self.n_times() {
            for l in 0..self.state_dim {
                let x = self.x(t, l);
                if x <= 0.0 {
                    return Err(Error::Domain(format!(
                        "log-scale noise needs positive states; X = {x} at time index {t}"
                    )));
                }
                *out.x_mut(t, l) = x.ln();
                for i in 0..d {
                    *out.s_mut(t, i, l) = self.s(t, i, l) / x;
                }
                if self.order >= 2 {
                    for k in 0..d {
                        for i in 0..d {
                            *out.ds_mut(t, k, i, l) =
                                self.ds(t, k, i, l) / x - self.s(t, i, l) * self.s(t, k, l) / (x * x);
                        }
                    }
                }
                if self.order >= 3 {
                    for j in 0..d {
                        for k in 0..d {
                            for i in 0..d {
                                let (si, sk, sj) = (self.s(t, i, l), self.s(t, k, l), self.s(t, j, l));
                                *out.dds_mut(t, j, k, i, l) = self.dds(t, j, k, i, l) / x
                                    - (self.ds(t, k, i, l) * sj
                                        + self.ds(t, j, i, l) * sk
                                        + self.ds(t, j, k, l) * si)
                                        / (x * x)
                                    + 2.0 * si * sk * sj / (x * x * x);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Integrate the system state only.
pub fn integrate(
    system: &dyn OdeSystem,
    x0: &[f64],
    params: &[f64],
    t0: f64,
    times: &[f64],
    tol: &Tolerances,
) -> Result<Trajectory> {
    check_dims(system, x0, params)?;
    system.check_params(params)?;
    let states = solve(|t, y, dy| system.rhs(t, y, params, dy), t0, x0, times, tol)?;
    Ok(Trajectory { times: times.to_vec(), states })
}

/// Jointly integrate the state and its sensitivities up to `order` (1, 2 or 3).
///
/// The initial state is taken to be independent of the parameters, so every
/// sensitivity starts at zero.
pub fn integrate_with_sensitivities(
    system: &dyn OdeSystem,
    x0: &[f64],
    params: &[f64],
    t0: f64,
    times: &[f64],
    order: usize,
    tol: &Tolerances,
) -> Result<SensitivityState> {
    check_dims(system, x0, params)?;
    if !(1..=3).contains(&order) {
        return Err(Error::Config(format!("sensitivity order must be 1, 2 or 3, got {order}")));
    }
    if system.max_order() < order {
        return Err(Error::Capability(format!(
            "system '{}' provides derivatives up to order {}, {} requested",
            system.name(),
            system.max_order(),
            order
        )));
    }
    system.check_params(params)?;
    let dx = system.state_dim();
    let d = system.param_dim();
    let layout = Layout { dx, d, order };
    let mut y0 = vec![0.0; layout.len()];
    y0[..dx].copy_from_slice(x0);

    let mut jet = Jet::new(dx, d, order);
    let mut work = Workspace::new(dx, d, order);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        jet.clear();
        system.jet(t, &y[..dx], params, &mut jet);
        sensitivity_rhs(&layout, &jet, y, dy, &mut work);
    };
    let ys = solve(rhs, t0, &y0, times, tol)?;

    let mut out = SensitivityState::zeros(times.to_vec(), dx, d, order);
    for (ti, y) in ys.iter().enumerate() {
        for l in 0..dx {
            *out.x_mut(ti, l) = y[l];
            for i in 0..d {
                *out.s_mut(ti, i, l) = y[layout.s(i, l)];
                if order >= 2 {
                    for k in 0..d {
                        *out.ds_mut(ti, k, i, l) = y[layout.ds(k, i, l)];
                        if order >= 3 {
                            for j in 0..d {
                                *out.dds_mut(ti, j, k, i, l) = y[layout.dds(j, k, i, l)];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn check_dims(system: &dyn OdeSystem, x0: &[f64], params: &[f64]) -> Result<()> {
    if x0.len() != system.state_dim() || params.len() != system.param_dim() {
        return Err(Error::Shape(format!(
            "system '{}' expects {} states and {} parameters, got {} and {}",
            system.name(),
            system.state_dim(),
            system.param_dim(),
            x0.len(),
            params.len()
        )));
    }
    Ok(())
}

/// Offsets of the blocks in the augmented state vector.
struct Layout {
    dx: usize,
    d: usize,
    order: usize,
}

impl Layout {
    fn len(&self) -> usize {
        let (dx, d) = (self.dx, self.d);
        let mut n = dx + d * dx;
        if self.order >= 2 {
            n += d * d * dx;
        }
        if self.order >= 3 {
            n += d * d * d * dx;
        }
        n
    }
    fn s(&self, i: usize, l: usize) -> usize {
        self.dx + i * self.dx + l
    }
    fn ds(&self, k: usize, i: usize, l: usize) -> usize {
        self.dx + self.d * self.dx + (k * self.d + i) * self.dx + l
    }
    fn dds(&self, j: usize, k: usize, i: usize, l: usize) -> usize {
        let (dx, d) = (self.dx, self.d);
        dx + d * dx + d * d * dx + ((j * d + k) * d + i) * dx + l
    }
}

/// Scratch buffers for the extended sensitivities.
struct Workspace {
    /// `z[i][a]`: extended first sensitivities `(S_i, e_i)`.
    z: Vec<Vec<f64>>,
    /// `dz[k][i][a]`: `(d_k S_i, 0)`.
    dz: Vec<Vec<Vec<f64>>>,
    /// `t[k][l][a] = f_ab Z_k^b`.
    t: Vec<Vec<Vec<f64>>>,
    /// `u[j][l][a][b] = f_abc Z_j^c`.
    u: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Workspace {
    fn new(dx: usize, d: usize, order: usize) -> Self {
        let n = dx + d;
        Self {
            z: vec![vec![0.0; n]; d],
            dz: vec![vec![vec![0.0; n]; d]; d],
            t: if order >= 2 { vec![vec![vec![0.0; n]; dx]; d] } else { Vec::new() },
            u: if order >= 3 { vec![vec![vec![vec![0.0; n]; n]; dx]; d] } else { Vec::new() },
        }
    }
}

fn sensitivity_rhs(lay: &Layout, jet: &Jet, y: &[f64], dy: &mut [f64], w: &mut Workspace) {
    let (dx, d, order) = (lay.dx, lay.d, lay.order);
    let n = dx + d;
    for l in 0..dx {
        dy[l] = jet.f(l);
    }
    for i in 0..d {
        for a in 0..n {
            w.z[i][a] = if a < dx { y[lay.s(i, a)] } else if a - dx == i { 1.0 } else { 0.0 };
        }
    }

    // dS_i/dt = f_a Z_i^a
    for i in 0..d {
        for l in 0..dx {
            dy[lay.s(i, l)] = (0..n).map(|a| jet.d1(l, a) * w.z[i][a]).sum();
        }
    }
    if order < 2 {
        return;
    }
    for k in 0..d {
        for i in 0..d {
            for a in 0..n {
                w.dz[k][i][a] = if a < dx { y[lay.ds(k, i, a)] } else { 0.0 };
            }
        }
        for l in 0..dx {
            for a in 0..n {
                w.t[k][l][a] = (0..n).map(|b| jet.d2(l, a, b) * w.z[k][b]).sum();
            }
        }
    }
    let (z, dz, t) = (&w.z, &w.dz, &w.t);

    // d(d_k S_i)/dt = f_ab Z_i^a Z_k^b + f_a dZ_ki^a, symmetric in (k, i)
    for k in 0..d {
        for i in k..d {
            for l in 0..dx {
                let acc: f64 = (0..n).map(|a| z[i][a] * t[k][l][a] + jet.d1(l, a) * dz[k][i][a]).sum();
                dy[lay.ds(k, i, l)] = acc;
                dy[lay.ds(i, k, l)] = acc;
            }
        }
    }
    if order < 3 {
        return;
    }
    for j in 0..d {
        for l in 0..dx {
            for a in 0..n {
                for b in 0..n {
                    w.u[j][l][a][b] = (0..n).map(|c| jet.d3(l, a, b, c) * w.z[j][c]).sum();
                }
            }
        }
    }
    let u = &w.u;
    // d(d_j d_k S_i)/dt = f_abc Z_i^a Z_k^b Z_j^c
    //   + f_ab (dZ_ji^a Z_k^b + Z_i^a dZ_jk^b + dZ_ki^a Z_j^b) + f_a ddZ_jki^a
    for j in 0..d {
        for k in 0..d {
            for i in 0..d {
                for l in 0..dx {
                    let mut acc = 0.0;
                    for a in 0..n {
                        let ua: f64 = (0..n).map(|b| u[j][l][a][b] * z[k][b]).sum();
                        acc += z[i][a] * ua
                            + dz[j][i][a] * t[k][l][a]
                            + dz[j][k][a] * t[i][l][a]
                            + dz[k][i][a] * t[j][l][a];
                        if a < dx {
                            acc += jet.d1(l, a) * y[lay.dds(j, k, i, a)];
                        }
                    }
                    dy[lay.dds(j, k, i, l)] = acc;
                }
            }
        }
    }
}
