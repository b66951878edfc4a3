//! Cone arithmetic for the product cone `R₊^l × Q^{m_1} × … × Q^{m_k}`:
//! Jordan products, Nesterov-Todd scalings and step lengths.

/// Position of every block inside a stacked slack/dual vector.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ConeLayout {
    pub lp: usize,
    /// `(offset, dim)` of each second-order cone.
    pub socs: Vec<(usize, usize)>,
}

impl ConeLayout {
    pub fn dim(&self) -> usize {
        self.lp + self.socs.iter().map(|(_, d)| d).sum::<usize>()
    }

    /// Barrier degree: one per LP coordinate and one per cone.
    pub fn degree(&self) -> usize {
        self.lp + self.socs.len()
    }

    /// The identity element `e`.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[..self.lp].iter_mut().for_each(|v| *v = 1.0);
        for &(off, _) in &self.socs {
            e[off] = 1.0;
        }
        e
    }

    /// Jordan product `u ∘ v`.
    pub fn circ(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for i in 0..self.lp {
            out[i] = u[i] * v[i];
        }
        for &(off, dim) in &self.socs {
            let (u0, u1) = (u[off], &u[off + 1..off + dim]);
            let (v0, v1) = (v[off], &v[off + 1..off + dim]);
            out[off] = dot(&u[off..off + dim], &v[off..off + dim]);
            for k in 0..dim - 1 {
                out[off + 1 + k] = u0 * v1[k] + v0 * u1[k];
            }
        }
        out
    }

    /// Solves `λ ∘ x = v` for `x`.
    pub fn circ_inverse(&self, lambda: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..self.lp {
            out[i] = v[i] / lambda[i];
        }
        for &(off, dim) in &self.socs {
            let l0 = lambda[off];
            let l1 = &lambda[off + 1..off + dim];
            let v0 = v[off];
            let v1 = &v[off + 1..off + dim];
            let det = l0 * l0 - dot(l1, l1);
            let x0 = (l0 * v0 - dot(l1, v1)) / det;
            out[off] = x0;
            for k in 0..dim - 1 {
                out[off + 1 + k] = (v1[k] - x0 * l1[k]) / l0;
            }
        }
        out
    }

    /// Largest `t ≥ 0` with `u + t·du` still in the cone (capped at `cap`).
    pub fn max_step(&self, u: &[f64], du: &[f64], cap: f64) -> f64 {
        let mut t = cap;
        for i in 0..self.lp {
            if du[i] < 0.0 {
                t = t.min(-u[i] / du[i]);
            }
        }
        for &(off, dim) in &self.socs {
            t = t.min(soc_max_step(&u[off..off + dim], &du[off..off + dim], cap));
        }
        t.max(0.0)
    }

    /// Smallest `a` such that `u + a·e` lies in the cone, i.e. minus the
    /// smallest "eigenvalue" of `u`.
    pub fn violation(&self, u: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for &v in &u[..self.lp] {
            worst = worst.max(-v);
        }
        for &(off, dim) in &self.socs {
            let s1 = norm(&u[off + 1..off + dim]);
            worst = worst.max(s1 - u[off]);
        }
        worst
    }

    /// Shifts `u` into the interior, as in the standard interior-point
    /// initialization.
    pub fn shift_into_interior(&self, u: &mut [f64]) {
        if self.dim() == 0 {
            return;
        }
        let alpha = self.violation(u);
        if alpha >= -1e-8 {
            let e = self.identity();
            for (ui, ei) in u.iter_mut().zip(&e) {
                *ui += (1.0 + alpha) * ei;
            }
        }
    }
}

fn soc_max_step(u: &[f64], du: &[f64], cap: f64) -> f64 {
    // (u0 + t du0)^2 - |u1 + t du1|^2 >= 0 with u0 + t du0 >= 0
    let a = du[0] * du[0] - dot(&du[1..], &du[1..]);
    let b = 2.0 * (u[0] * du[0] - dot(&u[1..], &du[1..]));
    let c = (u[0] * u[0] - dot(&u[1..], &u[1..])).max(0.0);
    let mut t = cap;
    if du[0] < 0.0 {
        t = t.min(-u[0] / du[0]);
    }
    let disc = b * b - 4.0 * a * c;
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            t = t.min(-c / b);
        }
        return t;
    }
    if disc < 0.0 {
        // the quadratic never vanishes; sign of a decides
        return if a > 0.0 { t } else { 0.0 };
    }
    let sq = disc.sqrt();
    // numerically stable roots
    let q = -0.5 * (b + b.signum() * sq);
    let r1 = q / a;
    let r2 = if q != 0.0 { c / q } else { r1 };
    for r in [r1, r2] {
        if r > 0.0 {
            t = t.min(r);
        }
    }
    t
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Nesterov-Todd scaling of one second-order cone.
#[derive(Debug, Clone)]
pub(crate) struct SocScaling {
    pub eta: f64,
    pub wbar: Vec<f64>,
    /// `J wbar`
    pub u: Vec<f64>,
}

/// Scaling `W` for the whole product cone; `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub(crate) struct NtScaling {
    /// `sqrt(s/z)` for the LP block.
    pub lp: Vec<f64>,
    pub socs: Vec<SocScaling>,
    pub lambda: Vec<f64>,
}

fn soc_det(u: &[f64]) -> f64 {
    u[0] * u[0] - dot(&u[1..], &u[1..])
}

impl NtScaling {
    pub fn new(layout: &ConeLayout, s: &[f64], z: &[f64]) -> Option<Self> {
        let mut lp = Vec::with_capacity(layout.lp);
        for i in 0..layout.lp {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            lp.push((s[i] / z[i]).sqrt());
        }
        let mut socs = Vec::with_capacity(layout.socs.len());
        for &(off, dim) in &layout.socs {
            let sk = &s[off..off + dim];
            let zk = &z[off..off + dim];
            let sd = soc_det(sk);
            let zd = soc_det(zk);
            if !(sd > 0.0 && zd > 0.0 && sk[0] > 0.0 && zk[0] > 0.0) {
                return None;
            }
            let (sn, zn) = (sd.sqrt(), zd.sqrt());
            let sbar: Vec<f64> = sk.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zk.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut wbar = vec![0.0; dim];
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for k in 1..dim {
                wbar[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
            }
            // re-normalize so that wbarᵀ J wbar = 1 exactly
            let tail = dot(&wbar[1..], &wbar[1..]);
            wbar[0] = (1.0 + tail).sqrt();
            // W = η P(v) with v the Jordan square root of wbar, so that W² z = s
            let denom = (2.0 * (wbar[0] + 1.0)).sqrt();
            wbar[0] = (wbar[0] + 1.0) / denom;
            for v in &mut wbar[1..] {
                *v /= denom;
            }
            let mut u = wbar.clone();
            for v in &mut u[1..] {
                *v = -*v;
            }
            let eta = (sd / zd).powf(0.25);
            socs.push(SocScaling { eta, wbar, u });
        }
        let mut scaling = Self { lp, socs, lambda: Vec::new() };
        scaling.lambda = scaling.apply_w(layout, z);
        Some(scaling)
    }

    /// `W v`.
    pub fn apply_w(&self, layout: &ConeLayout, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..layout.lp {
            out[i] = self.lp[i] * v[i];
        }
        for (sc, &(off, dim)) in self.socs.iter().zip(&layout.socs) {
            let vk = &v[off..off + dim];
            let wv = dot(&sc.wbar, vk);
            // η (2 w wᵀ - J) v
            out[off] = sc.eta * (2.0 * sc.wbar[0] * wv - vk[0]);
            for k in 1..dim {
                out[off + k] = sc.eta * (2.0 * sc.wbar[k] * wv + vk[k]);
            }
        }
        out
    }

    /// `W⁻¹ v`.
    pub fn apply_winv(&self, layout: &ConeLayout, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..layout.lp {
            out[i] = v[i] / self.lp[i];
        }
        for (sc, &(off, dim)) in self.socs.iter().zip(&layout.socs) {
            let vk = &v[off..off + dim];
            let uv = dot(&sc.u, vk);
            // (1/η) (2 u uᵀ - J) v
            out[off] = (2.0 * sc.u[0] * uv - vk[0]) / sc.eta;
            for k in 1..dim {
                out[off + k] = (2.0 * sc.u[k] * uv + vk[k]) / sc.eta;
            }
        }
        out
    }

    pub fn apply_winv2(&self, layout: &ConeLayout, v: &[f64]) -> Vec<f64> {
        self.apply_winv(layout, &self.apply_winv(layout, v))
    }
}
