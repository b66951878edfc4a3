//! Large-scale path loss, per-slot Rayleigh channel draws and the composite
//! (direct + RIS-reflected) channel factors.
//!
//! Phase convention: the RIS state is carried as the column vector `ρ` whose
//! conjugate transpose `ρᴴ` holds the reflection coefficients, so the
//! composite channel of IU `i` is the row vector `ρᴴ U_i + h_{b,i}ᴴ` with
//! `U_i = diag(h_{r,i}ᴴ) G`. The diagonal reflection matrix is never built
//! outside of tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_cn, sample_cn_vec, ComplexMat, ComplexVec, RngStream};

/// Antenna and user counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSizes {
    /// AP transmit antennas.
    pub n_t: usize,
    /// RIS reflecting elements.
    pub n_s: usize,
    /// Information users.
    pub n_iu: usize,
    /// Energy users.
    pub n_eu: usize,
}

/// Where users sit relative to the AP (origin) and the RIS (`(d_br, 0)`).
///
/// IUs are placed on the x-axis beyond the RIS, so the RIS-IU distance is
/// `|d_bi - d_br|`. EUs sit at distance `d_bj` from the AP but shifted off the
/// axis by `eu_offset`, which keeps them next to (not on top of) the RIS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarLayout {
    pub d_br: f64,
    pub d_bi: Vec<f64>,
    pub d_bj: Vec<f64>,
    pub eu_offset: f64,
}

impl PlanarLayout {
    pub fn ris_to_iu(&self) -> Vec<f64> {
        self.d_bi.iter().map(|d| (d - self.d_br).abs()).collect()
    }

    pub fn ris_to_eu(&self) -> Result<Vec<f64>> {
        self.d_bj
            .iter()
            .map(|&d| {
                if self.eu_offset >= d {
                    return Err(Error::InvalidArgument(format!(
                        "EU offset {} m must be smaller than the AP-EU distance {} m",
                        self.eu_offset, d
                    )));
                }
                let x = (d * d - self.eu_offset * self.eu_offset).sqrt();
                Ok(((x - self.d_br).powi(2) + self.eu_offset.powi(2)).sqrt())
            })
            .collect()
    }
}

/// Path-loss model: amplitude gain `sqrt(A0 · (d/d0)^(-n))` per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams {
    /// Linear power gain at the reference distance.
    pub reference_loss: f64,
    /// Reference distance in meters.
    pub reference_distance: f64,
    pub n_bi: f64,
    pub n_ri: f64,
    pub n_bj: f64,
    pub n_rj: f64,
    pub n_br: f64,
    /// AP-IU distances, one per IU.
    pub d_bi: Vec<f64>,
    /// RIS-IU distances, one per IU.
    pub d_ri: Vec<f64>,
    /// AP-EU distances, one per EU.
    pub d_bj: Vec<f64>,
    /// RIS-EU distances, one per EU.
    pub d_rj: Vec<f64>,
    /// AP-RIS distance.
    pub d_br: f64,
}

impl PathLossParams {
    pub fn validate(&self, sizes: &NetworkSizes) -> Result<()> {
        if !(self.reference_loss > 0.0 && self.reference_loss <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "reference loss must lie in (0, 1], got {}",
                self.reference_loss
            )));
        }
        if !(self.reference_distance > 0.0) {
            return Err(Error::InvalidArgument("reference distance must be positive".into()));
        }
        let checks: [(&str, &[f64], usize); 4] = [
            ("d_bi", &self.d_bi, sizes.n_iu),
            ("d_ri", &self.d_ri, sizes.n_iu),
            ("d_bj", &self.d_bj, sizes.n_eu),
            ("d_rj", &self.d_rj, sizes.n_eu),
        ];
        for (name, ds, want) in checks {
            if ds.len() != want {
                return Err(Error::InvalidArgument(format!(
                    "{name} has {} entries, expected {want}",
                    ds.len()
                )));
            }
            if let Some(d) = ds.iter().find(|d| !(**d > 0.0)) {
                return Err(Error::InvalidArgument(format!("{name} contains nonpositive distance {d}")));
            }
        }
        if !(self.d_br > 0.0) {
            return Err(Error::InvalidArgument("d_br must be positive".into()));
        }
        for n in [self.n_bi, self.n_ri, self.n_bj, self.n_rj, self.n_br] {
            if n < 2.0 {
                log::warn!("path-loss exponent {n} is below free-space (2)");
            }
        }
        Ok(())
    }

    pub fn amplitude(&self, d: f64, n: f64) -> Result<f64> {
        amplitude_gain(self.reference_loss, self.reference_distance, d, n)
    }
}

/// Amplitude (not power) scale factor `sqrt(A0 · (d/d0)^(-n))`.
pub fn amplitude_gain(reference_loss: f64, reference_distance: f64, d: f64, n: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    Ok((reference_loss * (d / reference_distance).powf(-n)).sqrt())
}

/// One slot's channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// AP-IU direct links, `N_t` each.
    pub h_b: Vec<ComplexVec>,
    /// RIS-IU links, `N_s` each.
    pub h_r: Vec<ComplexVec>,
    /// AP-EU direct links, `N_t` each.
    pub g_b: Vec<ComplexVec>,
    /// RIS-EU links, `N_s` each.
    pub g_r: Vec<ComplexVec>,
    /// AP-RIS link, `N_s × N_t`.
    pub g: ComplexMat,
}

// Labels for the per-block child streams.
const BLOCK_G: u64 = 1;
const BLOCK_HB: u64 = 2;
const BLOCK_HR: u64 = 3;
const BLOCK_GB: u64 = 4;
const BLOCK_GR: u64 = 5;

/// Draws a fresh realization: every block is its amplitude gain times i.i.d.
/// CN(0, 1) entries.
///
/// Each block (and each user within a block) reads from its own child stream
/// of `rng`, so the realization for one user does not depend on how many
/// other users or RIS elements exist. Growing `N_s` extends `G` and the RIS
/// links rather than redrawing them.
pub fn draw_channels(
    params: &PathLossParams,
    sizes: &NetworkSizes,
    rng: &RngStream,
) -> Result<ChannelRealization> {
    params.validate(sizes)?;
    let child = |block: u64, user: u64| RngStream::derived(rng.seed(), &[rng.stream(), block, user]);

    let a_g = params.amplitude(params.d_br, params.n_br)?;
    let g = scale_mat(sample_cn(sizes.n_s, sizes.n_t, &mut child(BLOCK_G, 0))?, a_g);

    let mut h_b = Vec::with_capacity(sizes.n_iu);
    let mut h_r = Vec::with_capacity(sizes.n_iu);
    for i in 0..sizes.n_iu {
        let a_b = params.amplitude(params.d_bi[i], params.n_bi)?;
        let a_r = params.amplitude(params.d_ri[i], params.n_ri)?;
        h_b.push(sample_cn_vec(sizes.n_t, &mut child(BLOCK_HB, i as u64)).scale(a_b));
        h_r.push(sample_cn_vec(sizes.n_s, &mut child(BLOCK_HR, i as u64)).scale(a_r));
    }

    let mut g_b = Vec::with_capacity(sizes.n_eu);
    let mut g_r = Vec::with_capacity(sizes.n_eu);
    for j in 0..sizes.n_eu {
        let a_b = params.amplitude(params.d_bj[j], params.n_bj)?;
        let a_r = params.amplitude(params.d_rj[j], params.n_rj)?;
        g_b.push(sample_cn_vec(sizes.n_t, &mut child(BLOCK_GB, j as u64)).scale(a_b));
        g_r.push(sample_cn_vec(sizes.n_s, &mut child(BLOCK_GR, j as u64)).scale(a_r));
    }

    Ok(ChannelRealization { h_b, h_r, g_b, g_r, g })
}

fn scale_mat(m: ComplexMat, s: f64) -> ComplexMat {
    let (rows, cols) = m.dims();
    ComplexMat::from_fn(rows, cols, |r, c| m[(r, c)] * s)
}

impl ChannelRealization {
    pub fn sizes(&self) -> NetworkSizes {
        NetworkSizes {
            n_t: self.g.cols(),
            n_s: self.g.rows(),
            n_iu: self.h_b.len(),
            n_eu: self.g_b.len(),
        }
    }

    /// Drops the energy users, keeping every other block untouched.
    pub fn without_energy_users(&self) -> ChannelRealization {
        ChannelRealization {
            g_b: Vec::new(),
            g_r: Vec::new(),
            ..self.clone()
        }
    }
}

/// `U_i = diag(h_{r,i}ᴴ) G` together with the direct link `h_{b,i}`.
pub fn composite_factor_iu(real: &ChannelRealization, i: usize) -> Result<(ComplexMat, ComplexVec)> {
    if i >= real.h_b.len() {
        return Err(Error::IndexOutOfRange {
            what: "information users",
            index: i,
            len: real.h_b.len(),
        });
    }
    let u = real.g.scale_rows(&real.h_r[i].conj())?;
    Ok((u, real.h_b[i].clone()))
}

/// `V_j = diag(g_{r,j}ᴴ) G` together with the direct link `g_{b,j}`.
pub fn composite_factor_eu(real: &ChannelRealization, j: usize) -> Result<(ComplexMat, ComplexVec)> {
    if j >= real.g_b.len() {
        return Err(Error::IndexOutOfRange {
            what: "energy users",
            index: j,
            len: real.g_b.len(),
        });
    }
    let v = real.g.scale_rows(&real.g_r[j].conj())?;
    Ok((v, real.g_b[j].clone()))
}

/// The column vector `h` whose conjugate transpose is `ρᴴ U + h_bᴴ`,
/// i.e. `h = Uᴴ ρ + h_b`, so that `hᴴ w` is the received amplitude.
pub fn composite_channel(factor: &ComplexMat, direct: &ComplexVec, rho: &ComplexVec) -> Result<ComplexVec> {
    let reflected = factor.adjoint_mul_vec(rho)?;
    if reflected.len() != direct.len() {
        return Err(Error::DimensionMismatch {
            op: "composite_channel",
            left: (reflected.len(), 1),
            right: (direct.len(), 1),
        });
    }
    Ok(&reflected + direct)
}

/// All composite factors of one slot, computed once.
#[derive(Debug, Clone)]
pub struct CompositeFactors {
    pub u: Vec<ComplexMat>,
    pub h_b: Vec<ComplexVec>,
    pub v: Vec<ComplexMat>,
    pub g_b: Vec<ComplexVec>,
}

impl CompositeFactors {
    pub fn new(real: &ChannelRealization) -> Result<Self> {
        let mut u = Vec::new();
        let mut h_b = Vec::new();
        for i in 0..real.h_b.len() {
            let (ui, hb) = composite_factor_iu(real, i)?;
            u.push(ui);
            h_b.push(hb);
        }
        let mut v = Vec::new();
        let mut g_b = Vec::new();
        for j in 0..real.g_b.len() {
            let (vj, gb) = composite_factor_eu(real, j)?;
            v.push(vj);
            g_b.push(gb);
        }
        Ok(Self { u, h_b, v, g_b })
    }

    pub fn n_s(&self) -> usize {
        self.u
            .first()
            .or(self.v.first())
            .map(|m| m.rows())
            .unwrap_or(0)
    }

    pub fn iu_channel(&self, i: usize, rho: &ComplexVec) -> ComplexVec {
        composite_channel(&self.u[i], &self.h_b[i], rho).expect("composite factors have consistent dimensions")
    }

    pub fn eu_channel(&self, j: usize, rho: &ComplexVec) -> ComplexVec {
        composite_channel(&self.v[j], &self.g_b[j], rho).expect("composite factors have consistent dimensions")
    }
}
