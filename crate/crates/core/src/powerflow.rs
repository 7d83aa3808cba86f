//! Exact radial power flow, the linear voltage equation and the linearized
//! loss model.
//!
//! Injection vectors follow the consumption convention: `p[k - 1]` is demand
//! minus generation at node `k`, in p.u. Line flows are receiving-end
//! quantities, so `Pₖ + Lᴾₖ` is what leaves the upstream node.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Sweep convergence settings.
#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    /// Largest allowed voltage update between iterations, p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// A converged power-flow solution.
#[derive(Clone, Debug)]
pub struct PfState {
    /// Node voltage magnitudes, p.u.
    pub v: DVector<f64>,
    /// Angle difference across each line (upstream minus downstream), rad.
    pub dtheta: DVector<f64>,
    /// Receiving-end real flow on each line.
    pub p_flow: DVector<f64>,
    /// Receiving-end reactive flow on each line.
    pub q_flow: DVector<f64>,
    pub loss_p: DVector<f64>,
    pub loss_q: DVector<f64>,
    /// Net injections the state was solved for.
    pub p_inj: DVector<f64>,
    pub q_inj: DVector<f64>,
    /// Real and reactive power drawn from the substation.
    pub substation: (f64, f64),
    pub iterations: usize,
    pub residual: f64,
}

/// Backward/forward sweep with complex branch currents.
pub fn sweep_power_flow(
    net: &Network,
    p: &DVector<f64>,
    q: &DVector<f64>,
    opts: SweepOptions,
) -> Result<PfState> {
    let n = net.n();
    check_len(n, p, q)?;
    if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Input("injections must be finite".into()));
    }
    let z: Vec<Complex64> = net
        .lines()
        .iter()
        .map(|l| Complex64::new(l.r, l.x))
        .collect();
    let mut volt = vec![Complex64::new(net.v0(), 0.0); n + 1];
    let mut s_recv = vec![Complex64::default(); n + 1];
    let mut s_send = vec![Complex64::default(); n + 1];
    let mut current = vec![Complex64::default(); n + 1];

    let backward = |volt: &[Complex64],
                    s_recv: &mut [Complex64],
                    s_send: &mut [Complex64],
                    current: &mut [Complex64]| {
        for k in (1..=n).rev() {
            let mut s = Complex64::new(p[k - 1], q[k - 1]);
            for &c in net.children(k) {
                s += s_send[c];
            }
            s_recv[k] = s;
            let i = (s / volt[k]).conj();
            current[k] = i;
            s_send[k] = s + z[k - 1] * i.norm_sqr();
        }
    };

    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        backward(&volt, &mut s_recv, &mut s_send, &mut current);
        residual = 0.0f64;
        for k in 1..=n {
            let next = volt[net.parent(k)] - z[k - 1] * current[k];
            residual = residual.max((next - volt[k]).norm());
            volt[k] = next;
        }
        if !residual.is_finite() {
            break;
        }
        if residual < opts.tolerance {
            break;
        }
    }
    if !(residual < opts.tolerance) {
        return Err(Error::Divergence {
            iterations,
            residual,
        });
    }
    backward(&volt, &mut s_recv, &mut s_send, &mut current);

    let v = DVector::from_iterator(n, (1..=n).map(|k| volt[k].norm()));
    if let Some(bad) = v.iter().find(|&&x| !(0.5..1.5).contains(&x)) {
        return Err(Error::Divergence {
            iterations,
            residual: *bad,
        });
    }
    let dtheta = DVector::from_iterator(
        n,
        (1..=n).map(|k| volt[net.parent(k)].arg() - volt[k].arg()),
    );
    let loss = |k: usize| z[k - 1] * current[k].norm_sqr();
    let substation = net
        .children(0)
        .iter()
        .fold(Complex64::default(), |acc, &c| acc + s_send[c]);
    Ok(PfState {
        v,
        dtheta,
        p_flow: DVector::from_iterator(n, (1..=n).map(|k| s_recv[k].re)),
        q_flow: DVector::from_iterator(n, (1..=n).map(|k| s_recv[k].im)),
        loss_p: DVector::from_iterator(n, (1..=n).map(|k| loss(k).re)),
        loss_q: DVector::from_iterator(n, (1..=n).map(|k| loss(k).im)),
        p_inj: p.clone(),
        q_inj: q.clone(),
        substation: (substation.re, substation.im),
        iterations,
        residual,
    })
}

/// Line flows and losses from one backward pass with voltages held fixed.
///
/// This is the loss function the constant-voltage gradients differentiate.
#[derive(Clone, Debug)]
pub struct FixedVoltageFlows {
    pub p_flow: DVector<f64>,
    pub q_flow: DVector<f64>,
    pub loss_p: DVector<f64>,
    pub loss_q: DVector<f64>,
}

pub fn fixed_voltage_flows(
    net: &Network,
    p: &DVector<f64>,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> FixedVoltageFlows {
    let n = net.n();
    let mut pf = DVector::zeros(n);
    let mut qf = DVector::zeros(n);
    let mut lp = DVector::zeros(n);
    let mut lq = DVector::zeros(n);
    for k in (1..=n).rev() {
        let (mut pk, mut qk) = (p[k - 1], q[k - 1]);
        for &c in net.children(k) {
            pk += pf[c - 1] + lp[c - 1];
            qk += qf[c - 1] + lq[c - 1];
        }
        let line = net.line(k);
        let ell = (pk * pk + qk * qk) / (v[k - 1] * v[k - 1]);
        pf[k - 1] = pk;
        qf[k - 1] = qk;
        lp[k - 1] = line.r * ell;
        lq[k - 1] = line.x * ell;
    }
    FixedVoltageFlows {
        p_flow: pf,
        q_flow: qf,
        loss_p: lp,
        loss_q: lq,
    }
}

/// `V = V0 − ℳp(p + Lᴾ) − ℳq(q + Lᑫ)`.
pub fn linearized_voltages(
    net: &Network,
    p: &DVector<f64>,
    q: &DVector<f64>,
    loss_p: &DVector<f64>,
    loss_q: &DVector<f64>,
) -> DVector<f64> {
    let drop = net.m_p() * (p + loss_p) + net.m_q() * (q + loss_q);
    DVector::from_element(net.n(), net.v0()) - drop
}

/// Voltage used in the denominator of the loss gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossGradientMode {
    /// Voltages frozen at the center-point solution.
    #[default]
    Center,
    /// Voltages frozen at 1 p.u.
    Unity,
    /// Full derivative of the branch-flow equations, voltage coupling included.
    Exact,
}

/// First-order sensitivities of line flows and losses to nodal injections.
///
/// Every matrix is `N × N` with entry `(j, i)` the derivative of the
/// quantity on line `j` with respect to the injection at node `i`.
#[derive(Clone, Debug)]
pub struct FlowLossSensitivities {
    pub dlp_dp: DMatrix<f64>,
    pub dlp_dq: DMatrix<f64>,
    pub dlq_dp: DMatrix<f64>,
    pub dlq_dq: DMatrix<f64>,
    pub dpf_dp: DMatrix<f64>,
    pub dpf_dq: DMatrix<f64>,
    pub dqf_dp: DMatrix<f64>,
    pub dqf_dq: DMatrix<f64>,
}

impl FlowLossSensitivities {
    fn zeros(n: usize) -> Self {
        let z = || DMatrix::zeros(n, n);
        Self {
            dlp_dp: z(),
            dlp_dq: z(),
            dlq_dp: z(),
            dlq_dq: z(),
            dpf_dp: z(),
            dpf_dq: z(),
            dqf_dp: z(),
            dqf_dq: z(),
        }
    }
}

/// Flow and loss sensitivities at `state`.
///
/// In the constant-voltage modes the loss derivative on line `j` is
/// `2 (Pⱼ ∂Pⱼ + Qⱼ ∂Qⱼ) · {rⱼ, xⱼ} / Vⱼ²` and the flow derivative is
/// `𝒟(j,i) + Σ_{k ∈ d(j)} ∂Lₖ`. Children carry larger indices than their
/// parents, so one leaf-to-root pass per injection node solves the coupled
/// system exactly.
pub fn flow_loss_sensitivities(
    net: &Network,
    state: &PfState,
    mode: LossGradientMode,
) -> Result<FlowLossSensitivities> {
    match mode {
        LossGradientMode::Center => {
            let w = state.v.map(|v| v * v);
            Ok(constant_voltage(net, state, &w))
        }
        LossGradientMode::Unity => Ok(constant_voltage(net, state, &DVector::from_element(net.n(), 1.0))),
        LossGradientMode::Exact => exact_sensitivities(net, state),
    }
}

fn constant_voltage(net: &Network, state: &PfState, w: &DVector<f64>) -> FlowLossSensitivities {
    let n = net.n();
    let d = net.downstream();
    let mut out = FlowLossSensitivities::zeros(n);
    let mut glp = vec![0.0; n + 1];
    let mut glq = vec![0.0; n + 1];
    let mut sub_p = vec![0.0; n + 1];
    let mut sub_q = vec![0.0; n + 1];
    for reactive in [false, true] {
        for i in 1..=n {
            for j in (1..=n).rev() {
                let (mut sp, mut sq) = (0.0, 0.0);
                for &c in net.children(j) {
                    sp += glp[c] + sub_p[c];
                    sq += glq[c] + sub_q[c];
                }
                sub_p[j] = sp;
                sub_q[j] = sq;
                let own = d[(j - 1, i - 1)];
                let (dp, dq) = if reactive { (sp, own + sq) } else { (own + sp, sq) };
                let a = 2.0 * (state.p_flow[j - 1] * dp + state.q_flow[j - 1] * dq) / w[j - 1];
                let line = net.line(j);
                glp[j] = line.r * a;
                glq[j] = line.x * a;
                let (jj, ii) = (j - 1, i - 1);
                if reactive {
                    out.dlp_dq[(jj, ii)] = glp[j];
                    out.dlq_dq[(jj, ii)] = glq[j];
                    out.dpf_dq[(jj, ii)] = dp;
                    out.dqf_dq[(jj, ii)] = dq;
                } else {
                    out.dlp_dp[(jj, ii)] = glp[j];
                    out.dlq_dp[(jj, ii)] = glq[j];
                    out.dpf_dp[(jj, ii)] = dp;
                    out.dqf_dp[(jj, ii)] = dq;
                }
            }
        }
    }
    out
}

/// Implicit differentiation of the branch-flow equations
///
/// ```text
/// Pⱼ = pⱼ + Σ_c (P_c + r_c ℓ_c)
/// Qⱼ = qⱼ + Σ_c (Q_c + x_c ℓ_c)
/// wⱼ = w_u − 2 (rⱼ Pⱼ + xⱼ Qⱼ) − |zⱼ|² ℓⱼ,   ℓⱼ = (Pⱼ² + Qⱼ²) / wⱼ
/// ```
///
/// with `w = V²`, which the sweep solves exactly on a radial feeder.
fn exact_sensitivities(net: &Network, state: &PfState) -> Result<FlowLossSensitivities> {
    let n = net.n();
    let (ip, iq, iw) = (0, n, 2 * n);
    let w: Vec<f64> = state.v.iter().map(|v| v * v).collect();
    let ell: Vec<f64> = (0..n)
        .map(|k| (state.p_flow[k].powi(2) + state.q_flow[k].powi(2)) / w[k])
        .collect();
    let mut jac = DMatrix::<f64>::zeros(3 * n, 3 * n);
    for j in 1..=n {
        let jj = j - 1;
        let line = net.line(j);
        jac[(ip + jj, ip + jj)] = 1.0;
        jac[(iq + jj, iq + jj)] = 1.0;
        for &c in net.children(j) {
            let cc = c - 1;
            let lc = net.line(c);
            let (pc, qc, wc) = (state.p_flow[cc], state.q_flow[cc], w[cc]);
            jac[(ip + jj, ip + cc)] = -(1.0 + lc.r * 2.0 * pc / wc);
            jac[(ip + jj, iq + cc)] = -lc.r * 2.0 * qc / wc;
            jac[(ip + jj, iw + cc)] = lc.r * ell[cc] / wc;
            jac[(iq + jj, ip + cc)] = -lc.x * 2.0 * pc / wc;
            jac[(iq + jj, iq + cc)] = -(1.0 + lc.x * 2.0 * qc / wc);
            jac[(iq + jj, iw + cc)] = lc.x * ell[cc] / wc;
        }
        let z2 = line.r * line.r + line.x * line.x;
        let (pj, qj, wj) = (state.p_flow[jj], state.q_flow[jj], w[jj]);
        jac[(iw + jj, iw + jj)] = 1.0 - z2 * ell[jj] / wj;
        let up = net.parent(j);
        if up != 0 {
            jac[(iw + jj, iw + up - 1)] = -1.0;
        }
        jac[(iw + jj, ip + jj)] = 2.0 * line.r + z2 * 2.0 * pj / wj;
        jac[(iw + jj, iq + jj)] = 2.0 * line.x + z2 * 2.0 * qj / wj;
    }
    let lu = jac.lu();
    let mut rhs = DMatrix::<f64>::zeros(3 * n, 2 * n);
    for i in 0..n {
        rhs[(ip + i, i)] = 1.0;
        rhs[(iq + i, n + i)] = 1.0;
    }
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular branch-flow Jacobian".into()))?;

    let mut out = FlowLossSensitivities::zeros(n);
    for col in 0..2 * n {
        let reactive = col >= n;
        let i = col % n;
        for j in 0..n {
            let line = net.line(j + 1);
            let (dp, dq, dw) = (sol[(ip + j, col)], sol[(iq + j, col)], sol[(iw + j, col)]);
            let dell = (2.0 * state.p_flow[j] * dp + 2.0 * state.q_flow[j] * dq - ell[j] * dw) / w[j];
            if reactive {
                out.dlp_dq[(j, i)] = line.r * dell;
                out.dlq_dq[(j, i)] = line.x * dell;
                out.dpf_dq[(j, i)] = dp;
                out.dqf_dq[(j, i)] = dq;
            } else {
                out.dlp_dp[(j, i)] = line.r * dell;
                out.dlq_dp[(j, i)] = line.x * dell;
                out.dpf_dp[(j, i)] = dp;
                out.dqf_dp[(j, i)] = dq;
            }
        }
    }
    Ok(out)
}

/// First-order Taylor model of line losses around a center point.
#[derive(Clone, Debug)]
pub struct LossModel {
    pub center_p: DVector<f64>,
    pub center_q: DVector<f64>,
    /// Exact losses at the center.
    pub base_p: DVector<f64>,
    pub base_q: DVector<f64>,
    pub sens: FlowLossSensitivities,
    pub mode: LossGradientMode,
}

impl LossModel {
    /// Linearized `(Lᴾ, Lᑫ)` at the given injections.
    pub fn evaluate(&self, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let dp = p - &self.center_p;
        let dq = q - &self.center_q;
        let lp = &self.base_p + &self.sens.dlp_dp * &dp + &self.sens.dlp_dq * &dq;
        let lq = &self.base_q + &self.sens.dlq_dp * &dp + &self.sens.dlq_dq * &dq;
        (lp, lq)
    }

    /// Losses with every injection at zero, i.e. the affine offset of the model.
    pub fn offset(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.center_p.len();
        self.evaluate(&DVector::zeros(n), &DVector::zeros(n))
    }
}

pub fn linearize_losses(net: &Network, center: &PfState, mode: LossGradientMode) -> Result<LossModel> {
    let sens = flow_loss_sensitivities(net, center, mode)?;
    Ok(LossModel {
        center_p: center.p_inj.clone(),
        center_q: center.q_inj.clone(),
        base_p: center.loss_p.clone(),
        base_q: center.loss_q.clone(),
        sens,
        mode,
    })
}

fn check_len(n: usize, p: &DVector<f64>, q: &DVector<f64>) -> Result<()> {
    if p.len() != n || q.len() != n {
        return Err(Error::Input(format!(
            "injection vectors must have length {n} (got {} and {})",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}
