//! Bus admittance assembly, Kron reduction to generator internal nodes and
//! the classical-model electrical power of each machine.

use nalgebra::{Complex, DMatrix, DVector};
use thiserror::Error;

use crate::case::PowerSystemCase;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Relative pivot size below which an eliminated block counts as singular.
const PIVOT_RTOL: f64 = 1e-12;

/// Largest allowed gap between the case file's mechanical power and the
/// electrical output computed at the operating point.
pub const OPERATING_POINT_TOL: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("admittance matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("retained index {index} is out of range or repeated for a {dim}x{dim} matrix")]
    BadRetainedIndex { index: usize, dim: usize },
    #[error("eliminated block is singular (islanded or floating node)")]
    SingularBlock,
    #[error("fault bus {0} does not exist")]
    UnknownFaultBus(u32),
    #[error(
        "generator {id}: case mechanical power {pm} differs from the electrical output {pe} \
         at the operating point; the case does not carry a solved operating point"
    )]
    OperatingPointMismatch { id: u32, pm: f64, pe: f64 },
}

/// Eliminates every node not listed in `retained`:
/// `Y_red = Y_rr − Y_re · Y_ee⁻¹ · Y_er`, rows/columns ordered as `retained`.
pub fn kron_reduce(y: &CMatrix, retained: &[usize]) -> Result<CMatrix, NetworkError> {
    let n = y.nrows();
    if y.ncols() != n {
        return Err(NetworkError::NotSquare {
            rows: n,
            cols: y.ncols(),
        });
    }
    let mut keep = vec![false; n];
    for &index in retained {
        if index >= n || keep[index] {
            return Err(NetworkError::BadRetainedIndex { index, dim: n });
        }
        keep[index] = true;
    }
    let eliminated: Vec<usize> = (0..n).filter(|&i| !keep[i]).collect();

    let y_rr = y.select_rows(retained).select_columns(retained);
    if eliminated.is_empty() {
        return Ok(y_rr);
    }
    let y_re = y.select_rows(retained).select_columns(&eliminated);
    let y_er = y.select_rows(&eliminated).select_columns(retained);
    let y_ee = y.select_rows(&eliminated).select_columns(&eliminated);

    let scale = y_ee.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let lu = y_ee.lu();
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .map(|c| c.norm())
        .fold(f64::INFINITY, f64::min);
    if scale == 0.0 || !(min_pivot > PIVOT_RTOL * scale) {
        return Err(NetworkError::SingularBlock);
    }
    let x = lu.solve(&y_er).ok_or(NetworkError::SingularBlock)?;
    let reduced = y_rr - y_re * x;
    if reduced
        .iter()
        .any(|c| !c.re.is_finite() || !c.im.is_finite())
    {
        return Err(NetworkError::SingularBlock);
    }
    Ok(reduced)
}

/// Classical-model electrical power of every machine:
/// `Pe_i = Σ_j E_i E_j (G_ij cos δ_ij + B_ij sin δ_ij)`.
pub fn electrical_power(y: &CMatrix, emf: &[f64], delta: &[f64]) -> Vec<f64> {
    let n = emf.len();
    assert_eq!(y.nrows(), n, "matrix/EMF dimension mismatch");
    assert_eq!(delta.len(), n, "angle/EMF dimension mismatch");
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d = delta[i] - delta[j];
                    let yij = y[(i, j)];
                    emf[i] * emf[j] * (yij.re * d.cos() + yij.im * d.sin())
                })
                .sum()
        })
        .collect()
}

/// Precomputed `E_i E_j G_ij` / `E_i E_j B_ij` tables for one network stage,
/// used in the integrator's inner loop.
#[derive(Debug, Clone)]
pub struct PowerModel {
    n: usize,
    g: Vec<f64>,
    b: Vec<f64>,
}

impl PowerModel {
    pub fn new(y: &CMatrix, emf: &[f64]) -> Self {
        let n = emf.len();
        let mut g = vec![0.0; n * n];
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let e = emf[i] * emf[j];
                g[i * n + j] = e * y[(i, j)].re;
                b[i * n + j] = e * y[(i, j)].im;
            }
        }
        Self { n, g, b }
    }

    pub fn power_into(&self, delta: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (mut sin, mut cos) = (vec![0.0; n], vec![0.0; n]);
        for (k, d) in delta.iter().enumerate() {
            (sin[k], cos[k]) = d.sin_cos();
        }
        for i in 0..n {
            let mut p = 0.0;
            for j in 0..n {
                let c = cos[i] * cos[j] + sin[i] * sin[j];
                let s = sin[i] * cos[j] - cos[i] * sin[j];
                p += self.g[i * n + j] * c + self.b[i * n + j] * s;
            }
            out[i] = p;
        }
    }
}

/// Which network applies to a stretch of the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    FaultOn,
    PostFault,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::FaultOn => "fault-on",
            Stage::PostFault => "post-fault",
        }
    }
}

/// Reduced admittance matrices of the three network stages plus the
/// machines' internal operating point.
#[derive(Debug, Clone)]
pub struct StagedNetwork {
    pub machine_ids: Vec<u32>,
    /// `None` for an unfaulted network (fault-on equals pre-fault).
    pub fault_bus: Option<u32>,
    pub pre_fault: CMatrix,
    pub fault_on: CMatrix,
    pub post_fault: CMatrix,
    /// Internal EMF magnitudes E_i, p.u.
    pub emf: Vec<f64>,
    /// Initial internal angles δ_i⁰, rad.
    pub delta0: Vec<f64>,
    /// Mechanical power held constant through the transient, p.u. Equal to
    /// the pre-fault electrical output at δ⁰.
    pub pm: Vec<f64>,
}

/// Full admittance matrix over buses (indices `0..nb`) followed by generator
/// internal nodes (`nb..nb+ng`), loads as constant admittances.
pub fn full_admittance(case: &PowerSystemCase) -> CMatrix {
    let nb = case.buses.len();
    let ng = case.generators.len();
    let mut y = CMatrix::zeros(nb + ng, nb + ng);
    let idx = |id: u32| case.bus_index(id).expect("validated case");

    for br in &case.branches {
        let (f, t) = (idx(br.from), idx(br.to));
        let ys = C64::new(1.0, 0.0) / C64::new(br.r, br.x);
        let half_b = C64::new(0.0, br.b / 2.0);
        y[(f, f)] += (ys + half_b) / (br.tap * br.tap);
        y[(t, t)] += ys + half_b;
        y[(f, t)] -= ys / br.tap;
        y[(t, f)] -= ys / br.tap;
    }
    for (k, bus) in case.buses.iter().enumerate() {
        y[(k, k)] += C64::new(bus.p_load, -bus.q_load) / (bus.vm * bus.vm);
    }
    for (g, gen) in case.generators.iter().enumerate() {
        let b = idx(gen.bus);
        let node = nb + g;
        let yg = C64::new(0.0, -1.0 / gen.xd_prime);
        y[(b, b)] += yg;
        y[(node, node)] += yg;
        y[(b, node)] -= yg;
        y[(node, b)] -= yg;
    }
    y
}

/// Internal EMF phasor `E∠δ = V + j·x'd·I` of every generator from its
/// terminal conditions.
pub fn internal_emf(case: &PowerSystemCase) -> Vec<C64> {
    case.generators
        .iter()
        .map(|g| {
            let bus = &case.buses[case.bus_index(g.bus).expect("validated case")];
            let v = C64::from_polar(bus.vm, bus.va);
            let current = (C64::new(g.p_gen, g.q_gen) / v).conj();
            v + C64::new(0.0, g.xd_prime) * current
        })
        .collect()
}

impl StagedNetwork {
    /// Builds the pre-fault, fault-on (faulted bus solidly grounded) and
    /// post-fault (fault removed, no switching) reduced networks.
    pub fn build(case: &PowerSystemCase, fault_bus: u32) -> Result<Self, NetworkError> {
        let fault_index = case
            .bus_index(fault_bus)
            .ok_or(NetworkError::UnknownFaultBus(fault_bus))?;
        Self::assemble(case, Some((fault_bus, fault_index)))
    }

    /// A network with no fault: every stage uses the pre-fault matrix.
    pub fn unfaulted(case: &PowerSystemCase) -> Result<Self, NetworkError> {
        Self::assemble(case, None)
    }

    fn assemble(case: &PowerSystemCase, fault: Option<(u32, usize)>) -> Result<Self, NetworkError> {
        let nb = case.buses.len();
        let ng = case.generators.len();
        let y = full_admittance(case);
        let internal: Vec<usize> = (nb..nb + ng).collect();
        let pre_fault = kron_reduce(&y, &internal)?;

        let fault_on = match fault {
            Some((_, fi)) => {
                // A zero-voltage node drops out of the nodal equations.
                let remaining: Vec<usize> = (0..nb + ng).filter(|&k| k != fi).collect();
                let grounded = y.select_rows(&remaining).select_columns(&remaining);
                let internal: Vec<usize> = (nb - 1..nb + ng - 1).collect();
                kron_reduce(&grounded, &internal)?
            }
            None => pre_fault.clone(),
        };
        let post_fault = pre_fault.clone();

        let phasors = internal_emf(case);
        let emf: Vec<f64> = phasors.iter().map(|e| e.norm()).collect();
        let delta0: Vec<f64> = phasors.iter().map(|e| e.arg()).collect();
        let pe = electrical_power(&pre_fault, &emf, &delta0);
        for (g, p) in case.generators.iter().zip(&pe) {
            if (g.pm - p).abs() > OPERATING_POINT_TOL {
                return Err(NetworkError::OperatingPointMismatch {
                    id: g.id,
                    pm: g.pm,
                    pe: *p,
                });
            }
        }

        Ok(Self {
            machine_ids: case.machine_ids(),
            fault_bus: fault.map(|(id, _)| id),
            pre_fault,
            fault_on,
            post_fault,
            emf,
            delta0,
            pm: pe,
        })
    }

    pub fn n_machines(&self) -> usize {
        self.emf.len()
    }

    pub fn matrix(&self, stage: Stage) -> &CMatrix {
        match stage {
            Stage::FaultOn => &self.fault_on,
            Stage::PostFault => &self.post_fault,
        }
    }

    /// `max_i |Pm_i − Pe_i(δ⁰)|` under the pre-fault matrix.
    pub fn equilibrium_residual(&self) -> f64 {
        electrical_power(&self.pre_fault, &self.emf, &self.delta0)
            .iter()
            .zip(&self.pm)
            .map(|(pe, pm)| (pm - pe).abs())
            .fold(0.0, f64::max)
    }
}

/// Largest `|Y_ij − Y_ji|` over all entries.
pub fn asymmetry(y: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..y.nrows() {
        for j in 0..i {
            worst = worst.max((y[(i, j)] - y[(j, i)]).norm());
        }
    }
    worst
}

/// Solves the full network for the eliminated-node voltages given the
/// retained-node voltages and returns the retained-node currents `Y·V`.
pub fn full_network_currents(
    y: &CMatrix,
    retained: &[usize],
    v_retained: &DVector<C64>,
) -> Result<DVector<C64>, NetworkError> {
    let n = y.nrows();
    let eliminated: Vec<usize> = (0..n).filter(|k| !retained.contains(k)).collect();
    let mut v = DVector::<C64>::zeros(n);
    for (k, &r) in retained.iter().enumerate() {
        v[r] = v_retained[k];
    }
    if !eliminated.is_empty() {
        let y_ee = y.select_rows(&eliminated).select_columns(&eliminated);
        let y_er = y.select_rows(&eliminated).select_columns(retained);
        // Eliminated nodes carry no injection: Y_ee V_e = −Y_er V_r.
        let rhs = -(y_er * v_retained);
        let v_e = y_ee.lu().solve(&rhs).ok_or(NetworkError::SingularBlock)?;
        for (k, &e) in eliminated.iter().enumerate() {
            v[e] = v_e[k];
        }
    }
    let i_full = y * v;
    Ok(DVector::from_iterator(
        retained.len(),
        retained.iter().map(|&r| i_full[r]),
    ))
}
