//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use dlmp_core::pep::{read_history_csv, History};
use dlmp_core::runner::read_case_file;
use dlmp_core::{CaseFile, Network};
use nalgebra::DVector;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn case_file() -> CaseFile {
    read_case_file(&data("ieee69.json")).expect("bundled case")
}

pub fn history() -> History {
    read_history_csv(&data("vre_history.csv")).expect("bundled history")
}

/// The bundled network with its nominal loads in p.u.
pub fn nominal() -> (Network, DVector<f64>, DVector<f64>) {
    let file = case_file();
    let net = file.build_network().expect("bundled network");
    let mut p = DVector::zeros(net.n());
    let mut q = DVector::zeros(net.n());
    for l in &file.loads.nodes {
        let i = net.internal_id(l.node).expect("load node") - 1;
        p[i] += l.p_mw / file.network.base_mva;
        q[i] += l.q_mvar / file.network.base_mva;
    }
    (net, p, q)
}
