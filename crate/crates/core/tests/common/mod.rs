#![allow(dead_code)]

use dlmp_core::assets::{DemandBid, GeneratorOffer, Segment, VreUnit};
use dlmp_core::market::{MarketCase, MarketConfig, VreForecast};
use dlmp_core::network::{build_topology, LineParams};

pub fn seg(price: f64, cap: f64) -> Segment {
    Segment {
        price,
        cap,
        reactive_price: 0.3 * price,
    }
}

pub fn chain(n: usize, r: f64, x: f64, caps: &[f64]) -> dlmp_core::Network {
    let lines: Vec<_> = (1..=n)
        .map(|k| LineParams {
            index: k,
            upstream: k - 1,
            r,
            x,
            capacity: caps.get(k - 1).copied().unwrap_or(10.0),
        })
        .collect();
    build_topology(&lines, 1.0).unwrap()
}

pub fn load(node: usize, must: f64, bids: &[(f64, f64)], kappa: f64) -> DemandBid {
    let mut s = vec![seg(0.0, must)];
    s.extend(bids.iter().map(|&(p, c)| seg(p, c)));
    DemandBid {
        name: format!("d{node}"),
        node,
        segments: vec![s],
        kappa,
    }
}

pub fn gen(node: usize, segs: &[(f64, f64)], kappa: f64) -> GeneratorOffer {
    let segments: Vec<_> = segs.iter().map(|&(p, c)| seg(p, c)).collect();
    let p_max = segments.iter().map(|s| s.cap).sum();
    GeneratorOffer {
        name: format!("g{node}"),
        node,
        segments,
        p_min: 0.0,
        p_max,
        kappa,
    }
}

pub fn case(net: dlmp_core::Network, loads: Vec<DemandBid>, gens: Vec<GeneratorOffer>) -> MarketCase {
    MarketCase {
        network: net,
        base_mva: 1.0,
        horizon: 1,
        dt: 1.0,
        lambda_p: vec![20.0],
        lambda_q: vec![6.0],
        loads,
        generators: gens,
        bess: vec![],
        vre: vec![],
        config: MarketConfig::default(),
    }
}

/// A named feeder with the VRE forecast it is cleared against.
pub struct Feeder {
    pub name: &'static str,
    pub case: MarketCase,
    pub vre: VreForecast,
}

/// Five small feeders covering the uncongested, congested,
/// voltage-binding and curtailing regimes.
pub fn feeders() -> Vec<Feeder> {
    let mut out = Vec::new();

    // Two nodes, nothing binding: the substation is marginal.
    let c = case(
        chain(2, 0.02, 0.03, &[]),
        vec![load(1, 0.3, &[(35.0, 0.1)], 0.3), load(2, 0.4, &[(30.0, 0.2), (12.0, 0.1)], 0.4)],
        vec![gen(2, &[(45.0, 0.3)], 0.5)],
    );
    out.push(Feeder { name: "uncongested", case: c, vre: VreForecast::default() });

    // Three nodes, first line limited: the local generator sets the price downstream.
    let c = case(
        chain(3, 0.015, 0.02, &[0.45, 10.0, 10.0]),
        vec![load(2, 0.4, &[(40.0, 0.1)], 0.3), load(3, 0.3, &[(33.0, 0.1)], 0.3)],
        vec![gen(3, &[(28.0, 0.2), (31.0, 0.3)], 0.4)],
    );
    out.push(Feeder { name: "congested", case: c, vre: VreForecast::default() });

    // Four-node chain with a narrow voltage band at the far end.
    let mut c = case(
        chain(4, 0.03, 0.04, &[]),
        vec![load(2, 0.2, &[(38.0, 0.1)], 0.3), load(4, 0.5, &[(36.0, 0.2)], 0.3)],
        vec![gen(3, &[(29.0, 0.15), (34.0, 0.3)], 0.3)],
    );
    c.config.epsilon = 0.03;
    out.push(Feeder { name: "voltage", case: c, vre: VreForecast::default() });

    // Branching feeder where the line feeding node 3 binds in reverse.
    let lines = vec![
        LineParams { index: 1, upstream: 0, r: 0.01, x: 0.02, capacity: 10.0 },
        LineParams { index: 2, upstream: 1, r: 0.02, x: 0.02, capacity: 10.0 },
        LineParams { index: 3, upstream: 1, r: 0.02, x: 0.03, capacity: 0.3 },
        LineParams { index: 4, upstream: 3, r: 0.03, x: 0.02, capacity: 10.0 },
    ];
    let c = case(
        build_topology(&lines, 1.0).unwrap(),
        vec![load(2, 0.5, &[(27.0, 0.2)], 0.3), load(4, 0.1, &[(22.0, 0.1)], 0.3)],
        vec![gen(4, &[(11.0, 0.5), (15.0, 0.2)], 0.2)],
    );
    out.push(Feeder { name: "congested-branch", case: c, vre: VreForecast::default() });

    // Five nodes, VRE beyond local demand with no export allowed.
    let mut c = case(
        chain(5, 0.01, 0.015, &[]),
        vec![load(2, 0.2, &[(18.0, 0.1)], 0.3), load(4, 0.3, &[(26.0, 0.1)], 0.3), load(5, 0.1, &[], 0.2)],
        vec![],
    );
    c.vre = vec![VreUnit {
        name: "pv".into(),
        node: 5,
        site: "s".into(),
        scale: 1.0,
        kappa: 0.3,
        zeta: 100.0,
    }];
    let vre = VreForecast { sites: vec!["s".into()], v: vec![vec![1.2]] };
    out.push(Feeder { name: "curtailing", case: c, vre });
    out
}
