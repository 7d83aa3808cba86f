"""Writes data/ieee69.json and data/vre_history.csv.

Feeder data is the Baran-Wu 69-bus system (12.66 kV, 10 MVA base) with
buses renumbered from 0 at the substation. The DER placement, line limits,
price and load profiles and the VRE history are synthetic.
"""

import json
import math
from datetime import date, timedelta
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent

# from, to (1-based bus ids), R ohm, X ohm, P kW, Q kvar
BRANCHES = """
1 2 0.0005 0.0012 0 0
2 3 0.0005 0.0012 0 0
3 4 0.0015 0.0036 0 0
4 5 0.0251 0.0294 0 0
5 6 0.3660 0.1864 2.6 2.2
6 7 0.3811 0.1941 40.4 30
7 8 0.0922 0.0470 75 54
8 9 0.0493 0.0251 30 22
9 10 0.8190 0.2707 28 19
10 11 0.1872 0.0619 145 104
11 12 0.7114 0.2351 145 104
12 13 1.0300 0.3400 8 5.5
13 14 1.0440 0.3450 8 5.5
14 15 1.0580 0.3496 0 0
15 16 0.1966 0.0650 45.5 30
16 17 0.3744 0.1238 60 35
17 18 0.0047 0.0016 60 35
18 19 0.3276 0.1083 0 0
19 20 0.2106 0.0690 1 0.6
20 21 0.3416 0.1129 114 81
21 22 0.0140 0.0046 5 3.5
22 23 0.1591 0.0526 0 0
23 24 0.3463 0.1145 28 20
24 25 0.7488 0.2475 0 0
25 26 0.3089 0.1021 14 10
26 27 0.1732 0.0572 14 10
3 28 0.0044 0.0108 26 18.6
28 29 0.0640 0.1565 26 18.6
29 30 0.3978 0.1315 0 0
30 31 0.0702 0.0232 0 0
31 32 0.3510 0.1160 0 0
32 33 0.8390 0.2816 14 10
33 34 1.7080 0.5646 19.5 14
34 35 1.4740 0.4873 6 4
3 36 0.0044 0.0108 26 18.55
36 37 0.0640 0.1565 26 18.55
37 38 0.1053 0.1230 0 0
38 39 0.0304 0.0355 24 17
39 40 0.0018 0.0021 24 17
40 41 0.7283 0.8509 1.2 1
41 42 0.3100 0.3623 0 0
42 43 0.0410 0.0478 6 4.3
43 44 0.0092 0.0116 0 0
44 45 0.1089 0.1373 39.22 26.3
45 46 0.0009 0.0012 39.22 26.3
4 47 0.0034 0.0084 0 0
47 48 0.0851 0.2083 79 56.4
48 49 0.2898 0.7091 384.7 274.5
49 50 0.0822 0.2011 384.7 274.5
8 51 0.0928 0.0473 40.5 28.3
51 52 0.3319 0.1114 3.6 2.7
9 53 0.1740 0.0886 4.35 3.5
53 54 0.2030 0.1034 26.4 19
54 55 0.2842 0.1447 24 17.2
55 56 0.2813 0.1433 0 0
56 57 1.5900 0.5337 0 0
57 58 0.7837 0.2630 0 0
58 59 0.3042 0.1006 100 72
59 60 0.3861 0.1172 0 0
60 61 0.5075 0.2585 1244 888
61 62 0.0974 0.0496 32 23
62 63 0.1450 0.0738 0 0
63 64 0.7105 0.3619 227 162
64 65 1.0410 0.5302 59 42
11 66 0.2012 0.0611 18 13
66 67 0.0047 0.0014 18 13
12 68 0.7394 0.2444 28 20
68 69 0.0047 0.0016 28 20
"""

# Substation LMP, $/MWh, over a typical day.
LAMBDA_P = [18.2, 17.1, 16.6, 16.45, 16.9, 18.3, 20.4, 26.1, 28.6, 29.6, 30.2, 30.9,
            31.5, 31.2, 31.8, 33.6, 37.9, 42.14, 40.3, 36.2, 31.4, 28.9, 24.6, 19.8]
PROFILE = [0.40, 0.38, 0.37, 0.36, 0.37, 0.40, 0.44, 0.50, 0.60, 0.68, 0.74, 0.78,
           0.80, 0.81, 0.83, 0.88, 0.95, 1.00, 0.98, 0.92, 0.78, 0.60, 0.48, 0.42]

DEFAULT_CAPACITY_MVA = 10.0
CAPACITY_MVA = {2: 3.78}  # keyed by the node a line feeds

GENERATORS = [
    {"name": "CG64", "node": 64, "p_min": 0.0, "p_max": 0.6, "kappa": 0.4,
     "segments": [{"price": 30.0, "cap": 0.3, "reactive_price": 0.0},
                  {"price": 60.0, "cap": 0.3, "reactive_price": 0.0}]},
    {"name": "CG49", "node": 49, "p_min": 0.0, "p_max": 0.5, "kappa": 0.4,
     "segments": [{"price": 45.0, "cap": 0.5, "reactive_price": 0.0}]},
]

BESS = [
    {"name": "B2", "node": 2, "e_min": 0.05, "e_max": 0.25, "e0": 0.05, "p_min": 0.0, "p_max": 0.05,
     "discharge_price": 25.0, "charge_price": 20.0},
]

# name, node, site, MW per unit of the site profile
VRE = [
    ("PV26", 26, "pv_a", 0.7),
    ("PV34", 34, "pv_b", 0.5),
    ("PV45", 45, "pv_a", 0.6),
    ("PV49", 49, "pv_b", 0.9),
    ("PV53", 53, "pv_b", 0.6),
    ("PV62", 62, "pv_a", 0.3),
    ("W11", 11, "wind_a", 0.2),
    ("W21", 21, "wind_b", 0.2),
    ("W64", 64, "wind_a", 0.4),
]

CONFIG = {"epsilon": 0.06}

HISTORY_DAYS = 30
HISTORY_START = date(2013, 6, 1)
HISTORY_SEED = 2013


def case():
    lines, nodes = [], []
    for row in BRANCHES.strip().splitlines():
        f, t, r, x, p, q = row.split()
        f, t = int(f) - 1, int(t) - 1
        lines.append({"from": f, "to": t, "r": float(r), "x": float(x),
                      "capacity_mva": CAPACITY_MVA.get(t, DEFAULT_CAPACITY_MVA)})
        if float(p) > 0:
            nodes.append({"node": t, "p_mw": float(p) / 1000, "q_mvar": float(q) / 1000})
    vre = [{"name": n, "node": i, "site": s, "scale": k, "kappa": 0.3, "zeta": 100.0}
           for n, i, s, k in VRE]
    return {
        "name": "ieee69-modified",
        "network": {"base_mva": 10.0, "base_kv": 12.66, "v0": 1.0, "impedance": "ohm", "lines": lines},
        "wholesale": {"dt_hours": 1.0, "lambda_p": LAMBDA_P, "reactive_ratio": 0.3},
        "loads": {"profile": PROFILE, "split": [0.5, 0.25, 0.25],
                  "bid_ranges": [[13.8, 28.1], [10.3, 26.5]], "reactive_ratio": 0.3,
                  "seed": 69, "nodes": nodes},
        "generators": GENERATORS,
        "bess": BESS,
        "vre": vre,
        "config": CONFIG,
    }


def history():
    """Hourly per-unit output of two PV and two wind sites over summer days."""
    rng = np.random.default_rng(HISTORY_SEED)
    hours = np.arange(24)
    shape = np.clip(np.sin(np.pi * (hours - 5.5) / 14.0), 0, None) ** 1.3
    rows = []
    for d in range(HISTORY_DAYS):
        day = HISTORY_START + timedelta(days=d)
        sky = rng.beta(5.0, 1.6)  # regional clearness, shared by the PV sites
        calm = rng.uniform(0.2, 1.0)  # regional wind level
        values = {}
        for site, lag in (("pv_a", 0.0), ("pv_b", 0.4)):
            local = np.clip(sky + rng.normal(0, 0.08), 0.05, 1.0)
            cloud = rng.uniform(0.85, 1.0, 24)
            sh = np.clip(np.sin(np.pi * (hours - 5.5 - lag) / 14.0), 0, None) ** 1.3
            values[site] = np.round(0.95 * local * cloud * sh, 4)
        for site in ("wind_a", "wind_b"):
            level = np.clip(calm + rng.normal(0, 0.1), 0.05, 1.0)
            speed = np.empty(24)
            s = level * 11.0
            for h in range(24):
                diurnal = 1.0 + 0.25 * math.cos(2 * math.pi * (h - 2) / 24)
                s = 0.8 * s + 0.2 * level * 11.0 * diurnal + rng.normal(0, 0.8)
                speed[h] = max(s, 0.0)
            # cut-in 3 m/s, rated 12 m/s
            out = np.clip((speed - 3.0) / 9.0, 0, 1) ** 2
            values[site] = np.round(out, 4)
        for h in hours:
            for site in ("pv_a", "pv_b", "wind_a", "wind_b"):
                rows.append(f"{day.isoformat()} {h:02d}:00,{site},{values[site][h]:.4f}")
    return "timestamp,site,mw\n" + "\n".join(rows) + "\n"


if __name__ == "__main__":
    (ROOT / "data").mkdir(exist_ok=True)
    (ROOT / "data" / "ieee69.json").write_text(json.dumps(case(), indent=1) + "\n")
    (ROOT / "data" / "vre_history.csv").write_text(history())
