"""Exact small-cluster dynamics vs the statistical signal model.

Sweeps a slice across a single target spin with the exact protocol
simulator and overlays the analytic response, then shows how homonuclear
decoupling extends the driven coherence time of a dense 4-spin cluster.
Run:

    python3 demos/oracle_check.py
"""

import numpy as np

from nanomri.constants import gyromagnetic
from nanomri.oracle import (DecouplingParams, SpinSystem, estimate_t_rho,
                            nss_signal_oracle, system_from_positions)
from nanomri.signal_model import (CoherenceParams, ControlSchedule,
                                  net_signal_to_load, net_slice_signal)

gamma_h = gyromagnetic("1H").gamma
a = 1.0 / 3.0
coh = CoherenceParams(probe_t2=0.1, target_t_rho=np.inf)

k = 5.0e4
rabi = 150.0
dec = DecouplingParams(tau=1e-7, ideal_pulses=True)
system = SpinSystem(np.array([k]), np.zeros((1, 1)), gamma_h)

print("slice sweep across a single spin (k = 50 krad/s):")
print(f"{'slice (rad/s)':>14s} {'oracle load':>13s} {'model load':>12s}")
for g in np.linspace(k - 2000.0, k + 2000.0, 9):
    res = nss_signal_oracle(system, g, 0.2 * np.pi / (a * g),
                            0.2 * np.pi / rabi, rabi / gamma_h,
                            decoupling=dec)
    sched = ControlSchedule(t_detect=res.t_detect_eff,
                            t_control=res.t_control_eff,
                            b_ac=rabi / gamma_h)
    model = net_signal_to_load(net_slice_signal(g, [k], sched, coh, gamma_h))
    print(f"{g:14.0f} {net_signal_to_load(res.s_net):13.4e} {model:12.4e}")

# driven coherence of a dense 4-spin cluster, decoupling off vs on
pos = np.array([[0.0, 0.0, 0.0], [2.8e-10, 0.0, 0.0],
                [0.0, 2.8e-10, 0.2e-10], [2.8e-10, 2.8e-10, 0.3e-10]])
ks = np.array([50000.0, 52000.0, 48000.0, 51000.0])
cluster = system_from_positions(pos, ks, gamma_h)
print(f"\n4-spin cluster, max |J| = "
      f"{np.abs(cluster.pair_couplings).max() / 1e3:.1f} krad/s")

bare = estimate_t_rho(cluster, None, t_max=2e-3, n_steps=400)
print(f"T_rho without decoupling: {bare.t_rho * 1e6:8.1f} us")
for b_pulse in (0.003, 0.01, 0.03):
    on = estimate_t_rho(cluster, DecouplingParams(tau=1e-6, b_pulse=b_pulse),
                        t_max=60 * bare.t_rho)
    tag = " (no 1/e crossing in horizon)" if on.lower_bound else ""
    print(f"T_rho with pulses at {b_pulse * 1e3:4.0f} mT: "
          f"{on.t_rho * 1e6:8.1f} us{tag}")
