"""
Learning and replaying one stroke
=================================

A minimum-jerk reach is encoded as a movement primitive, replayed at its own
speed and at half speed, and the effect of the basis count is shown.
"""

import dataclasses

import numpy as np

from segflow.data_core import Demonstration
from segflow.dmp_engine import DmpConfig, fit_dmp, rollout

T = 1.0
t = np.arange(251) / 250
s = t / T
y = 0.1 + 0.3 * (10 * s**3 - 15 * s**4 + 6 * s**5)
demo = Demonstration(t=t, q=y[:, None], w=np.zeros((251, 1)), q_names=["x"], w_names=["fx"])

for n_basis in (5, 10, 20, 40):
    model = fit_dmp(demo, DmpConfig(n_basis=n_basis))
    times, ys = rollout(model, 1e-3, T)
    err = np.sqrt(np.mean((np.interp(t, times, ys[:, 0]) - y) ** 2))
    print(f"{n_basis:3d} basis functions: RMSE {err * 1e3:.2f} mm")

# Doubling tau stretches the same path over twice the time.
model = fit_dmp(demo)
slow = dataclasses.replace(model, tau=2 * model.tau)
_, fast_path = rollout(model, 1e-3, T)
_, slow_path = rollout(slow, 2e-3, 2 * T)
print("max difference between normal and half-speed path:", float(np.abs(fast_path - slow_path).max()))
