"""Watch the noising channel pull two sources together.

The forward process is a data-processing channel, so the KL divergence between
any two sources can only shrink as depth grows.  We track it two independent
ways: in closed form for a pair of Gaussians, and by brute-force quadrature
for a bimodal mixture against a single bump — no Gaussian structure assumed.

Run:  python3 demos/02_kl_contraction.py
"""

import math

import numpy as np

from lorid import default_schedule, kl_gaussian_curve, kl_quadrature_forward

sched = default_schedule()
ts = [0, 50, 100, 200, 400, 700, 1000]

p1 = (np.array([1.0, -0.5]), np.array([[1.5, 0.4], [0.4, 0.8]]))
p2 = (np.zeros(2), np.eye(2))
closed = kl_gaussian_curve(p1, p2, sched, ts)


def bimodal(x):
    x = np.asarray(x)
    return 0.5 * (np.exp(-0.5 * ((x + 1.5) / 0.4) ** 2)
                  + np.exp(-0.5 * ((x - 1.5) / 0.4) ** 2)) / (0.4 * math.sqrt(2 * math.pi))


def bump(x):
    x = np.asarray(x)
    return np.exp(-0.5 * x**2) / math.sqrt(2 * math.pi)


quad = [kl_quadrature_forward(bimodal, bump, sched, t) for t in ts]

print("KL divergence between two sources after diffusing both to depth t:")
print(f"{'t':>5} {'two Gaussians (closed form)':>28} {'bimodal vs bump (quadrature)':>30}")
for t, a, b in zip(ts, closed, quad):
    print(f"{t:>5} {a:>28.6f} {b:>30.6f}")

drops_closed = np.all(np.diff(closed) <= 1e-12)
drops_quad = np.all(np.diff(quad) <= 1e-6)
print()
print(f"monotone non-increasing: closed form {drops_closed}, quadrature {drops_quad}")
print("By depth 1000 both pairs are nearly indistinguishable — which is exactly")
print("why purification works: the adversarial and clean inputs flow to the")
print("same place, and the reverse process walks back to the clean manifold.")
