"""Walk through the EP search on the 2x2 family [[1, k], [k, -1]].

The family has exceptional points at k = +-i. A loop around k = i swaps
the two eigenvalues, the swapped pair seeds a GP surrogate of
p = (l1 - l2)**2, and a few exact diagonalizations at surrogate roots
pin the EP down.

Run:  python demos/kato_walkthrough.py
"""

import warnings

import numpy as np

from epgpr import EpSearchConfig, Orbit, extract_training_set, group_paths, iterate, kato2, trace_orbit

warnings.simplefilter("ignore")

family = kato2()
orbit = Orbit(center=0.8j, radius=0.5, n_points=100)

# 1. trace the loop and group the spectra into continuous paths
spectra = trace_orbit(family, orbit)
report = group_paths(spectra)
a, b = report.exchanging_pairs[0]
print(f"exchanging pair {a, b}")
print(f"  path {a}: start {report.paths[a].start:.4f}  end {report.paths[a].end:.4f}")
print(f"  path {b}: start {report.paths[b].start:.4f}  end {report.paths[b].end:.4f}")

# 2. twenty evenly spaced points of the pair form the initial training set
training = extract_training_set(report, 0, subsample=20)
p = np.array([t.p for t in training])
print(f"initial |p| range: {np.abs(p).min():.3f} .. {np.abs(p).max():.3f}")

# 3. iterate: fit, find the surrogate root, diagonalize there, add the pair
result = iterate(family, training, EpSearchConfig())
s = result.state
print(f"\n{'it':>3} {'kappa':>28} {'min kernel eig':>15} {'delta lambda':>13}")
for k, (kap, eig, dl) in enumerate(zip(s.kappa_history, s.kernel_eig_history, s.delta_lambda_history)):
    print(f"{k:>3} {kap.real:>13.9f}{kap.imag:+.12f}i {eig:>15.3e} {dl:>13.3e}")

print(f"\nstatus {result.status} after {result.n_diagonalizations} diagonalizations")
print(f"kappa_EP = {complex(result.kappa_ep):.12f}, |kappa_EP - i| = {abs(result.kappa_ep - 1j):.2e}")
# near an EP the splitting grows like a square root: delta lambda ~ 2 sqrt(2 |kappa - i|)
print(f"delta lambda = {result.delta_lambda:.2e} (square-root law predicts "
      f"{2 * np.sqrt(2 * abs(result.kappa_ep - 1j)):.2e})")
