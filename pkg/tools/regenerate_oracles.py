"""Recompute the frozen reference values used by the tests, independently of the package numerics.

Needs mpmath (``pip install .[oracle]``). Prints:

* the Matérn-5/2 kernel at r = 1 to 25 digits,
* the first three splitmix64 outputs for seed 1234567 from a separate implementation,
* the EP of random5(seed) from a 40-digit secant iteration on the closest-pair
  ``p = (l1 - l2)**2`` of ``mpmath.eig``.

Only the random5 matrix entries and a starting guess come from the package.
"""

import mpmath as mp

from epgpr import brute_force_ep, random5

mp.mp.dps = 40
MASK = (1 << 64) - 1


def splitmix64(seed):
    s = seed
    while True:
        s = (s + 0x9E3779B97F4A7C15) & MASK
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        yield z ^ (z >> 31)


def ep_high_precision(seed, x0):
    base = random5(seed).base
    B = mp.matrix([[mp.mpc(complex(z).real, complex(z).imag) for z in row] for row in base])

    def p(k):
        A = B.copy()
        A[0, 1] += k
        A[1, 0] += k
        w = mp.eig(A, left=False, right=False)
        return min(((w[i] - w[j]) ** 2 for i in range(5) for j in range(i + 1, 5)), key=abs)

    return mp.findroot(p, mp.mpc(x0), solver="secant", tol=1e-50, maxsteps=200)


if __name__ == "__main__":
    r5 = mp.sqrt(5)
    print("matern_at_one", mp.nstr((1 + r5 + mp.mpf(5) / 3) * mp.e ** (-r5), 25))
    g = splitmix64(1234567)
    print("splitmix64(1234567)", [hex(next(g)) for _ in range(3)])
    for seed in (1, 2, 3, 4, 5, 42):
        guess = brute_force_ep(random5(seed), 1j)
        e = ep_high_precision(seed, guess + 1e-3)
        print(f"seed {seed}: {mp.nstr(e.real, 17)} {mp.nstr(e.imag, 17)}  (float64 oracle off by {abs(complex(e) - guess):.1e})")
