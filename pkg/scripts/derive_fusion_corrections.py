"""Derive the single-qubit RZ corrections that close the CPHASE/SWAP fusion identity.

We look for angles (a, b) and a global phase g with

    XY(pi) . CPHASE(pi + phi) . (RZ(a) on q0) . (RZ(b) on q1) . e^{ig} = SWAP . CPHASE(phi)

The matrices are written out by hand here (independently of the package) and
the search is exhaustive over multiples of pi/8, followed by a check at
random phi that the same angles work for every phi. The results are the
golden constants ``FUSION_RZ`` and ``FUSION_GLOBAL_PHASE`` in
``cohsim.nativegates``.

Run:  python scripts/derive_fusion_corrections.py
"""

import itertools

import numpy as np

# two-qubit basis index b0 + 2*b1
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)


def cphase(phi):
    return np.diag([1, 1, 1, np.exp(1j * phi)])


def rz_pair(a, b):
    # RZ(t) = diag(e^{-it/2}, e^{it/2}); a acts on bit 0, b on bit 1
    z0 = np.array([-1, 1, -1, 1])
    z1 = np.array([-1, -1, 1, 1])
    return np.diag(np.exp(0.5j * (a * z0 + b * z1)))


def residual(phi, a, b, g):
    lhs = ISWAP @ cphase(np.pi + phi) @ rz_pair(a, b) * np.exp(1j * g)
    return np.linalg.norm(lhs - SWAP @ cphase(phi))


def main():
    grid = np.pi / 8 * np.arange(-8, 8)
    hits = [(a, b, g) for a, b, g in itertools.product(grid, repeat=3) if residual(np.pi / 2, a, b, g) < 1e-12]
    print(f"{len(hits)} solution(s) on the pi/8 grid at phi = pi/2")
    rng = np.random.default_rng(2024)
    phis = rng.uniform(0, 2 * np.pi, 10)
    for a, b, g in hits:
        worst = max(residual(p, a, b, g) for p in phis)
        print(f"  a = {a / np.pi:+.3f} pi, b = {b / np.pi:+.3f} pi, g = {g / np.pi:+.3f} pi;"
              f" worst residual over 10 random phi: {worst:.2e}")


if __name__ == "__main__":
    main()
