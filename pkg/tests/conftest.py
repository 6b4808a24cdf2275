import cmath
import math

import numpy as np
import pytest

from hhgqo.fock import ModeDims, annihilation, creation, tensor_product
from hhgqo.model import ModelParams

TWO_PI = 2 * math.pi


def random_params(rng, n_min=2, n_max=5, alpha_max=1.5, chi_max=0.2, general_phase=True, min_harmonics=1):
    N = int(rng.integers(n_min, n_max + 1))
    pool = list(range(2, N + 1))
    k = int(rng.integers(min(min_harmonics, len(pool)), len(pool) + 1))
    harms = sorted(int(h) for h in rng.choice(pool, size=max(k, 1), replace=False))
    a = rng.uniform(0.3, alpha_max)
    phase = rng.uniform(0, TWO_PI) if general_phase else -math.pi / 2
    chi = {n: float(rng.uniform(0.0, chi_max)) for n in harms}
    return ModelParams(a * cmath.exp(1j * phase), N, chi, omega=float(rng.uniform(0.5, 2.0)))


def literal_state(amps, t, extra=1):
    """Second-order state built from ladder operators acting on the vacuum.

    Driving dim ``N + 1 + extra``, two levels per harmonic. Independent of
    the package's own assembly routine.
    """
    p = amps.params
    N = p.cutoff
    dims = [N + 1 + extra] + [2] * len(p.harmonics)
    eye = [np.eye(d) for d in dims]

    def lift(i, op):
        ops = list(eye)
        ops[i] = op
        return tensor_product(ops)

    Adag = lift(0, creation(dims[0]))
    vac = np.zeros(int(np.prod(dims)), dtype=complex)
    vac[0] = 1.0
    w = p.omega
    psi = vac.copy()
    up = vac.copy()
    for k in range(1, N + 1):
        up = Adag @ up / math.sqrt(k)  # |k> in the driving mode
        psi -= amps.theta[k] * t**2 * cmath.exp(-1j * k * w * t) * up
    for row, j in enumerate(p.harmonics):
        adag = lift(row + 1, creation(2))
        up = adag @ vac
        for k in range(N + 1):
            if k:
                up = Adag @ up / math.sqrt(k)
            psi += -1j * amps.omega[row, k] * t**3 * cmath.exp(-1j * (k + j) * w * t) * up
    return ModeDims(dims), psi


def displaced_moments(amps, t, extra=3):
    """Lab-frame N and G from the literal state and displaced ladder operators."""
    from hhgqo.model import zeroth_order_state

    p = amps.params
    dims, psi = literal_state(amps, t, extra)
    al, be = zeroth_order_state(p, t)
    eye = [np.eye(d) for d in dims]

    def lift(i, op):
        ops = list(eye)
        ops[i] = op
        return tensor_product(ops)

    ops = {1: lift(0, annihilation(dims[0]) + al * np.eye(dims[0]))}
    for i, j in enumerate(p.harmonics):
        ops[j] = lift(i + 1, annihilation(2) + be[j] * np.eye(2))
    nrm = np.vdot(psi, psi).real
    N = {i: np.vdot(o @ psi, o @ psi).real / nrm for i, o in ops.items()}
    G = {}
    for i in ops:
        for j in ops:
            if i <= j:
                v = ops[i] @ ops[j] @ psi
                G[(i, j)] = np.vdot(v, v).real / nrm
    return N, G


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
