import cmath
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import TWO_PI, literal_state, random_params
from hhgqo.fock import ModeDims
from hhgqo.model import (
    DYSON,
    CLOSED_FORM,
    ModelParams,
    StateSecondOrder,
    TruncationError,
    assemble_state_secondorder,
    compute_omega,
    compute_omega_complex,
    compute_theta,
    compute_theta_complex,
    is_perturbative,
    norm_squared,
    perturbative_amplitudes,
    zeroth_order_state,
)
from hhgqo.oracle import Oracle, OracleConfig


def bigfloat_amplitudes(N, chi, a, dps=50):
    """Magnitudes evaluated term by term in arbitrary precision."""
    with mp.workdps(dps):
        a = mp.mpf(a)
        theta = [mp.mpf(0)] * (N + 2)
        for k in range(1, N + 1):
            s = mp.mpf(0)
            for n in range(max(2, k), N + 1):
                c = mp.mpf(chi.get(n, 0))
                s += mp.binomial(n, k) * mp.sqrt(mp.factorial(k)) / 2 * c**2 * a ** (2 * n - k)
            theta[k] = s
        omega = {}
        for n in sorted(chi):
            c = mp.mpf(chi[n])
            row = []
            for kp in range(N + 1):
                s = mp.mpf(0)
                for k in range(1, N + 1):
                    th = theta[k + kp] if k + kp <= N else 0
                    s += c / 3 * mp.binomial(n, k) * mp.sqrt(mp.factorial(k + kp) / mp.factorial(kp)) * a ** (n - k) * th
                row.append(s)
            omega[n] = row
        return [float(x) for x in theta[1 : N + 1]], {n: [float(x) for x in r] for n, r in omega.items()}


def perturbative_params(N=11):
    p = 0.3
    C = 3 * 0.02**2 / p**6
    chi = {n: math.sqrt(C / n) * p**n for n in range(3, N + 1, 2)}
    return ModelParams(-1j, N, chi)


class TestParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(alpha0=0, cutoff=3, chi={2: 0.1}),
            dict(alpha0=1, cutoff=1, chi={}),
            dict(alpha0=1, cutoff=3, chi={4: 0.1}),
            dict(alpha0=1, cutoff=3, chi={1: 0.1}),
            dict(alpha0=1, cutoff=3, chi={2: -0.1}),
            dict(alpha0=1, cutoff=3, chi={2: 0.1}, omega=0.0),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ModelParams(**kwargs)

    def test_harmonics_sorted(self):
        p = ModelParams(1.0, 5, {5: 0.1, 3: 0.2})
        assert p.harmonics == (3, 5)


class TestTheta:
    def test_zero_chi(self):
        p = ModelParams(1.0, 4, {2: 0.0, 4: 0.0})
        assert np.all(compute_theta(p) == 0)

    def test_single_top_harmonic(self):
        N, c, a = 5, 0.07, 1.3
        th = compute_theta(ModelParams(a, N, {N: c}))
        assert th[N - 1] == pytest.approx(math.sqrt(math.factorial(N)) / 2 * c**2 * a**N, rel=1e-14)

    def test_against_bigfloat_reference_params(self):
        p = perturbative_params(5)
        th = compute_theta(p)
        om = compute_omega(p, th)
        ref_th, ref_om = bigfloat_amplitudes(5, p.chi, 1.0)
        assert np.allclose(th, ref_th, rtol=1e-12, atol=0)
        for row, n in enumerate(p.harmonics):
            assert np.allclose(om[row], ref_om[n], rtol=1e-12, atol=0)

    def test_against_bigfloat_random(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            N = int(rng.integers(2, 12))
            harms = [n for n in range(2, N + 1) if rng.random() < 0.7] or [N]
            chi = {n: float(rng.uniform(0, 0.1)) for n in harms}
            a = float(rng.uniform(0.1, 10))
            p = ModelParams(-1j * a, N, chi)
            th = compute_theta(p)
            om = compute_omega(p, th)
            ref_th, ref_om = bigfloat_amplitudes(N, chi, a)
            np.testing.assert_allclose(th, ref_th, rtol=1e-12, atol=0)
            for row, n in enumerate(p.harmonics):
                np.testing.assert_allclose(om[row], ref_om[n], rtol=1e-12, atol=0)

    def test_scaling(self, rng):
        for _ in range(20):
            p = random_params(rng, n_max=8)
            xi = float(rng.uniform(0.2, 5))
            q = ModelParams(p.alpha0 * xi, p.cutoff, {n: c / xi**n for n, c in p.chi.items()})
            k = np.arange(1, p.cutoff + 1)
            assert np.allclose(compute_theta(q), compute_theta(p) / xi**k, rtol=1e-12, atol=0)


class TestOmega:
    def test_zero_row(self):
        p = ModelParams(1.0, 4, {2: 0.1, 3: 0.0, 4: 0.2})
        om = compute_omega(p, compute_theta(p))
        assert np.all(om[1] == 0)
        assert np.all(om[0][:-1] > 0)
        assert om[0][-1] == 0  # k + k' > N leaves no Theta

    def test_zero_theta(self):
        p = ModelParams(1.0, 4, {2: 0.1, 4: 0.2})
        assert np.all(compute_omega(p, np.zeros(4)) == 0)

    def test_length_mismatch(self):
        p = ModelParams(1.0, 4, {2: 0.1})
        with pytest.raises(ValueError):
            compute_omega(p, np.zeros(3))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_in_chi(self, seed):
        rng = np.random.default_rng(seed)
        p = random_params(rng, n_max=7, alpha_max=3.0, chi_max=0.1)
        base = compute_omega(p, compute_theta(p))
        n = int(rng.choice(p.harmonics))
        bumped = p.with_chi({**p.chi, n: p.chi[n] + 1e-3})
        assert np.all(compute_omega(bumped, compute_theta(bumped)) - base >= -1e-12)


class TestComplexAmplitudes:
    def test_phase_rule_matches_general_definition(self, rng):
        for _ in range(30):
            p = random_params(rng, n_max=7)
            th = compute_theta_complex(p)
            om = compute_omega_complex(p, th)
            amps = perturbative_amplitudes(p)
            assert np.allclose(amps.theta, th, rtol=1e-12, atol=1e-300)
            assert np.allclose(amps.omega, om, rtol=1e-12, atol=1e-300)

    def test_special_phase(self):
        amps = perturbative_amplitudes(perturbative_params())
        assert amps.phase_convention == "special"
        k = np.arange(12)
        assert np.allclose(amps.theta, (-1j) ** k * np.concatenate([[0], amps.theta_abs]))
        assert perturbative_amplitudes(ModelParams(1.0, 3, {3: 0.1})).phase_convention == "general"

    def test_dyson_flips_omega(self):
        p = perturbative_params(5)
        a, b = perturbative_amplitudes(p, CLOSED_FORM), perturbative_amplitudes(p, DYSON)
        assert np.array_equal(a.theta, b.theta)
        assert np.array_equal(a.omega, -b.omega)

    def test_unknown_convention(self):
        with pytest.raises(ValueError):
            perturbative_amplitudes(perturbative_params(5), "other")


class TestNorm:
    def test_t_zero(self, rng):
        assert norm_squared(perturbative_amplitudes(random_params(rng)), 0.0) == 1.0

    def test_zero_amplitudes(self):
        amps = perturbative_amplitudes(ModelParams(1.0, 3, {2: 0.0}))
        assert norm_squared(amps, 7.0) == 1.0

    def test_against_literal(self, rng):
        for _ in range(50):
            amps = perturbative_amplitudes(random_params(rng))
            t = float(rng.uniform(0, 3))
            _, psi = literal_state(amps, t)
            assert norm_squared(amps, t) == pytest.approx(np.vdot(psi, psi).real, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 5), st.floats(0, 5))
    def test_monotone(self, seed, t1, t2):
        amps = perturbative_amplitudes(random_params(np.random.default_rng(seed)))
        lo, hi = sorted((t1, t2))
        assert norm_squared(amps, lo) <= norm_squared(amps, hi)


class TestZerothOrder:
    def test_t_zero(self):
        p = perturbative_params()
        alpha, betas = zeroth_order_state(p, 0.0)
        assert alpha == p.alpha0
        assert all(b == 0 for b in betas.values())

    def test_modulus(self, rng):
        p = random_params(rng)
        t = 1.7
        _, betas = zeroth_order_state(p, t)
        for n, b in betas.items():
            assert abs(b) ** 2 == pytest.approx(p.chi[n] ** 2 * abs(p.alpha0) ** (2 * n) * t**2, rel=1e-13)

    def test_value(self):
        p = ModelParams(1.0, 3, {3: 0.02})
        _, betas = zeroth_order_state(p, 3 * math.pi)
        with mp.workdps(30):
            ref = float(mp.mpf("0.0004") * (3 * mp.pi) ** 2)
        assert abs(betas[3]) ** 2 == pytest.approx(ref, rel=1e-14)
        assert ref == pytest.approx(3.553e-2, rel=1e-3)


class TestAssembly:
    def test_matches_literal(self, rng):
        for _ in range(20):
            amps = perturbative_amplitudes(random_params(rng))
            t = float(rng.uniform(0, 3))
            dims, psi = literal_state(amps, t)
            st_ = assemble_state_secondorder(amps, t, dims)
            assert np.allclose(st_.amplitudes, psi, atol=1e-15)

    def test_t_zero_vacuum(self):
        amps = perturbative_amplitudes(perturbative_params(5))
        s = assemble_state_secondorder(amps, 0.0)
        assert s.amplitudes[0] == 1 and np.count_nonzero(s.amplitudes) == 1

    def test_norm(self, rng):
        amps = perturbative_amplitudes(random_params(rng))
        s = assemble_state_secondorder(amps, 1.3)
        assert s.norm_squared() == pytest.approx(norm_squared(amps, 1.3), rel=1e-13)

    def test_truncation_error(self):
        amps = perturbative_amplitudes(ModelParams(1.0, 4, {2: 0.1, 4: 0.1}))
        with pytest.raises(TruncationError):
            assemble_state_secondorder(amps, 1.0, ModeDims([4, 2, 2]))

    @pytest.mark.parametrize("convention", [CLOSED_FORM, DYSON])
    def test_lab_frame_overlap_with_oracle(self, convention):
        # third-order amplitude error bounds the infidelity by O((chi t)^4)
        chi = 1e-3
        p = ModelParams(-1j, 3, {2: chi, 3: chi})
        t = TWO_PI
        orc = Oracle(p, OracleConfig())
        exact = orc.evolve(t).state
        amps = perturbative_amplitudes(p, convention)
        approx = assemble_state_secondorder(amps, t, orc.dims, frame="lab").normalized()
        infidelity = 1 - abs(np.vdot(approx.amplitudes, exact.amplitudes)) ** 2
        assert infidelity < 10 * (chi * t) ** 4


class TestValidity:
    def test_small_coupling_valid(self):
        amps = perturbative_amplitudes(perturbative_params())
        s = StateSecondOrder(amps.params, amps, 1.5 * TWO_PI)
        assert s.valid

    def test_large_coupling_flagged(self):
        amps = perturbative_amplitudes(ModelParams(-2j, 3, {3: 0.5}))
        assert not is_perturbative(amps, 5.0)
