import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stablesim.constructed import brute_force_class, sample_constructed
from stablesim.errors import DimensionMismatchError, NonSquareError, NotApplicableError
from stablesim.linalg import matpow
from stablesim.spectra import (
    ConvergenceClass as C,
    SpectrumReport,
    classify,
    fixed_point_projector,
    oscillation_term,
    simulate_lifted,
    spectral_radius,
)

ROT = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_classify_origin():
    r = classify([[0.9, 0.0], [0.0, 0.5]], 1e-8)
    assert r.cls is C.ConvergesToOrigin
    assert r.spectral_radius == pytest.approx(0.9)
    assert np.array_equal(r.projector, np.zeros((2, 2)))


def test_classify_jordan_block_is_unstable():
    r = classify([[1.0, 1.0], [0.0, 1.0]], 1e-8)
    assert r.cls is C.Unstable
    assert r.defect_detected


def test_classify_minus_one():
    r = classify([[-1.0]], 1e-8)
    assert r.cls is C.ConvergesToInvariantSet
    assert r.J2 == [0]
    assert r.projector is None


def test_classify_rotation():
    r = classify(ROT, 1e-8)
    assert r.cls is C.ConvergesToInvariantSet
    assert len(r.J3) == 1
    j, k, delta = r.J3[0]
    assert {j, k} == {0, 1}
    assert r.eigenvalues[j].imag > 0
    assert delta == pytest.approx(math.pi / 2, abs=1e-12)


def test_classify_scale_aware():
    assert classify(0.5 * np.eye(3)).cls is C.ConvergesToOrigin
    assert classify(2.0 * np.eye(3)).cls is C.Unstable
    assert classify(np.eye(3)).cls is C.ConvergesToFixedPoint


def test_classify_defective_rotation_block():
    # two copies of a unit rotation coupled by an identity block: defective pair
    a = np.zeros((4, 4))
    a[:2, :2] = ROT
    a[2:, 2:] = ROT
    a[:2, 2:] = np.eye(2)
    r = classify(a)
    assert r.cls is C.Unstable and r.defect_detected
    assert brute_force_class(a) is C.Unstable


def test_classify_rejects_bad_input():
    with pytest.raises(NonSquareError):
        classify(np.ones((2, 3)))
    with pytest.raises(ValueError):
        classify(np.eye(2), 0.5)


def test_report_json_keys_and_round_trip():
    r = classify(ROT)
    d = json.loads(r.to_json())
    assert set(d) == {"class", "eigenvalues", "spectral_radius", "J1", "J2", "J3", "projector", "defect_detected"}
    assert d["class"] == "ConvergesToInvariantSet"
    back = SpectrumReport.from_dict(d)
    assert back.cls is r.cls and back.J3 == r.J3


def test_projector_examples():
    assert np.allclose(fixed_point_projector(np.eye(2)), np.eye(2))
    assert np.array_equal(fixed_point_projector([[0.5, 0.0], [0.0, 0.3]]), np.zeros((2, 2)))
    a = np.array([[0.5, 1.0], [0.0, 1.0]])
    p = fixed_point_projector(a)
    assert np.allclose(p, [[0.0, 2.0], [0.0, 1.0]], atol=1e-12)
    assert np.allclose(matpow(a, 60), p, atol=1e-12)


def test_projector_not_applicable():
    with pytest.raises(NotApplicableError):
        fixed_point_projector(ROT)
    with pytest.raises(NotApplicableError):
        fixed_point_projector(2.0 * np.eye(2))


def test_oscillation_examples():
    assert np.allclose(oscillation_term([[-1.0]], 5), [[-1.0]])
    assert np.allclose(oscillation_term(ROT, 1), ROT, atol=1e-12)
    assert np.allclose(oscillation_term(ROT, 2), -np.eye(2), atol=1e-12)


def test_oscillation_reduces_to_projector_and_zero():
    a = np.array([[0.5, 1.0], [0.0, 1.0]])
    assert np.allclose(oscillation_term(a, 7), fixed_point_projector(a))
    assert np.array_equal(oscillation_term(0.5 * np.eye(2), 3), np.zeros((2, 2)))
    with pytest.raises(NotApplicableError):
        oscillation_term(2.0 * np.eye(2), 1)


def test_oscillation_matches_powers_for_pure_rotations():
    # every mode on the unit circle: M(l) is A**l itself
    theta = 0.7
    c, s = math.cos(theta), math.sin(theta)
    u = np.array([[2.0, 1.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 1.0]])
    d = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, -1.0]])
    a = u @ d @ np.linalg.inv(u)
    for l in (1, 2, 5, 33):
        assert np.allclose(oscillation_term(a, l), matpow(a, l), atol=1e-10)


def test_simulate_examples():
    out = simulate_lifted(np.eye(2), [1.0, 2.0], 3)
    assert len(out) == 4 and all(np.array_equal(v, [1.0, 2.0]) for v in out)
    assert [float(v[0]) for v in simulate_lifted([[0.5]], [8.0], 3)] == [8.0, 4.0, 2.0, 1.0]
    traj = simulate_lifted(ROT, [1.0, 0.0], 4)
    assert np.allclose(traj, [[1, 0], [0, -1], [-1, 0], [0, 1], [1, 0]])
    with pytest.raises(DimensionMismatchError):
        simulate_lifted(np.eye(2), [1.0], 2)


def test_spectral_radius_examples():
    assert spectral_radius(np.eye(3)) == pytest.approx(1.0)
    assert spectral_radius([[0.0, 2.0], [0.0, 0.0]]) == 0.0
    assert spectral_radius(ROT) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# properties over the constructed family

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_projector_idempotent_and_invariant(seed):
    m = sample_constructed(np.random.default_rng(seed), target=C.ConvergesToFixedPoint)
    p = fixed_point_projector(m.A)
    size = np.linalg.norm(p)
    assert np.linalg.norm(p @ p - p) <= 1e-8 * size
    assert np.linalg.norm(m.A @ p - p) <= 1e-8 * size


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([4, 5, 6, 7]))
def test_report_invariants(seed, n):
    m = sample_constructed(np.random.default_rng(seed), n=n)
    r = classify(m.A)
    assert r.spectral_radius == pytest.approx(float(np.max(np.abs(r.eigenvalues))))
    members = list(r.J1) + list(r.J2) + [i for j, k, _ in r.J3 for i in (j, k)]
    assert len(members) == len(set(members))
    unit = {i for i, z in enumerate(r.eigenvalues) if abs(abs(z) - 1.0) <= 1e-8}
    assert set(members) == unit
    for j, k, delta in r.J3:
        assert -math.pi < delta <= math.pi
        z = r.eigenvalues[j]
        assert delta == pytest.approx(math.atan2(z.imag, z.real))
    assert (r.projector is not None) == (r.cls in (C.ConvergesToOrigin, C.ConvergesToFixedPoint))
    assert r.cls is m.expected


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_oscillation_error_decays_to_roundoff(seed):
    # the sub-unit remainder U D_sub^l U^-1 shrinks like rho_sub^l until it
    # reaches float64 resolution
    m = sample_constructed(np.random.default_rng(seed), target=C.ConvergesToInvariantSet)
    for l in (64, 128, 256):
        err = np.linalg.norm(matpow(m.A, l) - oscillation_term(m.A, l))
        floor = 1e-9 * max(1.0, np.linalg.norm(matpow(m.A, l)))
        assert err <= 2.0 * m.sub_radius ** l * m.cond + floor
