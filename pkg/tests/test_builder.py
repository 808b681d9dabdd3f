import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import rel_err
from ssdss.analysis import differentiate, eval_frf
from ssdss.bench import LumpedSystem, chain, make_lumped, two_dof_chain
from ssdss.builder import (
    RcmSource,
    assemble_full,
    build_inband,
    build_model,
    cb_rcm_velocity_model,
    cb_velocity_closed_form,
    compute_cb,
    impose_newton,
    impose_newton_legacy,
    lr_rcm_model,
    modal_frf,
    rcm_params,
    rcm_quality,
    to_real_form,
    ur_rcm_model,
)
from ssdss.types import Domain, ModalModel, RcmConfig, Representation, StateSpaceModel

DEFAULT_CFG = RcmConfig.from_hz(omega_lr_hz=0.1, xi_lr=0.1, omega_ur_hz=1.5e4, xi_ur=0.1, omega_cb_hz=1.5e4, xi_cb=0.1)


def single_mode(lam=-1 + 10j, psi=1.0, l=1.0):
    return ModalModel([lam], [[l]], [[psi]], [[0.0]], [[0.0]])


def nonprop_2dof():
    return chain([1.0, 1.0], [1e4, 1e4], dampers=[5.0, 0.5])


# --- modal_frf ------------------------------------------------------------


def test_modal_frf_constant_only():
    u = np.array([[1.5, -2.0], [0.3, 4.0]])
    m = ModalModel(np.zeros(0), np.zeros((0, 2)), np.zeros((2, 0)), np.zeros((2, 2)), u)
    H = modal_frf(m, [1.0, 5.0, 30.0])
    assert np.array_equal(H.values, np.broadcast_to(u, (3, 2, 2)))


def test_modal_frf_single_mode():
    H = modal_frf(single_mode(), [10.0]).values[0, 0, 0]
    assert H == pytest.approx(1 + 1 / (1 + 20j), rel=1e-15)


def test_modal_frf_two_dof_oracle():
    M, C, K = two_dof_chain()
    modal, oracle = make_lumped(M, C, K)
    w = np.linspace(1.0, 100.0, 400)
    assert rel_err(modal_frf(modal, w).values, oracle(w).values) <= 1e-10


def test_modal_frf_rejects_zero_frequency():
    with pytest.raises(ValueError):
        modal_frf(single_mode(), [0.0, 1.0])


# --- build_inband -----------------------------------------------------------


def test_build_inband_structure():
    m = build_inband(single_mode(psi=2.0, l=3.0))
    assert np.array_equal(m.A, np.diag([-1 + 10j, -1 - 10j]))
    assert np.array_equal(m.B, [[3], [3]])
    assert np.array_equal(m.C, [[2, 2]])
    assert m.representation is Representation.DIAGONAL_COMPLEX
    assert m.domain is Domain.DISPLACEMENT


def test_build_inband_empty():
    m = ModalModel(np.zeros(0), np.zeros((0, 2)), np.zeros((3, 0)), np.zeros((3, 2)), np.zeros((3, 2)))
    ss = build_inband(m)
    assert ss.n_states == 0
    assert np.array_equal(eval_frf(ss, [1.0, 2.0]).values, np.zeros((2, 3, 2)))


def test_build_inband_matches_modal_frf():
    M, C, K = two_dof_chain()
    modal, _ = make_lumped(M, C, K)
    w = np.linspace(1.0, 100.0, 200)
    assert rel_err(eval_frf(build_inband(modal), w).values, modal_frf(modal, w).values) <= 1e-12


# --- RCMs -----------------------------------------------------------------


def test_rcm_params_zero_matrix():
    assert rcm_params(np.zeros((3, 2)), 100.0, 0.1).n_rcm == 0
    assert ur_rcm_model(np.zeros((3, 2)), DEFAULT_CFG).n_states == 0
    assert lr_rcm_model(np.zeros((3, 2)), DEFAULT_CFG).n_states == 0


def test_rcm_params_scalar():
    w, xi = 2 * np.pi * 100, 0.1
    r = rcm_params([[2.0]], w, xi)
    assert r.n_rcm == 1
    assert r.poles[0] == pytest.approx(-xi * w + 1j * w * np.sqrt(1 - xi**2), rel=1e-15)
    m = build_inband(ModalModel(r.poles, r.factors, r.shapes, [[0.0]], [[0.0]]))
    assert eval_frf(m, [0.0]).values[0, 0, 0] == pytest.approx(2.0, rel=1e-14)


def test_rcm_params_bounds():
    for xi in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            rcm_params([[1.0]], 1.0, xi)
    with pytest.raises(ValueError):
        rcm_params([[1.0]], 0.0, 0.1)


def test_rcm_params_drops_tiny_singular_values():
    M = np.outer([1.0, 2.0, 3.0], [1.0, -1.0])
    assert rcm_params(M, 10.0, 0.1).n_rcm == 1


def test_rcm_params_sign_canonical():
    r = rcm_params(np.array([[-3.0, 1.0], [0.5, -2.0]]), 10.0, 0.1)
    for k in range(r.n_rcm):
        col = r.shapes[:, k].real
        assert col[np.argmax(np.abs(col))] > 0


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-1e3, 1e3)), st.floats(1.0, 1e5), st.floats(0.01, 0.9))
def test_rcm_dc_exactness(M, omega, xi):
    m = ur_rcm_model(M, RcmConfig(1.0, 0.1, omega, xi, omega, 0.1))
    H0 = eval_frf(m, [0.0]).values[0]
    scale = max(np.max(np.abs(M)), 1e-300)
    if np.max(np.abs(M)) == 0:
        assert m.n_states == 0
    else:
        _, s, _ = np.linalg.svd(M)
        # components below the drop tolerance are not represented
        assert np.max(np.abs(H0 - M)) <= 1e-12 * scale + 2e-12 * s[0]


def test_ur_rcm_band_edge():
    w = 2 * np.pi * 500
    m = ur_rcm_model([[2.0]], DEFAULT_CFG)
    H = eval_frf(m, [w]).values[0, 0, 0]
    wu, xi = DEFAULT_CFG.omega_ur, DEFAULT_CFG.xi_ur
    closed = wu**2 / (-(w**2) + 2j * w * xi * wu + wu**2) * 2.0
    assert H == pytest.approx(closed, rel=1e-12)
    # with xi = 0.1 the damping term 2 xi w/wu dominates the (w/wu)^2 term
    r = w / wu
    assert abs(H - 2.0) / 2.0 == pytest.approx(r * np.sqrt(r * r + 4 * xi * xi), rel=0.01)
    cfg0 = RcmConfig(1.0, 0.1, wu, 1e-9, wu, 0.1)
    H0 = eval_frf(ur_rcm_model([[2.0]], cfg0), [w]).values[0, 0, 0]
    assert abs(H0 - 2.0) / 2.0 <= 1.2e-3


def test_ur_rcm_from_truncated_two_dof():
    M, C, K = two_dof_chain()
    _, oracle = make_lumped(M, C, K)
    lam, _ = LumpedSystem(M, C, K).eig()
    w_cut = np.sort(np.abs(lam[lam.imag > 0]))[1] - 1.0
    trunc, _ = make_lumped(M, C, K, omega_cut=w_cut)
    assert trunc.n_modes == 1
    cfg = RcmConfig.from_band(1.0, 100.0)
    full = assemble_full(build_inband(trunc), lr_rcm_model(trunc.lower_residual, cfg), ur_rcm_model(trunc.upper_residual, cfg))
    w = np.array([50.5])
    assert rel_err(eval_frf(full, w).values, oracle(w).values) <= 0.01


def test_lr_rcm_asymptote():
    cfg = RcmConfig.from_hz(omega_lr_hz=0.1, xi_lr=0.1, omega_ur_hz=1e3, xi_ur=0.1, omega_cb_hz=1e3, xi_cb=0.1)
    w = 2 * np.pi * 20
    H = eval_frf(lr_rcm_model([[1.0]], cfg), [w]).values[0, 0, 0]
    ideal = 1.0 / (1j * w) ** 2
    assert abs(H - ideal) / abs(ideal) <= 0.01


def test_assemble_full_additivity():
    M, C, K = nonprop_2dof()
    modal, _ = make_lumped(M, C, K, omega_cut=120.0)
    modal = modal.replace(lower_residual=np.array([[1.0, 0.2], [0.2, 0.5]]))
    ib = build_inband(modal)
    lr = lr_rcm_model(modal.lower_residual, DEFAULT_CFG)
    ur = ur_rcm_model(modal.upper_residual, DEFAULT_CFG)
    full = assemble_full(ib, lr, ur)
    assert full.n_states == ib.n_states + lr.n_states + ur.n_states
    w = np.linspace(5.0, 500.0, 100)
    parts = sum(eval_frf(p, w).values for p in (ib, lr, ur))
    assert rel_err(eval_frf(full, w).values, parts) <= 1e-14


def test_assemble_full_empty_residuals():
    ib = build_inband(single_mode())
    e = StateSpaceModel.empty(1, 1)
    full = assemble_full(ib, e, e)
    assert np.array_equal(full.A, ib.A) and np.array_equal(full.B, ib.B) and np.array_equal(full.C, ib.C)


def test_assemble_full_mismatch():
    with pytest.raises(ValueError):
        assemble_full(build_inband(single_mode()), StateSpaceModel.empty(2, 1), StateSpaceModel.empty(1, 1))


def test_full_pipeline_matches_modal_with_rcm_residuals():
    """Full model equals the modal FRF whose residual terms are the RCM responses."""
    M, C, K = nonprop_2dof()
    modal, _ = make_lumped(M, C, K, omega_cut=120.0)
    modal = modal.replace(lower_residual=np.array([[1.0, 0.2], [0.2, 0.5]]))
    full = build_model(modal, DEFAULT_CFG, newton=False)
    w = np.linspace(5.0, 500.0, 100)
    lr = eval_frf(lr_rcm_model(modal.lower_residual, DEFAULT_CFG), w).values
    ur = eval_frf(ur_rcm_model(modal.upper_residual, DEFAULT_CFG), w).values
    ref = modal_frf(modal.replace(lower_residual=np.zeros((2, 2)), upper_residual=np.zeros((2, 2))), w).values + lr + ur
    assert rel_err(eval_frf(full, w).values, ref) <= 1e-10


# --- C.B and Newton -------------------------------------------------------


def test_compute_cb_proportional_is_zero():
    M, C, K = two_dof_chain()
    modal, _ = make_lumped(M, C, K)
    assert np.max(np.abs(compute_cb(build_inband(modal)))) <= 1e-12


def test_compute_cb_single_mode():
    cb = compute_cb(build_inband(single_mode(psi=1 + 1j, l=1.0)))
    assert cb[0, 0] == pytest.approx(2.0, rel=1e-15)


def test_compute_cb_nonproportional_residue_oracle():
    M, C, K = nonprop_2dof()
    sys = LumpedSystem(M, C, K)
    ss = sys.state_space()
    lam, VL, VR = scipy.linalg.eig(ss.A, left=True, right=True)
    # residue of pole k: (C v_k)(w_k^H B) / (w_k^H v_k)
    res = [np.outer(ss.C @ VR[:, k], VL[:, k].conj() @ ss.B) / (VL[:, k].conj() @ VR[:, k]) for k in range(lam.size)]
    first = np.argmin(np.where(lam.imag > 0, np.abs(lam), np.inf))
    oracle = 2 * np.real(res[first])
    trunc, _ = make_lumped(M, C, K, omega_cut=np.abs(lam[first]) * 1.01)
    assert trunc.n_modes == 1
    assert np.max(np.abs(compute_cb(build_inband(trunc)) - oracle)) <= 1e-12 * max(1.0, np.max(np.abs(oracle)))


def test_compute_cb_rejects_broken_pairs():
    m = build_inband(single_mode(psi=1 + 1j))
    bad = m.replace(C=np.array([[1 + 1j, 1 + 1j]]))
    with pytest.raises(ValueError):
        compute_cb(bad)


def test_impose_newton_proportional_unchanged():
    M, C, K = two_dof_chain()
    modal, _ = make_lumped(M, C, K)
    ib = build_inband(modal)
    assert impose_newton(ib, DEFAULT_CFG) is ib
    assert impose_newton_legacy(ib, 2 * np.pi * 5e3) is ib


def test_impose_newton_zeroes_cb():
    M, C, K = nonprop_2dof()
    modal, _ = make_lumped(M, C, K, omega_cut=120.0)
    full = build_model(modal, DEFAULT_CFG, newton=False)
    cb = compute_cb(full)
    assert np.max(np.abs(cb)) > 1e-8
    inl = impose_newton(full, DEFAULT_CFG)
    assert inl.n_states == full.n_states + 2 * np.linalg.matrix_rank(cb)
    assert np.max(np.abs(inl.C @ inl.B)) <= 1e-10 * max(1.0, np.max(np.abs(cb)))


def test_impose_newton_bad_damping():
    with pytest.raises(ValueError):
        RcmConfig(1.0, 0.1, 10.0, 0.1, 10.0, 1.0)


def _newton_500hz(xi_cb):
    """Single non-proportional mode (second mode dropped, no residuals)."""
    M, C, K = nonprop_2dof()
    modal, _ = make_lumped(M, C, K, omega_cut=100.0)
    modal = modal.replace(upper_residual=np.zeros((2, 2)))
    cfg = RcmConfig.from_hz(omega_lr_hz=0.1, xi_lr=0.1, omega_ur_hz=1.5e4, xi_ur=0.1, omega_cb_hz=1.5e4, xi_cb=xi_cb)
    inl = build_model(modal, cfg)
    w = np.array([2 * np.pi * 500])
    acc = eval_frf(differentiate(differentiate(inl)), w).values
    ref = -(w[0] ** 2) * modal_frf(modal, w).values
    cb = compute_cb(build_inband(modal))
    vel = 1j * w[0] * modal_frf(modal, w).values
    return rel_err(acc, ref), np.max(np.abs(cb)) / np.max(np.abs(vel))


def test_impose_newton_500hz_deviation():
    r = 500 / 1.5e4
    for xi in (0.1, 1e-9):
        dev, cb_ratio = _newton_500hz(xi)
        # the Newton RCM term deviates from zero by |r^2 - 2j xi r| / |1 - r^2 + 2j xi r|
        expected = abs(r * r - 2j * xi * r) / abs(1 - r * r + 2j * xi * r)
        assert dev == pytest.approx(cb_ratio * expected, rel=1e-6)
    # the (omega/omega_cb)^2 level is reached once the RCM damping vanishes
    assert _newton_500hz(1e-9)[0] <= 1e-3


def test_cb_velocity_closed_form_examples():
    cfg = DEFAULT_CFG
    H0 = cb_velocity_closed_form([[1.0, 2.0]], cfg, [0.0]).values
    assert np.array_equal(H0, np.zeros((1, 1, 2)))
    assert np.array_equal(cb_velocity_closed_form(np.zeros((2, 2)), cfg, [1.0, 2.0]).values, np.zeros((2, 2, 2)))
    w = 2 * np.pi * 500
    v = cb_velocity_closed_form([[1.0]], cfg, [w]).values[0, 0, 0]
    wc, xi = cfg.omega_cb, cfg.xi_cb
    assert v == pytest.approx(wc**2 / (-(w**2) + 2j * w * xi * wc + wc**2) - 1, rel=1e-14)
    r = w / wc
    assert abs(v) == pytest.approx(r * np.sqrt(r * r + 4 * xi * xi), rel=0.01)
    cfg0 = RcmConfig(1.0, 0.1, wc, 0.1, wc, 1e-9)
    v0 = cb_velocity_closed_form([[1.0]], cfg0, [w]).values[0, 0, 0]
    assert abs(v0) == pytest.approx(1.1e-3, rel=0.02)


def test_cb_velocity_model_matches_closed_form():
    CB = np.array([[1.0, -0.3], [0.2, 2.0], [0.5, 0.1]])
    w = np.linspace(1.0, 2 * DEFAULT_CFG.omega_cb, 512)
    H = eval_frf(cb_rcm_velocity_model(CB, DEFAULT_CFG), w).values
    ref = cb_velocity_closed_form(CB, DEFAULT_CFG, w).values
    assert np.max(np.abs(H - ref)) <= 1e-10 * np.max(np.abs(CB))


def test_legacy_vs_damped_at_500hz():
    w = 2 * np.pi * 500
    wc = 2 * np.pi * 5e3
    full = build_inband(single_mode(lam=-5 + 2000j, psi=0.5 + 0.5j, l=1.0))
    cb = compute_cb(full)[0, 0]
    leg = impose_newton_legacy(full, wc)
    dmp = impose_newton(full, RcmConfig(1.0, 0.1, wc, 0.1, wc, 1e-9))
    base = eval_frf(full, [w]).values[0, 0, 0]
    dev_leg = abs(1j * w * (eval_frf(leg, [w]).values[0, 0, 0] - base)) / abs(cb)
    dev_dmp = abs(1j * w * (eval_frf(dmp, [w]).values[0, 0, 0] - base)) / abs(cb)
    assert dev_leg == pytest.approx(0.111, abs=5e-4)
    assert dev_dmp == pytest.approx(0.0101, abs=5e-5)
    assert dev_dmp < dev_leg


# --- real form ------------------------------------------------------------


def test_to_real_form_single_pair():
    m = build_inband(single_mode(psi=2 + 1j, l=1 - 0.5j))
    r = to_real_form(m)
    assert np.array_equal(r.A, [[-1.0, 10.0], [-10.0, -1.0]])
    assert r.representation is Representation.REAL_VALUED
    w = np.linspace(0.5, 40, 100)
    assert rel_err(eval_frf(r, w).values, eval_frf(m, w).values) <= 1e-12


def test_to_real_form_two_dof():
    M, C, K = nonprop_2dof()
    modal, _ = make_lumped(M, C, K, omega_cut=120.0)
    m = build_model(modal, DEFAULT_CFG)
    r = to_real_form(m)
    assert not np.iscomplexobj(r.A)
    w = np.linspace(1.0, 3000.0, 500)
    assert rel_err(eval_frf(r, w).values, eval_frf(m, w).values) <= 1e-12


def test_to_real_form_empty_and_broken():
    e = StateSpaceModel.empty(2, 2)
    assert to_real_form(e).n_states == 0
    m = build_inband(single_mode(psi=1 + 1j))
    with pytest.raises(ValueError):
        to_real_form(m.replace(C=np.array([[1 + 1j, 3 - 1j]])))


# --- quality diagnostic -----------------------------------------------------


def test_rcm_quality_curves_and_warning():
    M, C, K = nonprop_2dof()
    modal, _ = make_lumped(M, C, K, omega_cut=120.0)
    modal = modal.replace(lower_residual=np.array([[1.0, 0.0], [0.0, 1.0]]))
    w = np.linspace(2 * np.pi * 20, 2 * np.pi * 500, 50)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        q = rcm_quality(modal, DEFAULT_CFG, w)
    assert set(q) == {"grid", "ur", "lr", "cb"}
    ur = eval_frf(ur_rcm_model(modal.upper_residual, DEFAULT_CFG), w).values
    exact = np.max(np.abs(ur - modal.upper_residual), axis=(1, 2)) / np.max(np.abs(modal.upper_residual))
    assert np.allclose(q["ur"], exact, rtol=1e-12)
    close = RcmConfig(2 * np.pi * 15, 0.1, 2 * np.pi * 600, 0.1, 2 * np.pi * 600, 0.1)
    with pytest.warns(RuntimeWarning):
        rcm_quality(modal, close, w)


def test_rcm_source_tag():
    assert rcm_params([[1.0]], 1.0, 0.1, RcmSource.CB).source is RcmSource.CB
