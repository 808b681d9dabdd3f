import numpy as np
import pytest

from conftest import rel_err
from ssdss.analysis import eval_frf
from ssdss.bench import (
    LumpedSystem,
    chain,
    make_lumped,
    perturb,
    run_pipeline,
    sdof,
    six_dof_nonproportional,
    two_dof_chain,
)
from ssdss.builder import build_inband, compute_cb, modal_frf

BAND = 2 * np.pi * np.linspace(1.0, 300.0, 400)


def test_sdof_pole():
    M, Cd, K = sdof(1.0, 10.0, 0.05)
    modal, _ = make_lumped(M, Cd, K)
    wn = 2 * np.pi * 10
    assert modal.poles[0] == pytest.approx(complex(-0.05 * wn, wn * np.sqrt(1 - 0.05**2)), rel=1e-13)


@pytest.mark.parametrize("alpha,beta", [(0.5, 1e-4), (0.0, 2e-4), (3.0, 0.0)])
def test_proportional_cb_is_zero(alpha, beta):
    M, Cd, K = chain([1.0, 0.7, 1.3], [1e4, 6e3, 8e3], alpha=alpha, beta=beta)
    ib = build_inband(make_lumped(M, Cd, K)[0])
    cb = compute_cb(ib)
    assert np.max(np.abs(cb)) <= 1e-12 * np.max(np.abs(ib.C) @ np.abs(ib.B))


def test_six_dof_modal_vs_oracle():
    M, Cd, K = six_dof_nonproportional()
    modal, oracle = make_lumped(M, Cd, K)
    assert modal.n_modes == 6
    w = 2 * np.pi * np.linspace(1.0, 400.0, 800)
    assert rel_err(modal_frf(modal, w).values, oracle(w).values) <= 1e-10
    # the full residue sum vanishes; truncation leaves a nonzero CB
    ib = build_inband(modal)
    assert np.max(np.abs(compute_cb(ib))) <= 1e-12 * np.max(np.abs(ib.C) @ np.abs(ib.B))
    trunc, _ = make_lumped(M, Cd, K, omega_cut=2 * np.pi * 200)
    assert np.max(np.abs(compute_cb(build_inband(trunc)))) > 1e-8


def test_truncated_model_keeps_static_part():
    M, Cd, K = six_dof_nonproportional()
    modal, oracle = make_lumped(M, Cd, K, omega_cut=2 * np.pi * 200)
    assert modal.n_modes == 4
    w = np.array([1e-3])
    assert rel_err(modal_frf(modal, w).values.real, oracle(w).values.real) <= 1e-6


def test_overdamped_rejected():
    M, Cd, K = sdof(1.0, 10.0, 1.5)
    with pytest.raises(ValueError, match="non-oscillatory"):
        make_lumped(M, Cd, K)


def test_lumped_validation():
    with pytest.raises(ValueError):
        LumpedSystem([[1.0, 0.1], [0.0, 1.0]], np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError):
        LumpedSystem(np.eye(2), np.zeros((2, 2)), -np.eye(2))
    with pytest.raises(np.linalg.LinAlgError):
        LumpedSystem(-np.eye(2), np.zeros((2, 2)), np.eye(2))


def test_state_space_matches_direct_inversion():
    sys = LumpedSystem(*two_dof_chain())
    assert rel_err(eval_frf(sys.state_space(), BAND).values, sys.frf(BAND).values) <= 1e-10


def test_every_fixture_modal_matches_oracle(assembly):
    w = assembly.grid
    for comp in (assembly.cross_al, assembly.cross_st, assembly.assembly_a, assembly.assembly_b):
        assert rel_err(modal_frf(comp.modal, w).values, comp.oracle(w).values) <= 1e-10, comp.name


def test_assembly_reciprocity(assembly):
    w = assembly.grid
    for comp in (assembly.assembly_a, assembly.assembly_b, assembly.mount):
        H = comp.oracle(w).values
        assert np.max(np.abs(H - np.swapaxes(H, 1, 2))) <= 1e-12 * np.max(np.abs(H)), comp.name


def test_assembly_b_is_global_assembly(assembly):
    """Coupling the steel crosses to the mount in the FRF domain reproduces assembly B."""
    from ssdss.coupling import blockdiag_frf, dual_assembly_frf
    from ssdss.types import InterfaceMap

    w = assembly.grid
    parts = [assembly.mount.oracle(w), assembly.cross_st.oracle(w), assembly.cross_st.oracle(w)]
    imap = InterfaceMap.from_pairs([(k, 6 + k) for k in range(6)], 12)
    H = dual_assembly_frf(blockdiag_frf(parts), imap).values[:, :6, :6]
    assert rel_err(H, assembly.assembly_b.oracle(w).values) <= 1e-8


def test_cross_elastic_modes_above_band(assembly):
    top = 2 * np.pi * assembly.band[1]
    for comp in (assembly.cross_al, assembly.cross_st):
        lam = np.sort(np.abs(comp.modal.poles))
        # three rigid-body-like suspension modes sit in band, the rest are elastic
        assert np.all(lam[:3] < top)
        assert lam[3] > 5 * top


def test_perturb_identity_and_reproducibility():
    modal, _ = make_lumped(*six_dof_nonproportional())
    assert perturb(modal, 0.0, 1) is modal
    a, b = perturb(modal, 0.01, 42), perturb(modal, 0.01, 42)
    assert np.array_equal(a.mode_shapes, b.mode_shapes) and np.array_equal(a.part_factors, b.part_factors)
    assert np.array_equal(a.poles, modal.poles)
    assert not np.array_equal(perturb(modal, 0.01, 43).mode_shapes, a.mode_shapes)
    with pytest.raises(ValueError):
        perturb(modal, -0.1, 0)


def test_perturb_documented_draw_order():
    modal, _ = make_lumped(*two_dof_chain())
    out = perturb(modal, 0.02, 5)
    rng = np.random.default_rng(5)
    fs = 1 + 0.02 * rng.standard_normal(modal.mode_shapes.shape)
    fl = 1 + 0.02 * rng.standard_normal(modal.part_factors.shape)
    assert np.array_equal(out.mode_shapes, modal.mode_shapes * fs)
    assert np.array_equal(out.part_factors, modal.part_factors * fl)


def test_run_pipeline_rejects_unknown_component(assembly):
    with pytest.raises(ValueError):
        run_pipeline(assembly, 0.01, 0, perturbed=("mount",))


def test_seed_sweep_mostly_unstable(assembly):
    n_unstable = 0
    for seed in range(50):
        lam = np.linalg.eigvals(run_pipeline(assembly, 0.01, seed).coupled.A)
        n_unstable += bool(np.any(lam.real > 0))
    assert n_unstable >= 45
