"""Synthetic lumped-parameter substructures with exact reference FRFs.

The assembly analog mimics two stiff cross-shaped blocks joined by a soft
rubber mount. Each cross has three rigid-body-like modes on a soft
suspension and elastic modes far above the band of interest. The mount
joins three DOFs of one cross to three DOFs of the other through
non-proportional springs and dampers, with small end masses at each plate.

Random perturbations use ``numpy.random.default_rng(seed)`` (the PCG64 bit
generator) and standard normal draws, so fixtures are reproducible from the
seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .builder import build_model
from .types import Domain, FrfSet, InterfaceMap, ModalModel, RcmConfig, Representation, StateSpaceModel, check_grid


class LumpedSystem:
    """Mass, damping and stiffness matrices with selected I/O DOFs."""

    def __init__(self, M, Cd, K, dofs=None, name=""):
        M, Cd, K = (np.asarray(x, dtype=float) for x in (M, Cd, K))
        n = M.shape[0]
        for nm, x in (("M", M), ("Cd", Cd), ("K", K)):
            if x.shape != (n, n):
                raise ValueError(f"{nm} must be {n}x{n}")
            if not np.allclose(x, x.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(x)))):
                raise ValueError(f"{nm} must be symmetric")
        np.linalg.cholesky(M)
        if np.min(np.linalg.eigvalsh(K)) < -1e-9 * max(1.0, np.max(np.abs(K))):
            raise ValueError("K must be positive semidefinite")
        self.M, self.Cd, self.K = M, Cd, K
        self.dofs = np.arange(n) if dofs is None else np.asarray(dofs, dtype=int)
        self.name = name

    @property
    def n_dofs(self) -> int:
        return self.M.shape[0]

    def frf(self, grid) -> FrfSet:
        """Receptance by direct inversion of the dynamic stiffness."""
        w = check_grid(grid, allow_zero=True)
        Z = -(w**2)[:, None, None] * self.M + 1j * w[:, None, None] * self.Cd + self.K
        n = self.n_dofs
        E = np.zeros((n, self.dofs.size))
        E[self.dofs, np.arange(self.dofs.size)] = 1.0
        X = np.linalg.solve(Z, np.broadcast_to(E, (w.size,) + E.shape))[:, self.dofs, :]
        # Z is complex symmetric; averaging with the transpose removes LU asymmetry
        X = 0.5 * (X + np.swapaxes(X, 1, 2))
        return FrfSet(w, X, Domain.DISPLACEMENT)

    def state_space(self) -> StateSpaceModel:
        """First-order realization with displacement outputs at the I/O DOFs."""
        n = self.n_dofs
        Minv = np.linalg.inv(self.M)
        # states are w0 q and dq/dt so both blocks of A are of one size
        w0 = self._w0()
        A = np.block([[np.zeros((n, n)), w0 * np.eye(n)], [-Minv @ self.K / w0, -Minv @ self.Cd]])
        E = np.zeros((n, self.dofs.size))
        E[self.dofs, np.arange(self.dofs.size)] = 1.0
        B = np.vstack([np.zeros_like(E), Minv @ E])
        C = np.hstack([E.T / w0, np.zeros_like(E.T)])
        return StateSpaceModel(A, B, C, None, Domain.DISPLACEMENT, Representation.REAL_VALUED, self.name or "lumped")

    def _w0(self) -> float:
        return float(np.sqrt(np.linalg.norm(self.K, 2) / np.linalg.norm(self.M, 2))) or 1.0

    def eig(self):
        """Upper-half-plane poles and displacement eigenvectors (columns)."""
        n = self.n_dofs
        # rescale time by w0 so that stiffness and mass terms are of one size
        w0 = self._w0()
        A = np.block([[np.zeros((n, n)), np.eye(n)], [-self.K / w0**2, -self.Cd / w0]])
        Bm = np.block([[np.eye(n), np.zeros((n, n))], [np.zeros((n, n)), self.M]])
        mu, V = scipy.linalg.eig(A, Bm)
        return w0 * mu, V[:n]


def make_lumped(M, Cd, K, dofs=None, omega_cut=None, name=""):
    """Modal model of a lumped system and its direct-inversion oracle.

    Parameters
    ----------
    M, Cd, K : array_like
        Symmetric mass, damping and stiffness matrices.
    dofs : array_like of int, optional
        Collocated input/output DOFs. Defaults to all.
    omega_cut : float, optional
        Modes with ``|lambda|`` above this (rad/s) are dropped and their static
        contribution goes into the upper residual.

    Returns
    -------
    modal : ModalModel
    oracle : callable
        ``oracle(grid) -> FrfSet`` by direct inversion.
    """
    sys = LumpedSystem(M, Cd, K, dofs, name)
    lam, phi = sys.eig()
    real = np.abs(lam.imag) <= 1e-9 * np.maximum(1.0, np.abs(lam))
    if np.any(real):
        raise ValueError(f"system has {np.count_nonzero(real)} non-oscillatory poles (xi >= 1)")
    up = lam.imag > 0
    lam, phi = _refine_modes(sys, lam[up], phi[:, up])
    order = np.argsort(np.abs(lam))
    lam, phi = lam[order], phi[:, order]
    # modal scaling a_r = phi^T (2 lam M + C) phi
    a = np.einsum("ir,ij,jr->r", phi, sys.Cd, phi) + 2 * lam * np.einsum("ir,ij,jr->r", phi, sys.M, phi)
    d = sys.dofs
    psi = phi[d]
    L = (phi[d] / a[None, :]).T
    n_io = d.size
    UR = np.zeros((n_io, n_io))
    if omega_cut is not None:
        keep = np.abs(lam) <= omega_cut
        static = _static(sys)
        inband = 2 * np.real(np.einsum("om,mi->oi", psi[:, keep] / (-lam[keep])[None, :], L[keep]))
        UR = static - inband
        lam, psi, L = lam[keep], psi[:, keep], L[keep]
    modal = ModalModel(lam, L, psi, np.zeros((n_io, n_io)), UR)
    return modal, sys.frf


def _refine_modes(sys: LumpedSystem, lam, phi, steps: int = 2):
    """Newton steps on ``(lam**2 M + lam C + K) phi = 0`` for every eigenpair.

    The eigensolver loses a few digits when stiffness and mass differ by many
    orders of magnitude; two steps restore the pairs to rounding level.
    """
    M, Cd, K = sys.M, sys.Cd, sys.K
    n = sys.n_dofs
    lam = lam.astype(complex)
    phi = phi.astype(complex)
    J = np.zeros((n + 1, n + 1), complex)
    for r in range(lam.size):
        l = lam[r]
        k = int(np.argmax(np.abs(phi[:, r])))
        p = phi[:, r] / phi[k, r]
        for _ in range(steps):
            Q = l * l * M + l * Cd + K
            J[:n, :n] = Q
            J[:n, n] = (2 * l * M + Cd) @ p
            J[n] = 0
            J[n, k] = 1
            d = np.linalg.solve(J, -np.append(Q @ p, p[k] - 1))
            p = p + d[:n]
            l = l + d[n]
        lam[r] = l
        phi[:, r] = p
    return lam, phi


def _static(sys: LumpedSystem) -> np.ndarray:
    X = np.linalg.solve(sys.K, np.eye(sys.n_dofs)[:, sys.dofs])
    return X[sys.dofs]


def perturb(model: ModalModel, rel_level: float, seed) -> ModalModel:
    """Multiply mode shapes and participation factors by ``1 + rel_level * N(0, 1)``.

    Real and imaginary parts are not perturbed separately; each entry gets
    one real factor. Shapes are drawn first, then factors. Poles and
    residuals are left as they are.
    """
    if rel_level < 0:
        raise ValueError("rel_level must be >= 0")
    if rel_level == 0:
        return model
    rng = np.random.default_rng(seed)
    fs = 1.0 + rel_level * rng.standard_normal(model.mode_shapes.shape)
    fl = 1.0 + rel_level * rng.standard_normal(model.part_factors.shape)
    return model.replace(mode_shapes=model.mode_shapes * fs, part_factors=model.part_factors * fl)



def sdof(m: float = 1.0, f_n_hz: float = 10.0, xi: float = 0.05):
    """Single mass on a spring and viscous damper: ``(M, Cd, K)`` as 1x1 arrays."""
    wn = 2 * np.pi * f_n_hz
    k = m * wn**2
    c = 2 * xi * np.sqrt(k * m)
    return np.array([[m]]), np.array([[c]]), np.array([[k]])


def chain(masses, springs, dampers=None, alpha: float = 0.0, beta: float = 0.0):
    """Fixed-free spring chain; ``dampers`` adds discrete dashpots beside the springs.

    The first spring ties mass 0 to ground. Damping is ``alpha M + beta K``
    plus the dashpots, so any nonzero ``dampers`` that is not proportional to
    ``springs`` gives non-proportional damping.
    """
    m = np.asarray(masses, dtype=float)
    n = m.size

    def ladder(v):
        v = np.asarray(v, dtype=float)
        if v.size != n:
            raise ValueError("need one spring/damper per mass")
        A = np.diag(v + np.append(v[1:], 0.0))
        A -= np.diag(v[1:], 1) + np.diag(v[1:], -1)
        return A

    M = np.diag(m)
    K = ladder(springs)
    Cd = alpha * M + beta * K
    if dampers is not None:
        Cd = Cd + ladder(dampers)
    return M, Cd, K


def two_dof_chain():
    """Two unit masses, two 1e4 N/m springs, ``C = 0.5 M + 1e-4 K``."""
    return chain([1.0, 1.0], [1e4, 1e4], alpha=0.5, beta=1e-4)


SIX_DOF_MASSES = (0.8, 0.5, 1.1, 0.6, 0.9, 0.4)
SIX_DOF_SPRINGS = (4.0e5, 2.5e5, 6.0e5, 3.0e5, 5.0e5, 2.0e5)
SIX_DOF_DAMPERS = (30.0, 5.0, 60.0, 2.0, 45.0, 8.0)


def six_dof_nonproportional():
    """Six-mass chain with dashpots that are not proportional to the springs."""
    return chain(SIX_DOF_MASSES, SIX_DOF_SPRINGS, SIX_DOF_DAMPERS, alpha=0.0, beta=1e-6)

# ---------------------------------------------------------------------------
# assembly analog

BAND_HZ = (20.0, 500.0)


@dataclass(frozen=True)
class Material:
    name: str
    mass_scale: float
    stiffness_scale: float


ALUMINIUM = Material("aluminium", 1.0, 1.0)
STEEL = Material("steel", 2.9, 2.85)

# interface and geometry of the cross: DOF 0 is the hub, 1..4 the arm tips,
# 5 a sensor block. The interface is at the hub and two arm tips.
_CROSS_IFACE = np.array([0, 1, 3])
_CROSS_MASS = np.array([0.42, 0.18, 0.2, 0.17, 0.21, 0.12])
# rigid-body-like modal basis: three independent in-band motions
_CROSS_RIGID = np.array(
    [
        [1.0, 0.0, 0.0],
        [1.0, 0.8, 0.1],
        [1.0, 0.1, 0.7],
        [1.0, -0.7, 0.05],
        [1.0, 0.05, -0.75],
        [1.0, 0.4, 0.45],
    ]
)
_CROSS_ELASTIC_HZ = np.array([5800.0, 7200.0, 8800.0])
_CROSS_SUSPENSION = np.array([1.3e4, 2.1e4, 0.9e4, 1.7e4, 1.1e4, 1.5e4])
_CROSS_ETA = (0.4, 2.0e-7)  # proportional damping alpha, beta

_MOUNT_END_MASS = np.array([0.05, 0.04, 0.045])
_MOUNT_K = np.array(
    [
        [3.2e5, -0.6e5, 0.3e5],
        [-0.6e5, 2.6e5, -0.5e5],
        [0.3e5, -0.5e5, 2.9e5],
    ]
)
_MOUNT_C = np.array(
    [
        [95.0, 30.0, -10.0],
        [30.0, 60.0, 25.0],
        [-10.0, 25.0, 120.0],
    ]
)


def cross_matrices(material: Material = ALUMINIUM):
    """M, C, K of a cross analog (6 DOFs)."""
    m = _CROSS_MASS * material.mass_scale
    M = np.diag(m)
    R = _CROSS_RIGID
    # M-orthonormal complement of the rigid basis carries the elastic modes
    Lc = np.sqrt(m)
    Rt = Lc[:, None] * R
    Q, _ = np.linalg.qr(np.hstack([Rt, np.eye(6)]))
    E = Q[:, 3:6]
    w_el = 2 * np.pi * _CROSS_ELASTIC_HZ
    Kt = E @ np.diag(w_el**2) @ E.T
    K_el = Lc[:, None] * Kt * Lc[None, :]
    K_el = material.stiffness_scale / material.mass_scale * K_el
    K = K_el + np.diag(_CROSS_SUSPENSION * material.stiffness_scale)
    K = 0.5 * (K + K.T)
    a, b = _CROSS_ETA
    Cd = a * M + b * K
    return M, Cd, K


def mount_matrices():
    """M, C, K of the free-free mount: plate 1 DOFs 0..2, plate 2 DOFs 3..5."""
    M = np.diag(np.concatenate([_MOUNT_END_MASS, _MOUNT_END_MASS[::-1]]))
    K = np.block([[_MOUNT_K, -_MOUNT_K], [-_MOUNT_K, _MOUNT_K]])
    Cd = np.block([[_MOUNT_C, -_MOUNT_C], [-_MOUNT_C, _MOUNT_C]])
    return M, Cd, K


def assembly_matrices(material: Material):
    """Global M, C, K of cross + mount + cross (12 DOFs) and the interface DOFs."""
    Mc, Cc, Kc = cross_matrices(material)
    Mm, Cm, Km = mount_matrices()
    n = 12
    M = np.zeros((n, n))
    Cd = np.zeros((n, n))
    K = np.zeros((n, n))
    for off in (0, 6):
        s = slice(off, off + 6)
        M[s, s] += Mc
        Cd[s, s] += Cc
        K[s, s] += Kc
    iface = np.concatenate([_CROSS_IFACE, 6 + _CROSS_IFACE])
    ix = np.ix_(iface, iface)
    M[ix] += Mm
    Cd[ix] += Cm
    K[ix] += Km
    return M, Cd, K, iface


@dataclass
class Component:
    name: str
    system: LumpedSystem
    modal: ModalModel | None = None

    def oracle(self, grid) -> FrfSet:
        return self.system.frf(grid)


@dataclass
class AssemblyFixture:
    """Components and interface maps of the substructuring pipeline.

    Pipeline: decouple both aluminium crosses from assembly A (maps
    ``decouple_map``), giving a 12-channel mount model whose first six
    channels are the mount plates. Couple it with both steel crosses
    (``couple_map``) and keep channels 0..5 to obtain assembly B.
    """

    cross_al: Component
    cross_st: Component
    mount: Component
    assembly_a: Component
    assembly_b: Component
    decouple_map: InterfaceMap
    couple_map: InterfaceMap
    omega_cut: float | None
    band: tuple = field(default=BAND_HZ)

    @property
    def grid(self) -> np.ndarray:
        return band_grid(self.band)

    def rcm_config(self) -> RcmConfig:
        return RcmConfig.from_band(2 * np.pi * self.band[0], 2 * np.pi * self.band[1])


def band_grid(band=BAND_HZ, n: int = 400) -> np.ndarray:
    return 2 * np.pi * np.linspace(band[0], band[1], n)


def make_assembly_analog(omega_cut_hz: float | None = None) -> AssemblyFixture:
    """Cross, mount and assembly analogs with their interface maps.

    With ``omega_cut_hz`` set, modes above it are folded into the upper
    residual of every component. By default all modes are kept.
    """
    wc = None if omega_cut_hz is None else 2 * np.pi * omega_cut_hz
    comps = {}
    for key, mat in (("al", ALUMINIUM), ("st", STEEL)):
        M, Cd, K = cross_matrices(mat)
        modal, _ = make_lumped(M, Cd, K, _CROSS_IFACE, wc, f"cross-{mat.name}")
        comps[key] = Component(f"cross-{mat.name}", LumpedSystem(M, Cd, K, _CROSS_IFACE, f"cross-{mat.name}"), modal)
    M, Cd, K = mount_matrices()
    mount = Component("mount", LumpedSystem(M, Cd, K, None, "mount"))
    asm = {}
    for key, mat in (("a", ALUMINIUM), ("b", STEEL)):
        M, Cd, K, iface = assembly_matrices(mat)
        modal, _ = make_lumped(M, Cd, K, iface, wc, f"assembly-{key}")
        asm[key] = Component(f"assembly-{key}", LumpedSystem(M, Cd, K, iface, f"assembly-{key}"), modal)
    # [assembly A (6) | cross 1 (3) | cross 2 (3)]
    dmap = InterfaceMap.from_pairs([(k, 6 + k) for k in range(6)], 12)
    # [mount (12) | steel cross 1 (3) | steel cross 2 (3)]
    cmap = InterfaceMap.from_pairs([(k, 12 + k) for k in range(6)], 18)
    return AssemblyFixture(comps["al"], comps["st"], mount, asm["a"], asm["b"], dmap, cmap, wc)


@dataclass
class PipelineResult:
    components: dict
    mount: StateSpaceModel
    coupled: StateSpaceModel


PERTURBED = ("assembly_a",)


def run_pipeline(
    fx: AssemblyFixture, rel_level: float = 0.0, seed=0, cfg: RcmConfig | None = None, perturbed=PERTURBED
) -> PipelineResult:
    """Build component models, decouple the aluminium crosses, couple the steel ones.

    Components named in ``perturbed`` (any of ``assembly_a``, ``cross_al_1``,
    ``cross_al_2``, ``cross_st``) get :func:`perturb` with their own child seed
    spawned from ``seed``. Only assembly A is perturbed by default.
    """
    from .coupling import lm_couple, lm_decouple, select_channels

    cfg = cfg or fx.rcm_config()
    seeds = np.random.SeedSequence(seed).spawn(4)
    base = {
        "assembly_a": fx.assembly_a.modal,
        "cross_al_1": fx.cross_al.modal,
        "cross_al_2": fx.cross_al.modal,
        "cross_st": fx.cross_st.modal,
    }
    unknown = set(perturbed) - set(base)
    if unknown:
        raise ValueError(f"unknown components {sorted(unknown)}")
    modal = {k: perturb(v, rel_level if k in perturbed else 0.0, sd) for (k, v), sd in zip(base.items(), seeds)}
    ss = {k: build_model(v, cfg) for k, v in modal.items()}
    mount = lm_decouple(ss["assembly_a"], [ss["cross_al_1"], ss["cross_al_2"]], fx.decouple_map)
    coupled = lm_couple([mount, ss["cross_st"], ss["cross_st"]], fx.couple_map)
    coupled = select_channels(coupled, np.arange(6))
    return PipelineResult(ss, mount, coupled.replace(provenance="assembly-b"))
