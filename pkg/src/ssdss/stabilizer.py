"""Turning an unstable displacement model into a stable one with matching FRFs.

Unstable poles are mirrored into the left half plane by negating their
damping ratio. Mirroring alone changes the FRFs, so the mode shapes and
residual matrices of the mirrored pairs are re-estimated by linear least
squares in the frequency domain (LSFD), with poles and participation factors
held fixed. The rebuilt part replaces the unstable one and Newton's law is
enforced again at the end.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .analysis import diagonalize, eval_frf, partition
from .builder import assemble_full, build_inband, compute_cb, concat_models, impose_newton, lr_rcm_model, ur_rcm_model
from .errors import NumericalError
from .types import (
    Domain,
    FrfSet,
    ModalModel,
    RcmConfig,
    Representation,
    StateSpaceModel,
    check_grid,
)

log = logging.getLogger(__name__)

PINV_RCOND = 1e-10
NEWTON_TRIGGER = 1e-10
_WEIGHT_EXP = {Domain.DISPLACEMENT: 0, Domain.VELOCITY: 1, Domain.ACCELERATION: 2}


class LsfdRankError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class LsfdProblem:
    """Target FRFs with fixed poles and participation factors.

    ``target`` is a displacement FRF set; ``weighting`` selects the domain in
    which the residual is minimized.
    """

    target: FrfSet
    poles: np.ndarray
    part_factors: np.ndarray
    weighting: Domain = Domain.ACCELERATION

    def __post_init__(self):
        poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        n_i = self.target.values.shape[2]
        L = np.asarray(self.part_factors, dtype=complex)
        if L.size == 0:
            L = L.reshape(poles.size, n_i)
        if L.shape != (poles.size, n_i):
            raise ValueError(f"part_factors must be {(poles.size, n_i)}, got {L.shape}")
        if np.any(poles.real >= 0) or np.any(poles.imag <= 0):
            raise ValueError("LSFD poles must be stable upper-half-plane pair representatives")
        if self.target.domain is not Domain.DISPLACEMENT:
            raise ValueError("LSFD target must be a displacement FRF set")
        if np.any(self.target.grid <= 0):
            raise ValueError("LSFD grid must not contain zero frequency")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "part_factors", L)
        object.__setattr__(self, "weighting", Domain(self.weighting))

    @property
    def n_modes(self) -> int:
        return self.poles.size


def _regressors(p: LsfdProblem) -> np.ndarray:
    """Complex regressor blocks, shape ``(n_f, 2 n_m + 2 n_i, n_i)``."""
    w = p.target.grid
    s = 1j * w
    lam, L = p.poles, p.part_factors
    n_i = L.shape[1]
    a = L[None, :, :] / (s[:, None, None] - lam[None, :, None])
    ac = L.conj()[None, :, :] / (s[:, None, None] - lam.conj()[None, :, None])
    eye = np.broadcast_to(np.eye(n_i), (w.size, n_i, n_i))
    g = np.concatenate([a + ac, 1j * (a - ac), eye / (s * s)[:, None, None], eye.astype(complex)], axis=1)
    k = _WEIGHT_EXP[p.weighting]
    if k:
        g = g * (s**k)[:, None, None]
    return g


def _split(blocks: np.ndarray) -> np.ndarray:
    """``(n_f, r, n_i)`` complex -> ``(r, 2 n_i n_f)`` real, Re blocks then Im blocks."""
    n_f, r, n_i = blocks.shape
    flat = np.transpose(blocks, (1, 0, 2)).reshape(r, n_f * n_i)
    return np.hstack([flat.real, flat.imag])


def lsfd_design_matrix(p: LsfdProblem) -> np.ndarray:
    """Real design matrix ``A~`` with ``H~ = [Re Psi, Im Psi, LR, UR] @ A~``.

    Rows are ordered real shape parts, imaginary shape parts, lower residual,
    upper residual. Columns hold the real parts of all frequency blocks first
    and their imaginary parts after.
    """
    return _split(_regressors(p))


def weighted_target(p: LsfdProblem) -> np.ndarray:
    """``H~`` of shape ``(n_o, 2 n_i n_f)`` in the weighting domain."""
    H = p.target.values
    k = _WEIGHT_EXP[p.weighting]
    if k:
        H = H * ((1j * p.target.grid) ** k)[:, None, None]
    n_f, n_o, n_i = H.shape
    flat = np.transpose(H, (1, 0, 2)).reshape(n_o, n_f * n_i)
    return np.hstack([flat.real, flat.imag])


def lsfd_solve(p: LsfdProblem):
    """Least-squares mode shapes and residual matrices.

    Returns
    -------
    mode_shapes : (n_o, n_m) complex
    LR, UR : (n_o, n_i) real
    """
    At = lsfd_design_matrix(p)
    Ht = weighted_target(p)
    n_m = p.n_modes
    n_i = p.part_factors.shape[1]
    # equilibrate rows so residual and modal rows are comparable
    scale = np.linalg.norm(At, axis=1)
    if np.any(scale == 0):
        raise LsfdRankError(f"design matrix has {np.count_nonzero(scale == 0)} zero rows")
    As = At / scale[:, None]
    U, sig, Vt = np.linalg.svd(As, full_matrices=False)
    keep = sig > PINV_RCOND * sig[0]
    rank = int(np.count_nonzero(keep))
    if rank < As.shape[0]:
        raise LsfdRankError(f"LSFD design matrix is rank deficient: effective rank {rank} of {As.shape[0]}")
    Y = ((Ht @ Vt.T) / sig[None, :]) @ U.T
    X = Y / scale[None, :]
    psi = X[:, :n_m] + 1j * X[:, n_m : 2 * n_m]
    LR = X[:, 2 * n_m : 2 * n_m + n_i]
    UR = X[:, 2 * n_m + n_i :]
    return psi, LR, UR


def flip_damping(unstable: StateSpaceModel) -> StateSpaceModel:
    """Mirror every pole across the imaginary axis, keeping ``B`` and ``C``."""
    if unstable.representation is not Representation.DIAGONAL_COMPLEX:
        raise ValueError("flip_damping expects a diagonal-complex model")
    lam = np.diag(unstable.A)
    if np.any(lam.real <= 0):
        raise ValueError("flip_damping expects only unstable poles; partition the model first")
    flipped = -lam.real + 1j * lam.imag
    prov = (unstable.provenance + ",stbz") if unstable.provenance else "stbz"
    return unstable.replace(A=np.diag(flipped).astype(complex), provenance=prov)


def target_frf(unstable_frf: FrfSet, real_pole_frf: FrfSet) -> FrfSet:
    """FRFs the re-estimated pairs must reproduce: unstable part minus mirrored real poles."""
    if not unstable_frf.same_layout(real_pole_frf):
        raise ValueError("FRF sets differ in grid, shape or domain")
    return FrfSet(unstable_frf.grid, unstable_frf.values - real_pole_frf.values, unstable_frf.domain)


@dataclass
class StabilizeResult:
    model: StateSpaceModel
    noop: bool
    diagnostics: dict = field(default_factory=dict)


def default_config(model: StateSpaceModel, grid) -> RcmConfig:
    """RCMs at five times the fastest pole, lower RCMs at a fifth of the grid floor."""
    lam = np.diag(model.A) if model.representation is Representation.DIAGONAL_COMPLEX else model.poles
    w_top = 5.0 * float(np.max(np.abs(lam.imag), initial=0.0))
    w_top = max(w_top, 5.0 * float(np.max(grid)))
    w_lr = float(np.min(grid)) / 5.0
    return RcmConfig(w_lr, 0.1, w_top, 0.1, w_top, 0.1)


def _pair_part(m: StateSpaceModel):
    """Upper poles and their input rows; lone lower poles are conjugated."""
    lam = np.diag(m.A)
    B = m.B
    upper = np.flatnonzero(lam.imag > 0)
    lower = np.flatnonzero(lam.imag < 0)
    used = set()
    poles, rows = [], []
    for k in upper:
        poles.append(lam[k])
        rows.append(B[k])
        d = np.abs(lam[lower] - np.conj(lam[k]))
        if d.size and d.min() <= 1e-8 * max(1.0, abs(lam[k])):
            used.add(int(lower[np.argmin(d)]))
    for k in lower:
        if int(k) not in used:
            warnings.warn(f"pole {lam[k]} has no conjugate partner; completing the pair", RuntimeWarning)
            poles.append(np.conj(lam[k]))
            rows.append(np.conj(B[k]))
    n_i = m.n_inputs
    return np.array(poles, dtype=complex), np.array(rows, dtype=complex).reshape(len(poles), n_i)


def frf_rel_rms(a: FrfSet, b: FrfSet, domain: Domain = Domain.ACCELERATION) -> float:
    """``||a - b|| / ||b||`` over the grid, after weighting both to ``domain``."""
    k = _WEIGHT_EXP[domain] - _WEIGHT_EXP[a.domain]
    w = (1j * a.grid) ** k
    diff = (a.values - b.values) * w[:, None, None]
    ref = b.values * w[:, None, None]
    return float(np.linalg.norm(diff) / np.linalg.norm(ref))


def stabilize(
    coupled: StateSpaceModel,
    grid,
    cfg: RcmConfig | None = None,
    weighting: Domain = Domain.ACCELERATION,
) -> StabilizeResult:
    """Stable model whose FRFs follow those of ``coupled`` on ``grid``.

    Parameters
    ----------
    coupled : StateSpaceModel
        Displacement model, any representation.
    grid : array_like
        Angular frequencies (rad/s) used for the LSFD fit and the deviation
        metric; should cover the band of interest with some margin.
    cfg : RcmConfig, optional
        RCM settings for the rebuilt pairs and Newton enforcement. Defaults to
        :func:`default_config`.
    weighting : Domain
        Domain in which the LSFD residual is minimized.

    Returns
    -------
    StabilizeResult
        Output model (diagonal-complex), a no-op flag and diagnostics.
    """
    if coupled.domain is not Domain.DISPLACEMENT:
        raise ValueError("stabilize expects a displacement model")
    w = check_grid(grid)
    d = diagonalize(coupled)
    lam = np.diag(d.A)
    n_unst = int(np.count_nonzero(lam.real >= 0))
    diag = {
        "n_poles": int(lam.size),
        "n_unstable": n_unst,
        "n_states_in": int(coupled.n_states),
    }
    if n_unst == 0:
        log.info("model has no unstable poles; nothing to do")
        diag.update(n_real_stabilized=0, n_states_out=int(coupled.n_states), frf_rel_rms_deviation=0.0)
        return StabilizeResult(coupled, True, diag)
    if np.any(lam.real == 0):
        raise ValueError("model has poles exactly on the imaginary axis")
    cfg = cfg or default_config(d, w)
    stable, unstable = partition(d, lambda p: p.is_stable)
    flipped = flip_damping(unstable)
    real_part, pair_part = partition(flipped, lambda p: p.is_real)
    real_part = real_part.replace(D=np.zeros_like(real_part.D))
    n_real = real_part.n_states
    H_ut = eval_frf(unstable, w)
    H_rp = eval_frf(real_part, w)
    target = target_frf(H_ut, H_rp)
    parts = [stable]
    if pair_part.n_states:
        poles, L = _pair_part(pair_part)
        prob = LsfdProblem(target, poles, L, weighting)
        psi, LR, UR = lsfd_solve(prob)
        mm = ModalModel(poles, L, psi, LR, UR)
        rebuilt = assemble_full(build_inband(mm), lr_rcm_model(LR, cfg), ur_rcm_model(UR, cfg))
        parts.append(rebuilt.replace(provenance="lsfd"))
    if n_real:
        parts.append(real_part.replace(provenance="rp,stbz"))
    out = concat_models(parts, "stbz")
    cb = compute_cb(out) if out.n_states else np.zeros((out.n_outputs, out.n_inputs))
    thr = NEWTON_TRIGGER * np.linalg.norm(out.C, 2) * np.linalg.norm(out.B, 2)
    if np.max(np.abs(cb), initial=0.0) > thr:
        out = impose_newton(out, cfg)
    out = out.replace(provenance="stbz,INL")
    H_in = eval_frf(d, w)
    H_out = eval_frf(out, w)
    lam_out = np.diag(out.A)
    diag.update(
        n_real_stabilized=int(n_real),
        n_states_out=int(out.n_states),
        added_states=int(out.n_states - coupled.n_states),
        max_real_part=float(np.max(lam_out.real)),
        frf_rel_rms_deviation=frf_rel_rms(H_out, H_in, weighting),
        max_abs_cb=float(np.max(np.abs(out.C @ out.B), initial=0.0)),
    )
    return StabilizeResult(out, False, diag)
