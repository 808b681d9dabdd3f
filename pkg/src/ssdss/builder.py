"""State-space models from modal parameters.

Covers FRF synthesis of a modal model, the in-band diagonal realization,
residual compensation modes (RCMs) for the upper and lower residuals, the
Newton-law RCMs that zero the velocity feed-through, and the real-valued
similarity transform.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass

import numpy as np

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

SVD_DROP_TOL = 1e-12
CB_IMAG_TOL = 1e-10
CB_IMAG_ABS = 1e-14
NEWTON_SKIP_TOL = 1e-12


class RcmSource(str, enum.Enum):
    UR = "UR"
    LR = "LR"
    CB = "CB"


@dataclass(frozen=True, eq=False)
class RcmSet:
    """Poles, shapes and factors of a family of residual compensation modes."""

    poles: np.ndarray
    shapes: np.ndarray
    factors: np.ndarray
    source: RcmSource

    def __post_init__(self):
        poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        n_r = poles.size
        shapes = np.asarray(self.shapes, dtype=complex)
        factors = np.asarray(self.factors, dtype=complex)
        if shapes.ndim != 2 or factors.ndim != 2:
            raise ValueError("shapes and factors must be 2-D")
        if shapes.shape[1] != n_r or factors.shape[0] != n_r:
            raise ValueError("RCM dimensions are inconsistent")
        if n_r > min(shapes.shape[0], factors.shape[1]):
            raise ValueError("more RCMs than min(n_o, n_i)")
        if np.any(poles.real >= 0) or np.any(poles.imag <= 0):
            raise ValueError("RCM poles must lie in the open upper-left quadrant")
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "shapes", shapes)
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "source", RcmSource(self.source))

    @property
    def n_rcm(self) -> int:
        return self.poles.size


def modal_frf(model: ModalModel, grid) -> FrfSet:
    """Receptance of a modal model, poles in conjugate pairs plus residuals."""
    w = check_grid(grid)
    s = 1j * w
    lam = model.poles
    psi = model.mode_shapes
    L = model.part_factors
    # (n_f, n_m) pole kernels
    g = 1.0 / (s[:, None] - lam[None, :])
    gc = 1.0 / (s[:, None] - lam.conj()[None, :])
    H = np.einsum("om,fm,mi->foi", psi, g, L) + np.einsum("om,fm,mi->foi", psi.conj(), gc, L.conj())
    H = H + model.lower_residual[None] / (s * s)[:, None, None] + model.upper_residual[None]
    return FrfSet(w, H, Domain.DISPLACEMENT)


def build_inband(model: ModalModel) -> StateSpaceModel:
    """Diagonal complex realization of the in-band modes, conjugates appended."""
    lam = model.poles
    A = np.diag(np.concatenate([lam, lam.conj()]))
    B = np.vstack([model.part_factors, model.part_factors.conj()])
    C = np.hstack([model.mode_shapes, model.mode_shapes.conj()])
    return StateSpaceModel(
        A.astype(complex),
        B.reshape(2 * model.n_modes, model.n_inputs),
        C.reshape(model.n_outputs, 2 * model.n_modes),
        None,
        Domain.DISPLACEMENT,
        Representation.DIAGONAL_COMPLEX,
        "ib",
    )


def _check_rcm(omega, xi):
    if not (np.isfinite(omega) and omega > 0):
        raise ValueError(f"RCM frequency must be > 0, got {omega}")
    if not 0 < xi < 1:
        raise ValueError(f"RCM damping ratio must lie in (0, 1), got {xi}")


def rcm_params(M, omega_r: float, xi_r: float, source=RcmSource.UR) -> RcmSet:
    """RCM poles, shapes and factors whose static response equals ``M``.

    One mode pair per singular value of ``M`` above ``1e-12`` times the
    largest. Singular vectors are sign-normalized so the largest-magnitude
    entry of each left vector is positive.
    """
    _check_rcm(omega_r, xi_r)
    M = np.asarray(M)
    if np.iscomplexobj(M):
        if np.any(np.imag(M) != 0):
            raise ValueError("RCM source matrix must be real")
        M = M.real
    M = np.atleast_2d(M.astype(float))
    n_o, n_i = M.shape
    U, sig, Vt = np.linalg.svd(M, full_matrices=False)
    keep = sig > SVD_DROP_TOL * sig[0] if sig.size and sig[0] > 0 else np.zeros(sig.size, bool)
    U, sig, Vt = U[:, keep], sig[keep], Vt[keep]
    for r in range(sig.size):
        k = np.argmax(np.abs(U[:, r]))
        if U[k, r] < 0:
            U[:, r] *= -1
            Vt[r] *= -1
    root = np.sqrt(1.0 - xi_r**2)
    lam = np.full(sig.size, -xi_r * omega_r + 1j * omega_r * root)
    rs = np.sqrt(sig)
    shapes = (omega_r / root) * U * rs[None, :]
    factors = -0.5j * rs[:, None] * Vt
    return RcmSet(lam, shapes.astype(complex).reshape(n_o, sig.size), factors.reshape(sig.size, n_i), source)


def rcm_to_model(rcm: RcmSet, provenance: str = "") -> StateSpaceModel:
    """Expand an RCM set into a diagonal complex displacement model."""
    mm = ModalModel(
        rcm.poles,
        rcm.factors,
        rcm.shapes,
        np.zeros((rcm.shapes.shape[0], rcm.factors.shape[1])),
        np.zeros((rcm.shapes.shape[0], rcm.factors.shape[1])),
    )
    return build_inband(mm).replace(provenance=provenance or rcm.source.value)


def ur_rcm_model(UR, cfg: RcmConfig) -> StateSpaceModel:
    """RCM model standing in for a constant upper residual."""
    return rcm_to_model(rcm_params(UR, cfg.omega_ur, cfg.xi_ur, RcmSource.UR), "UR")


def lr_rcm_model(LR, cfg: RcmConfig) -> StateSpaceModel:
    """RCM model standing in for a ``LR/(j omega)**2`` lower residual.

    The SVD is taken of ``LR / omega_lr**2`` so that the RCM response tends to
    ``LR/(j omega)**2`` well above ``omega_lr``.
    """
    LR = np.asarray(LR, dtype=float)
    rcm = rcm_params(LR / cfg.omega_lr**2, cfg.omega_lr, cfg.xi_lr, RcmSource.LR)
    return rcm_to_model(rcm, "LR")


def concat_models(models, provenance: str = "") -> StateSpaceModel:
    """Block-diagonal concatenation. Kept here to avoid an import cycle."""
    models = list(models)
    if not models:
        raise ValueError("nothing to concatenate")
    n_o, n_i = models[0].n_outputs, models[0].n_inputs
    dom = models[0].domain
    for m in models[1:]:
        if (m.n_outputs, m.n_inputs) != (n_o, n_i):
            raise ValueError("models differ in input/output dimensions")
        if m.domain is not dom:
            raise ValueError("models differ in domain")
    n = sum(m.n_states for m in models)
    cplx = any(np.iscomplexobj(m.A) or np.iscomplexobj(m.B) or np.iscomplexobj(m.C) for m in models)
    dt = complex if cplx else float
    A = np.zeros((n, n), dt)
    B = np.zeros((n, n_i), dt)
    C = np.zeros((n_o, n), dt)
    D = np.zeros((n_o, n_i), complex if any(np.iscomplexobj(m.D) for m in models) else float)
    k = 0
    for m in models:
        j = k + m.n_states
        A[k:j, k:j] = m.A
        B[k:j] = m.B
        C[:, k:j] = m.C
        D = D + m.D
        k = j
    reps = {m.representation for m in models if m.n_states}
    if not reps or reps == {Representation.DIAGONAL_COMPLEX}:
        rep = Representation.DIAGONAL_COMPLEX
    elif reps <= {Representation.REAL_VALUED} and not cplx:
        rep = Representation.REAL_VALUED
    else:
        rep = Representation.GENERAL
    prov = provenance or "+".join(m.provenance for m in models if m.provenance)
    return StateSpaceModel(A, B, C, D, dom, rep, prov)


def assemble_full(inband: StateSpaceModel, lr_m: StateSpaceModel, ur_m: StateSpaceModel) -> StateSpaceModel:
    """Full displacement model: in-band modes followed by LR and UR RCMs."""
    for m in (inband, lr_m, ur_m):
        if m.domain is not Domain.DISPLACEMENT:
            raise ValueError("assemble_full expects displacement models")
        if m.representation is not Representation.DIAGONAL_COMPLEX:
            raise ValueError("assemble_full expects diagonal-complex models")
    return concat_models([inband, lr_m, ur_m], "full")


def compute_cb(m: StateSpaceModel) -> np.ndarray:
    """Real product ``C @ B`` of a conjugate-structured model."""
    cb = m.C @ m.B
    re = np.real(cb)
    im = np.imag(cb) if np.iscomplexobj(cb) else np.zeros_like(re)
    scale = np.max(np.abs(re)) if re.size else 0.0
    bound = CB_IMAG_TOL * scale if scale > 0 else CB_IMAG_ABS
    # rounding of C @ B grows with the magnitude of the summands
    mag = np.abs(m.C) @ np.abs(m.B)
    bound = max(bound, 64 * np.finfo(float).eps * (np.max(mag) if mag.size else 0.0))
    if im.size and np.max(np.abs(im)) > bound:
        raise ValueError(
            f"C @ B has an imaginary part of {np.max(np.abs(im)):.3e}; the conjugate pair structure is broken"
        )
    return np.array(re, dtype=float)


def cb_rcm_velocity_model(CB, cfg: RcmConfig) -> StateSpaceModel:
    """Velocity-domain RCM model built from ``CB``, with feed-through ``-CB``.

    Its response is ``omega_cb**2 CB / (-w**2 + 2j w xi omega_cb + omega_cb**2) - CB``.
    """
    CB = np.asarray(CB, dtype=float)
    rcm = rcm_params(CB, cfg.omega_cb, cfg.xi_cb, RcmSource.CB)
    m = rcm_to_model(rcm, "CB")
    return StateSpaceModel(m.A, m.B, m.C, -CB, Domain.VELOCITY, Representation.DIAGONAL_COMPLEX, "CB,vel")


def cb_rcm_model(CB, cfg: RcmConfig) -> StateSpaceModel:
    """Displacement form of :func:`cb_rcm_velocity_model` (``C_disp = C_vel A^-1``)."""
    vel = cb_rcm_velocity_model(CB, cfg)
    lam = np.diag(vel.A)
    C = vel.C / lam[None, :]
    return StateSpaceModel(vel.A, vel.B, C, None, Domain.DISPLACEMENT, Representation.DIAGONAL_COMPLEX, "CB")


def _newton_input(full: StateSpaceModel):
    if full.domain is not Domain.DISPLACEMENT:
        raise ValueError("Newton enforcement expects a displacement model")
    if full.representation is not Representation.DIAGONAL_COMPLEX:
        raise ValueError("Newton enforcement expects a diagonal-complex model")
    cb = compute_cb(full)
    if not cb.size or np.max(np.abs(cb)) == 0.0:
        return None
    # C.B is a sum of residues; below 1e-12 of the summed magnitudes it is rounding
    scale = np.max(np.abs(full.C) @ np.abs(full.B))
    if np.max(np.abs(cb)) <= NEWTON_SKIP_TOL * scale:
        return None
    return cb


def impose_newton(full: StateSpaceModel, cfg: RcmConfig) -> StateSpaceModel:
    """Append damped Newton-law RCMs so the returned model has ``C @ B = 0``."""
    _check_rcm(cfg.omega_cb, cfg.xi_cb)
    cb = _newton_input(full)
    if cb is None:
        log.info("C.B is already zero; Newton enforcement skipped")
        return full
    out = concat_models([full, cb_rcm_model(cb, cfg)], (full.provenance or "full") + "+INL")
    return out


def cb_velocity_closed_form(CB, cfg: RcmConfig, grid) -> FrfSet:
    """Closed-form velocity response of the Newton-law RCM model."""
    w = check_grid(grid, allow_zero=True)
    CB = np.atleast_2d(np.asarray(CB, dtype=float))
    wc, xi = cfg.omega_cb, cfg.xi_cb
    den = -(w**2) + 2j * w * xi * wc + wc**2
    H = (wc**2 / den)[:, None, None] * CB[None] - CB[None]
    return FrfSet(w, H, Domain.VELOCITY)


def legacy_rcm_model(CB, omega_cb_al: float) -> StateSpaceModel:
    """Undamped single-pole RCMs at ``+j omega_cb_al`` (the older approach)."""
    if not (np.isfinite(omega_cb_al) and omega_cb_al > 0):
        raise ValueError("legacy RCM frequency must be > 0")
    CB = np.atleast_2d(np.asarray(CB, dtype=float))
    U, sig, Vt = np.linalg.svd(CB, full_matrices=False)
    keep = sig > SVD_DROP_TOL * sig[0] if sig.size and sig[0] > 0 else np.zeros(sig.size, bool)
    U, sig, Vt = U[:, keep], sig[keep], Vt[keep]
    rs = np.sqrt(sig)
    n = sig.size
    A = np.eye(n) * (1j * omega_cb_al)
    B = -(rs[:, None] * Vt).astype(complex)
    C = (U * rs[None, :]).astype(complex)
    return StateSpaceModel(
        A.reshape(n, n), B.reshape(n, CB.shape[1]), C.reshape(CB.shape[0], n), None,
        Domain.DISPLACEMENT, Representation.DIAGONAL_COMPLEX, "CB,AL",
    )


def impose_newton_legacy(full: StateSpaceModel, omega_cb_al: float) -> StateSpaceModel:
    """Newton enforcement with undamped single-pole RCMs, for comparison only.

    The appended poles sit on the imaginary axis and are not conjugate paired,
    so the result is complex-valued and marginally stable.
    """
    cb = _newton_input(full)
    if cb is None:
        log.info("C.B is already zero; legacy Newton enforcement skipped")
        return full
    return concat_models([full, legacy_rcm_model(cb, omega_cb_al)], (full.provenance or "full") + "+AL")


def build_model(model: ModalModel, cfg: RcmConfig, newton: bool = True, real: bool = False) -> StateSpaceModel:
    """In-band model plus LR/UR RCMs, Newton enforcement and optional real form."""
    full = assemble_full(build_inband(model), lr_rcm_model(model.lower_residual, cfg), ur_rcm_model(model.upper_residual, cfg))
    if newton:
        full = impose_newton(full, cfg)
    if real:
        full = to_real_form(full)
    return full


PAIR_TOL = 1e-8


def conjugate_pairs(lam: np.ndarray, tol: float = PAIR_TOL):
    """Pair each upper-half-plane pole with its nearest conjugate partner.

    Returns ``(plus, minus, real)`` index arrays. Raises if a complex pole has
    no partner within ``tol`` relative.
    """
    lam = np.asarray(lam, dtype=complex)
    real_tol = 1e-9 * np.maximum(1.0, np.abs(lam))
    is_real = np.abs(lam.imag) <= real_tol
    upper = [k for k in np.flatnonzero(~is_real) if lam[k].imag > 0]
    lower = set(int(k) for k in np.flatnonzero(~is_real) if lam[k].imag < 0)
    plus, minus = [], []
    for k in upper:
        if not lower:
            raise ValueError(f"pole {lam[k]} has no conjugate partner")
        cand = np.array(sorted(lower))
        d = np.abs(lam[cand] - np.conj(lam[k]))
        j = int(cand[np.argmin(d)])
        if d.min() > tol * max(1.0, abs(lam[k])):
            raise ValueError(f"pole {lam[k]} has no conjugate partner (closest {lam[j]})")
        plus.append(int(k))
        minus.append(j)
        lower.discard(j)
    if lower:
        raise ValueError(f"unpaired lower-half-plane poles: {lam[sorted(lower)]}")
    return np.array(plus, int), np.array(minus, int), np.flatnonzero(is_real)


def to_real_form(m: StateSpaceModel) -> StateSpaceModel:
    """Real-valued realization of a conjugate-structured diagonal model.

    Each pair ``sigma +/- j omega`` becomes the block ``[[sigma, omega], [-omega, sigma]]``;
    real poles pass through with the real parts of their rows and columns.
    """
    if m.representation is Representation.REAL_VALUED:
        return m
    if m.representation is not Representation.DIAGONAL_COMPLEX:
        raise ValueError("to_real_form expects a diagonal-complex model")
    lam = np.diag(m.A)
    plus, minus, real = conjugate_pairs(lam)
    B, C = m.B, m.C
    tol = PAIR_TOL
    for k, j in zip(plus, minus):
        sb = max(np.max(np.abs(B[k]), initial=0.0), 1e-300)
        sc = max(np.max(np.abs(C[:, k]), initial=0.0), 1e-300)
        if np.max(np.abs(B[j] - B[k].conj()), initial=0.0) > tol * sb or np.max(
            np.abs(C[:, j] - C[:, k].conj()), initial=0.0
        ) > tol * sc:
            raise ValueError(f"rows/columns of the pair at {lam[k]} are not conjugate")
    for k in real:
        for v in (B[k], C[:, k]):
            if np.max(np.abs(np.imag(v)), initial=0.0) > tol * max(np.max(np.abs(v), initial=0.0), 1e-300):
                raise ValueError(f"real pole {lam[k]} has complex input/output vectors")
    n = m.n_states
    A_r = np.zeros((n, n))
    B_r = np.zeros((n, m.n_inputs))
    C_r = np.zeros((m.n_outputs, n))
    r2 = np.sqrt(2.0)
    i = 0
    for k in plus:
        s, w = lam[k].real, lam[k].imag
        A_r[i : i + 2, i : i + 2] = [[s, w], [-w, s]]
        B_r[i] = r2 * B[k].real
        B_r[i + 1] = -r2 * B[k].imag
        C_r[:, i] = r2 * C[:, k].real
        C_r[:, i + 1] = r2 * C[:, k].imag
        i += 2
    for k in real:
        A_r[i, i] = lam[k].real
        # product of row and column is what matters; keep both real
        B_r[i] = B[k].real
        C_r[:, i] = C[:, k].real
        i += 1
    D = np.real(m.D) if np.iscomplexobj(m.D) else m.D
    return StateSpaceModel(A_r, B_r, C_r, D, m.domain, Representation.REAL_VALUED, m.provenance)


RCM_WARN_LEVEL = 0.01


def rcm_quality(model: ModalModel, cfg: RcmConfig, grid, cb=None) -> dict:
    """Per-frequency relative error of each RCM family against its ideal term.

    The UR RCMs are compared with the constant ``UR``, the LR RCMs with
    ``LR / (j w)**2`` and the velocity response of the Newton RCMs with zero
    (normalized by ``|CB|``). Each curve is the largest entry-wise deviation
    divided by the largest entry of the ideal term. Families with a zero
    source matrix give a zero curve.

    Returns
    -------
    dict
        ``grid`` and the arrays ``ur``, ``lr``, ``cb``. Warns when any curve
        exceeds 1 %.
    """
    from .analysis import eval_frf  # analysis imports this module

    w = check_grid(grid)
    s2 = (1j * w) ** 2
    out = {"grid": w}

    def rel(H, ideal):
        num = np.max(np.abs(H - ideal), axis=(1, 2))
        den = np.max(np.abs(ideal), axis=(1, 2))
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    UR, LR = model.upper_residual, model.lower_residual
    n_f = w.size
    if np.any(UR):
        H = eval_frf(ur_rcm_model(UR, cfg), w).values
        out["ur"] = rel(H, np.broadcast_to(UR, H.shape))
    else:
        out["ur"] = np.zeros(n_f)
    if np.any(LR):
        H = eval_frf(lr_rcm_model(LR, cfg), w).values
        out["lr"] = rel(H, LR[None] / s2[:, None, None])
    else:
        out["lr"] = np.zeros(n_f)
    if cb is None:
        full = assemble_full(build_inband(model), lr_rcm_model(LR, cfg), ur_rcm_model(UR, cfg))
        cb = compute_cb(full) if full.n_states else np.zeros_like(UR)
    cb = np.asarray(cb, dtype=float)
    if np.any(cb):
        H = cb_velocity_closed_form(cb, cfg, w).values
        out["cb"] = np.max(np.abs(H), axis=(1, 2)) / np.max(np.abs(cb))
    else:
        out["cb"] = np.zeros(n_f)
    for tag in ("ur", "lr", "cb"):
        worst = float(np.max(out[tag]))
        if worst > RCM_WARN_LEVEL:
            warnings.warn(f"{tag.upper()} RCMs deviate by up to {100 * worst:.3g}% over the grid", RuntimeWarning, stacklevel=2)
    return out
