"""Generic state-space operations: FRFs, domain changes, poles, partitioning."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .builder import concat_models, conjugate_pairs
from .errors import NumericalError
from .types import (
    Domain,
    FrfSet,
    PoleClass,
    PoleDescriptor,
    Representation,
    StateSpaceModel,
    check_grid,
)

REAL_TOL = 1e-9
COND_LIMIT = 1e12
FEEDTHROUGH_TOL = 1e-9
_CHUNK = 128


def is_real_pole(lam: complex) -> bool:
    return abs(lam.imag) <= REAL_TOL * max(1.0, abs(lam))


def eval_frf(m: StateSpaceModel, grid, check: bool = True) -> FrfSet:
    """``H(j w) = C (j w I - A)^-1 B + D`` on an angular-frequency grid.

    Raises if some ``j w`` coincides with an eigenvalue of ``A``.
    """
    w = check_grid(grid, allow_zero=True)
    s = 1j * w
    n_f = w.size
    if m.n_states == 0:
        H = np.broadcast_to(m.D.astype(complex), (n_f, m.n_outputs, m.n_inputs)).copy()
        return FrfSet(w, H, m.domain)
    if m.representation is Representation.DIAGONAL_COMPLEX:
        lam = np.diag(m.A)
        den = s[:, None] - lam[None, :]
        if check:
            _check_resonance(den, w, lam)
        H = np.einsum("ok,fk,ki->foi", m.C, 1.0 / den, m.B)
    else:
        if check:
            lam = np.linalg.eigvals(m.A)
            _check_resonance(s[:, None] - lam[None, :], w, lam)
        # reduce to upper Hessenberg once so each solve is cheap and stable
        Hh, Q = scipy.linalg.hessenberg(m.A, calc_q=True)
        Bq = Q.conj().T @ m.B
        Cq = m.C @ Q
        n = m.n_states
        eye = np.eye(n)
        H = np.empty((n_f, m.n_outputs, m.n_inputs), complex)
        for a in range(0, n_f, _CHUNK):
            ss = s[a : a + _CHUNK]
            M = ss[:, None, None] * eye[None] - Hh[None]
            X = np.linalg.solve(M, np.broadcast_to(Bq, (ss.size,) + Bq.shape))
            H[a : a + ss.size] = Cq[None] @ X
    H = H + m.D[None]
    return FrfSet(w, H, m.domain)


def _check_resonance(den, w, lam):
    gap = np.abs(den)
    scale = 1e-12 * np.maximum(1.0, np.abs(w))[:, None]
    hit = gap <= scale
    if np.any(hit):
        f, k = np.argwhere(hit)[0]
        raise NumericalError(f"j*omega at omega={w[f]:.6g} rad/s coincides with the pole {lam[k]:.6g}")


def differentiate(m: StateSpaceModel) -> StateSpaceModel:
    """Displacement to velocity or velocity to acceleration.

    ``A' = A``, ``B' = B``, ``C' = C A``, ``D' = C B``. A model with a nonzero
    feed-through cannot be differentiated since its derivative has a ``j w D``
    term with no proper realization. A feed-through at rounding level (below
    ``1e-9 |C| |B|``) is treated as zero and dropped.
    """
    dom = m.domain.shifted(1)
    scale = np.linalg.norm(m.C, 2) * np.linalg.norm(m.B, 2) if m.n_states else 0.0
    if np.max(np.abs(m.D), initial=0.0) > FEEDTHROUGH_TOL * scale:
        raise ValueError("cannot differentiate a model with nonzero D")
    prov = (m.provenance + ",d/dt") if m.provenance else "d/dt"
    return StateSpaceModel(m.A, m.B, m.C @ m.A, m.C @ m.B, dom, m.representation, prov)


def integrate(m: StateSpaceModel, rtol: float = 1e-8) -> StateSpaceModel:
    """Inverse of :func:`differentiate`: ``C' = C A^-1`` and ``D' = 0``.

    Requires ``D = C A^-1 B``, otherwise the integral has a pole at the origin.
    """
    if m.domain is Domain.DISPLACEMENT:
        raise ValueError("cannot integrate a displacement model")
    dom = m.domain.shifted(-1)
    if m.representation is Representation.DIAGONAL_COMPLEX:
        lam = np.diag(m.A)
        if np.any(np.abs(lam) == 0) or (lam.size and np.min(np.abs(lam)) <= 1e-14 * np.max(np.abs(lam))):
            raise NumericalError("A has a pole at the origin")
        C = m.C / lam[None, :]
    else:
        if m.n_states:
            rc = 1.0 / np.linalg.cond(m.A)
            if not rc > 1e-14:
                raise NumericalError("A is singular (pole at the origin)")
            C = np.linalg.solve(m.A.T, m.C.T).T
        else:
            C = m.C
    D_impl = C @ m.B
    scale = max(np.max(np.abs(m.D), initial=0.0), np.max(np.abs(np.abs(C) @ np.abs(m.B)), initial=0.0))
    if np.max(np.abs(D_impl - m.D), initial=0.0) > rtol * max(scale, 1e-300):
        raise ValueError("D differs from C A^-1 B; the integrated model would need a pole at the origin")
    prov = (m.provenance + ",int") if m.provenance else "int"
    return StateSpaceModel(m.A, m.B, C, None if dom is Domain.DISPLACEMENT else np.zeros_like(m.D), dom, m.representation, prov)


def diagonalize(m: StateSpaceModel) -> StateSpaceModel:
    """Modal (diagonal) form via the eigenvectors of ``A``.

    For real ``A`` the result is ordered ``[upper poles | their conjugates | real poles]``
    with exact conjugate symmetry. Eigenvector columns are scaled to unit norm.
    """
    if m.representation is Representation.DIAGONAL_COMPLEX:
        return m
    n = m.n_states
    if n == 0:
        return m.replace(A=np.zeros((0, 0), complex), B=m.B.astype(complex), C=m.C.astype(complex),
                         representation=Representation.DIAGONAL_COMPLEX)
    lam, T = scipy.linalg.eig(m.A)
    real_A = not np.iscomplexobj(m.A)
    if real_A and not (np.iscomplexobj(m.B) or np.iscomplexobj(m.C)):
        plus, minus, real = conjugate_pairs(lam, tol=1e-6)
        lam_p = lam[plus]
        lam_new = np.concatenate([lam_p, lam_p.conj(), lam[real].real])
        Tp = T[:, plus]
        Tr = T[:, real].real
        T = np.hstack([Tp, Tp.conj(), Tr])
    else:
        order = np.lexsort((lam.imag, lam.real))
        lam_new = lam[order]
        T = T[:, order]
    T = T / np.linalg.norm(T, axis=0)[None, :]
    cond = np.linalg.cond(T)
    if not cond <= COND_LIMIT:
        # report the closest eigenvalue cluster
        d = np.abs(lam_new[:, None] - lam_new[None, :]) + np.diag(np.full(n, np.inf))
        i, j = np.unravel_index(np.argmin(d), d.shape)
        raise NumericalError(
            f"A is defective or nearly so (eigenvector condition {cond:.3e}); "
            f"closest eigenvalues {lam_new[i]:.6g} and {lam_new[j]:.6g}"
        )
    lu = scipy.linalg.lu_factor(T)
    Bn = scipy.linalg.lu_solve(lu, m.B.astype(complex))
    Cn = m.C @ T
    if real_A and not (np.iscomplexobj(m.B) or np.iscomplexobj(m.C)):
        n_p = plus.size
        Bn[n_p : 2 * n_p] = Bn[:n_p].conj()
        Bn[2 * n_p :] = Bn[2 * n_p :].real
        Cn[:, n_p : 2 * n_p] = Cn[:, :n_p].conj()
    prov = (m.provenance + ",diag") if m.provenance else "diag"
    return StateSpaceModel(np.diag(lam_new).astype(complex), Bn, Cn, m.D, m.domain, Representation.DIAGONAL_COMPLEX, prov)


def pole_params(lam: complex) -> PoleDescriptor:
    """Natural frequency ``|lam|`` and damping ``-Re(lam)/|lam|`` with a stability class."""
    lam = complex(lam)
    if not np.isfinite(lam):
        raise ValueError("pole must be finite")
    wn = abs(lam)
    if wn == 0:
        raise ValueError("pole at the origin has no damping ratio")
    xi = -lam.real / wn
    real = is_real_pole(lam)
    stable = lam.real < 0
    if real:
        kind = PoleClass.STABLE_REAL if stable else PoleClass.UNSTABLE_REAL
    else:
        kind = PoleClass.STABLE_PAIR if stable else PoleClass.UNSTABLE_PAIR
    return PoleDescriptor(lam, wn, xi, kind)


def select_states(m: StateSpaceModel, idx, provenance: str = "") -> StateSpaceModel:
    idx = np.asarray(idx, dtype=int)
    A = m.A[np.ix_(idx, idx)]
    return StateSpaceModel(
        A, m.B[idx].reshape(idx.size, m.n_inputs), m.C[:, idx].reshape(m.n_outputs, idx.size),
        np.zeros_like(m.D) if provenance else m.D, m.domain, m.representation, provenance or m.provenance,
    )


def partition(m: StateSpaceModel, predicate):
    """Split a diagonal model by a predicate on :class:`PoleDescriptor`.

    The feed-through stays with the first model, so FRFs add up exactly.
    """
    if m.representation is not Representation.DIAGONAL_COMPLEX:
        raise ValueError("partition expects a diagonal-complex model")
    lam = np.diag(m.A)
    sel = np.array([bool(predicate(pole_params(v))) for v in lam], dtype=bool)
    first = select_states(m, np.flatnonzero(sel), "")
    second = select_states(m, np.flatnonzero(~sel), "")
    first = first.replace(D=m.D, provenance=m.provenance + "[sel]")
    second = second.replace(D=np.zeros_like(m.D), provenance=m.provenance + "[rest]")
    return first, second


def concat_block(models) -> StateSpaceModel:
    """Block-diagonal concatenation; FRFs add and feed-throughs sum."""
    return concat_models(models)


def poles_report(m: StateSpaceModel) -> list[PoleDescriptor]:
    """Descriptors for every eigenvalue of ``A``, sorted by natural frequency."""
    lam = m.poles
    out = [pole_params(v) for v in lam]
    out.sort(key=lambda p: (p.natural_freq, p.value.imag))
    return out


def is_stable(m: StateSpaceModel, margin: float = 0.0) -> bool:
    lam = m.poles
    return bool(np.all(lam.real < -margin * np.maximum(1.0, np.abs(lam)))) if lam.size else True
