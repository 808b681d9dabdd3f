"""Lagrange-multiplier dual assembly of displacement state-space models.

Components are stacked block-diagonally and the interface compatibility
``Bb y = 0`` is enforced through its second time derivative. The frequency
domain dual assembly in :func:`dual_assembly_frf` is the reference for the
state-space result.

All models are assumed square and collocated: input ``k`` acts at the
location of output ``k``, so a single signed Boolean matrix serves both the
compatibility and the equilibrium condition.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .builder import to_real_form
from .errors import NumericalError
from .types import Domain, FrfSet, InterfaceMap, Representation, StateSpaceModel

NEWTON_TOL = 1e-8
RCOND_MIN = 1e-12


class SingularInterfaceError(NumericalError):
    pass


class NewtonViolationError(ValueError):
    pass


def blockdiag_frf(frfs, signs=None) -> FrfSet:
    """Stack FRF sets on a common grid into one block-diagonal set."""
    frfs = list(frfs)
    if not frfs:
        raise ValueError("no FRF sets given")
    signs = [1.0] * len(frfs) if signs is None else list(signs)
    grid = frfs[0].grid
    dom = frfs[0].domain
    for f in frfs[1:]:
        if not np.array_equal(f.grid, grid) or f.domain is not dom:
            raise ValueError("FRF sets differ in grid or domain")
    n_o = sum(f.values.shape[1] for f in frfs)
    n_i = sum(f.values.shape[2] for f in frfs)
    H = np.zeros((grid.size, n_o, n_i), complex)
    o = i = 0
    for f, sg in zip(frfs, signs):
        a, b = f.values.shape[1:]
        H[:, o : o + a, i : i + b] = sg * f.values
        o += a
        i += b
    return FrfSet(grid, H, dom)


def dual_assembly_frf(frfs: FrfSet, imap: InterfaceMap) -> FrfSet:
    """``H - H Bb^T (Bb H Bb^T)^-1 Bb H`` at every frequency."""
    H = frfs.values
    if imap.n_outputs != H.shape[1] or H.shape[1] != H.shape[2]:
        raise ValueError("interface map does not match the square FRF matrix")
    if imap.n_constraints == 0:
        return frfs
    Bb = imap.matrix.astype(float)
    HB = H @ Bb.T
    Z = Bb[None] @ HB
    out = np.empty_like(H)
    for f in range(H.shape[0]):
        if 1.0 / np.linalg.cond(Z[f]) < RCOND_MIN:
            raise SingularInterfaceError(f"interface FRF matrix is singular at omega={frfs.grid[f]:.6g} rad/s")
        out[f] = H[f] - HB[f] @ np.linalg.solve(Z[f], Bb @ H[f])
    return FrfSet(frfs.grid, out, frfs.domain)


def _prepare(m: StateSpaceModel) -> StateSpaceModel:
    if m.domain is not Domain.DISPLACEMENT:
        raise ValueError("coupling expects displacement models")
    if m.n_outputs != m.n_inputs:
        raise ValueError("coupling expects square collocated models (n_o == n_i)")
    if m.representation is Representation.DIAGONAL_COMPLEX:
        try:
            m = to_real_form(m)
        except ValueError:
            pass
    cb = m.C @ m.B
    scale = np.linalg.norm(m.C, 2) * np.linalg.norm(m.B, 2) if m.n_states else 0.0
    if cb.size and np.max(np.abs(cb)) > NEWTON_TOL * max(scale, np.finfo(float).tiny):
        raise NewtonViolationError(
            f"model '{m.provenance}' has max|C B| = {np.max(np.abs(cb)):.3e}; apply impose_newton first"
        )
    return m


def stack_models(models, provenance: str = "") -> StateSpaceModel:
    """Block-diagonal stack with separate inputs and outputs per model."""
    models = list(models)
    if not models:
        raise ValueError("nothing to stack")
    dom = models[0].domain
    if any(m.domain is not dom for m in models):
        raise ValueError("models differ in domain")
    A = scipy.linalg.block_diag(*[m.A for m in models])
    B = scipy.linalg.block_diag(*[m.B for m in models])
    C = scipy.linalg.block_diag(*[m.C for m in models])
    D = scipy.linalg.block_diag(*[m.D for m in models])
    cplx = any(np.iscomplexobj(x) for x in (A, B, C))
    rep = Representation.GENERAL if cplx else Representation.REAL_VALUED
    if all(m.representation is Representation.DIAGONAL_COMPLEX for m in models):
        rep = Representation.DIAGONAL_COMPLEX
    return StateSpaceModel(A, B, C, D, dom, rep, provenance)


def negate(m: StateSpaceModel) -> StateSpaceModel:
    """Model with the opposite FRF."""
    return m.replace(C=-m.C, D=-m.D, provenance=(m.provenance + ",neg") if m.provenance else "neg")


def lm_couple(models, imap: InterfaceMap) -> StateSpaceModel:
    """Couple displacement models through the interface pairs of ``imap``.

    Parameters
    ----------
    models : list of StateSpaceModel
        Newton-compliant (``C B = 0``) square displacement models.
    imap : InterfaceMap
        Pairs over the stacked outputs of ``models``.

    Returns
    -------
    StateSpaceModel
        Coupled model with all stacked outputs retained. The ``2 n_lambda``
        states that only carry the (identically zero) interface gap and its
        rate are removed.
    """
    parts = [_prepare(m) for m in models]
    stacked = stack_models(parts, "coupled")
    if imap.n_outputs != stacked.n_outputs:
        raise ValueError(f"interface map spans {imap.n_outputs} outputs, models have {stacked.n_outputs}")
    if imap.n_constraints == 0:
        return stacked
    A, B, C = stacked.A, stacked.B, stacked.C
    Bb = imap.matrix.astype(float)
    z = Bb @ C
    zA = z @ A
    W = zA @ B @ Bb.T
    rc = 1.0 / np.linalg.cond(W)
    if not rc >= RCOND_MIN:
        raise SingularInterfaceError(f"interface operator is singular (reciprocal condition {rc:.3e})")
    G = B @ Bb.T @ np.linalg.inv(W)
    A_bar = A - G @ (zA @ A)
    B_bar = B - G @ (zA @ B)
    # the gap Bb y and its rate span a left-invariant subspace that no input
    # excites; eliminating 2 n_lambda pivot states on Y x = 0 removes it while
    # leaving the remaining states untouched, which keeps rounding low
    Y = np.vstack([z, zA])
    k = Y.shape[0]
    piv = scipy.linalg.qr(Y, pivoting=True, mode="r")[1]
    p, f = piv[:k], np.sort(piv[k:])
    X = np.linalg.solve(Y[:, p], Y[:, f])
    A_r = A_bar[np.ix_(f, f)] - A_bar[np.ix_(f, p)] @ X
    B_r = B_bar[f]
    C_r = C[:, f] - C[:, p] @ X
    rep = Representation.GENERAL
    if not (np.iscomplexobj(A_r) or np.iscomplexobj(B_r) or np.iscomplexobj(C_r)):
        rep = Representation.REAL_VALUED
    return StateSpaceModel(A_r, B_r, C_r, None, Domain.DISPLACEMENT, rep, "coupled")


def lm_decouple(assembly: StateSpaceModel, subtrahends, imap: InterfaceMap) -> StateSpaceModel:
    """Remove ``subtrahends`` from ``assembly``.

    The subtrahends enter the stack with negated FRFs; ``imap`` indexes the
    stacked outputs ``[assembly, *subtrahends]``.
    """
    subs = list(subtrahends)
    if not subs:
        if imap.n_constraints:
            raise ValueError("interface map given without subtrahends")
        return assembly
    m = lm_couple([assembly] + [negate(s) for s in subs], imap)
    return m.replace(provenance="decoupled")


def select_channels(m: StateSpaceModel, outputs, inputs=None) -> StateSpaceModel:
    """Keep the given output rows and input columns."""
    outputs = np.asarray(outputs, dtype=int)
    inputs = outputs if inputs is None else np.asarray(inputs, dtype=int)
    return m.replace(B=m.B[:, inputs], C=m.C[outputs], D=m.D[np.ix_(outputs, inputs)])
