"""First-order-hold discretization and time-domain simulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .builder import to_real_form
from .types import Representation, StateSpaceModel

DIVERGENCE_LIMIT = 1e12


class SamplingWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteModel:
    """``x[k+1] = Ad x[k] + Bd0 u[k] + Bd1 u[k+1]``, ``y[k] = Cd x[k] + Dd u[k]``."""

    Ad: np.ndarray
    Bd0: np.ndarray
    Bd1: np.ndarray
    Cd: np.ndarray
    Dd: np.ndarray
    fs: float

    @property
    def n_states(self) -> int:
        return self.Ad.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.Bd0.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.Cd.shape[0]


def max_natural_freq_hz(m: StateSpaceModel) -> float:
    lam = m.poles
    return float(np.max(np.abs(lam), initial=0.0) / (2 * np.pi))


def foh_discretize(m: StateSpaceModel, fs: float) -> DiscreteModel:
    """Exact discretization for inputs that vary linearly between samples.

    Diagonal-complex models are converted to real form first. Warns with
    :class:`SamplingWarning` when ``fs`` is below twice the fastest natural
    frequency of the model.
    """
    if not (np.isfinite(fs) and fs > 0):
        raise ValueError("fs must be a positive number")
    for name in ("A", "B", "C", "D"):
        if not np.all(np.isfinite(getattr(m, name))):
            raise ValueError(f"{name} has non-finite entries")
    if m.representation is Representation.DIAGONAL_COMPLEX:
        m = to_real_form(m)
    f_max = max_natural_freq_hz(m)
    if fs < 2 * f_max:
        warnings.warn(
            f"sampling frequency {fs:g} Hz is below twice the fastest natural frequency ({f_max:.6g} Hz)",
            SamplingWarning,
            stacklevel=2,
        )
    n, p = m.n_states, m.n_inputs
    T = 1.0 / fs
    big = np.zeros((n + 2 * p, n + 2 * p), dtype=np.result_type(m.A, m.B))
    big[:n, :n] = m.A * T
    big[:n, n : n + p] = m.B * T
    big[n : n + p, n + p :] = np.eye(p)
    E = scipy.linalg.expm(big)
    Phi = E[:n, :n]
    G1 = E[:n, n : n + p]
    G2 = E[:n, n + p :]
    # G2 already carries one factor T from the scaled block
    Bd1 = G2
    Bd0 = G1 - G2
    return DiscreteModel(Phi, Bd0, Bd1, m.C.copy(), m.D.copy(), float(fs))


def sweep_signal(f0: float, f1: float, duration: float, fs: float, fade_fraction: float = 0.05) -> np.ndarray:
    """Linear chirp from ``f0`` to ``f1`` Hz with raised-cosine fade in and out, peak 1."""
    if not 0 < f0 < f1 < fs / 2:
        raise ValueError("need 0 < f0 < f1 < fs/2")
    if not duration > 0:
        raise ValueError("duration must be > 0")
    if not 0 <= fade_fraction < 0.5:
        raise ValueError("fade_fraction must lie in [0, 0.5)")
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    phase = 2 * np.pi * (f0 * t + 0.5 * (f1 - f0) / duration * t**2)
    u = np.sin(phase)
    nf = int(round(fade_fraction * n))
    if nf > 0:
        ramp = 0.5 * (1 - np.cos(np.pi * np.arange(nf) / nf))
        u[:nf] *= ramp
        u[n - nf :] *= ramp[::-1]
    peak = np.max(np.abs(u))
    return u / peak if peak > 0 else u


@dataclass
class SimResult:
    y: np.ndarray
    diverged: bool
    n_steps: int
    diverged_at: int | None = None


def simulate(dm: DiscreteModel, u, x0=None, check_every: int = 256) -> SimResult:
    """Run the FOH recursion.

    Parameters
    ----------
    u : (n_t, n_i) or (n_t,) array
    x0 : (n_s,) array, optional

    Returns
    -------
    SimResult
        ``y`` has shape ``(n_t, n_o)``. If ``|y|`` exceeds ``1e12`` the run
        stops, ``diverged`` is set and the remaining samples are NaN.
    """
    u = np.asarray(u)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2 or u.shape[0] < 1:
        raise ValueError("input must be a non-empty (n_t, n_i) array")
    if u.shape[1] != dm.n_inputs:
        raise ValueError(f"input has {u.shape[1]} channels, model expects {dm.n_inputs}")
    n = dm.n_states
    x = np.zeros(n, dtype=dm.Ad.dtype) if x0 is None else np.asarray(x0).astype(dm.Ad.dtype)
    if x.shape != (n,):
        raise ValueError(f"x0 must have shape ({n},)")
    # shifted state z = x - Bd1 u removes the one-step look-ahead
    Ad = dm.Ad
    Cd = dm.Cd
    Dz = dm.Dd + Cd @ dm.Bd1
    Bu = u @ (Ad @ dm.Bd1 + dm.Bd0).T
    n_t = u.shape[0]
    Z = np.empty((n_t, n), dtype=np.result_type(Ad, Bu, x))
    z = x - dm.Bd1 @ u[0]
    end = n_t
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_t):
            Z[k] = z
            if k % check_every == 0:
                yk = Cd @ z + Dz @ u[k]
                if not np.all(np.abs(yk) <= DIVERGENCE_LIMIT):
                    end = k + 1
                    break
            z = Ad @ z + Bu[k]
        y = np.real(Z[:end] @ Cd.T + u[:end] @ Dz.T)
    bad = ~(np.abs(y) <= DIVERGENCE_LIMIT)
    out = np.full((n_t, dm.n_outputs), np.nan)
    if bad.any():
        first = int(np.argmax(bad.any(axis=1)))
        out[:first] = y[:first]
        return SimResult(out, True, n_t, first)
    out[:end] = y
    return SimResult(out, False, n_t, None)
