"""Value types shared by every part of the package.

All angular frequencies are in rad/s. Arrays are copied on construction and
marked read-only, so instances can be shared freely.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Domain(str, enum.Enum):
    DISPLACEMENT = "displacement"
    VELOCITY = "velocity"
    ACCELERATION = "acceleration"

    @property
    def order(self) -> int:
        """Number of time derivatives relative to displacement."""
        return list(Domain).index(self)

    def shifted(self, k: int) -> "Domain":
        order = list(Domain)
        idx = order.index(self) + k
        if not 0 <= idx < len(order):
            raise ValueError(f"cannot shift domain {self.value} by {k}")
        return order[idx]


class Representation(str, enum.Enum):
    DIAGONAL_COMPLEX = "diagonal-complex"
    REAL_VALUED = "real-valued"
    GENERAL = "general"


class PoleClass(str, enum.Enum):
    STABLE_PAIR = "stable-pair"
    UNSTABLE_PAIR = "unstable-pair"
    STABLE_REAL = "stable-real"
    UNSTABLE_REAL = "unstable-real"


def _frozen(a, dtype=None) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _as_matrix(a, name: str, dtype=None) -> np.ndarray:
    a = np.asarray(a, dtype=dtype)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def _as_array_2d(a, shape, name, dtype):
    # accept empty lists for zero-sized dimensions
    a = np.asarray(a, dtype=dtype)
    if a.size == 0:
        a = a.reshape(shape)
    return _as_matrix(a, name, dtype)


@dataclass(frozen=True, eq=False)
class ModalModel:
    """Modal parameters of a structure with residual terms.

    Only the positive-imaginary member of each conjugate pole pair is stored.

    Parameters
    ----------
    poles : (n_m,) complex
    part_factors : (n_m, n_i) complex
    mode_shapes : (n_o, n_m) complex
    lower_residual, upper_residual : (n_o, n_i) real
    """

    poles: np.ndarray
    part_factors: np.ndarray
    mode_shapes: np.ndarray
    lower_residual: np.ndarray
    upper_residual: np.ndarray

    def __post_init__(self):
        lr = np.asarray(self.lower_residual)
        ur = np.asarray(self.upper_residual)
        for name, r in (("lower_residual", lr), ("upper_residual", ur)):
            if np.iscomplexobj(r) and np.any(np.imag(r) != 0):
                raise ValueError(f"{name} must be real")
        lr = _as_matrix(np.real(lr).astype(float), "lower_residual")
        ur = _as_matrix(np.real(ur).astype(float), "upper_residual")
        if lr.shape != ur.shape:
            raise ValueError("lower and upper residuals differ in shape")
        n_o, n_i = lr.shape
        poles = np.atleast_1d(np.asarray(self.poles, dtype=complex))
        if poles.ndim != 1:
            raise ValueError("poles must be a 1-D sequence")
        n_m = poles.size
        L = _as_array_2d(self.part_factors, (n_m, n_i), "part_factors", complex)
        psi = _as_array_2d(self.mode_shapes, (n_o, n_m), "mode_shapes", complex)
        if L.shape != (n_m, n_i):
            raise ValueError(f"part_factors shape {L.shape} != {(n_m, n_i)}")
        if psi.shape != (n_o, n_m):
            raise ValueError(f"mode_shapes shape {psi.shape} != {(n_o, n_m)}")
        if np.any(poles.imag <= 0):
            raise ValueError("every stored pole must have a strictly positive imaginary part")
        if not (np.all(np.isfinite(poles)) and np.all(np.isfinite(L)) and np.all(np.isfinite(psi))):
            raise ValueError("modal parameters must be finite")
        object.__setattr__(self, "poles", _frozen(poles))
        object.__setattr__(self, "part_factors", _frozen(L))
        object.__setattr__(self, "mode_shapes", _frozen(psi))
        object.__setattr__(self, "lower_residual", _frozen(lr))
        object.__setattr__(self, "upper_residual", _frozen(ur))

    @property
    def n_modes(self) -> int:
        return self.poles.size

    @property
    def n_outputs(self) -> int:
        return self.upper_residual.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.upper_residual.shape[1]

    def replace(self, **changes) -> "ModalModel":
        kw = dict(
            poles=self.poles,
            part_factors=self.part_factors,
            mode_shapes=self.mode_shapes,
            lower_residual=self.lower_residual,
            upper_residual=self.upper_residual,
        )
        kw.update(changes)
        return ModalModel(**kw)


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Continuous LTI model ``x' = A x + B u``, ``y = C x + D u``.

    ``provenance`` is a free-form lineage label used for diagnostics only.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray | None = None
    domain: Domain = Domain.DISPLACEMENT
    representation: Representation = Representation.GENERAL
    provenance: str = ""

    def __post_init__(self):
        domain = Domain(self.domain)
        rep = Representation(self.representation)
        A = np.asarray(self.A)
        B = np.asarray(self.B)
        C = np.asarray(self.C)
        # zero-state models arrive as (0,), (0, n_i) etc.
        if A.size == 0:
            A = A.reshape(0, 0)
        n_s = A.shape[0]
        if B.size == 0 and B.ndim < 2:
            raise ValueError("B needs an explicit (n_s, n_i) shape")
        A = _as_matrix(A, "A")
        B = _as_matrix(B, "B")
        C = _as_matrix(C, "C")
        if A.shape != (n_s, n_s):
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != n_s:
            raise ValueError(f"B has {B.shape[0]} rows, expected {n_s}")
        if C.shape[1] != n_s:
            raise ValueError(f"C has {C.shape[1]} columns, expected {n_s}")
        n_o, n_i = C.shape[0], B.shape[1]
        if self.D is None:
            D = np.zeros((n_o, n_i))
        else:
            D = np.asarray(self.D)
            if D.size == 0:
                D = D.reshape(n_o, n_i)
            D = _as_matrix(D, "D")
        if D.shape != (n_o, n_i):
            raise ValueError(f"D shape {D.shape} != {(n_o, n_i)}")
        if domain is Domain.DISPLACEMENT and np.any(D != 0):
            raise ValueError("a displacement model must have a zero feed-through matrix")
        if rep is Representation.DIAGONAL_COMPLEX and n_s:
            if np.any(A[~np.eye(n_s, dtype=bool)] != 0):
                raise ValueError("diagonal-complex representation requires a diagonal A")
        for name, m in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(m)):
                raise ValueError(f"{name} has non-finite entries")

        def norm(m):
            return m.astype(complex) if np.iscomplexobj(m) else m.astype(float)

        object.__setattr__(self, "A", _frozen(norm(A)))
        object.__setattr__(self, "B", _frozen(norm(B)))
        object.__setattr__(self, "C", _frozen(norm(C)))
        object.__setattr__(self, "D", _frozen(norm(D)))
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "representation", rep)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def poles(self) -> np.ndarray:
        if self.representation is Representation.DIAGONAL_COMPLEX:
            return np.diag(self.A).copy()
        return np.linalg.eigvals(self.A) if self.n_states else np.zeros(0, complex)

    def replace(self, **changes) -> "StateSpaceModel":
        kw = dict(
            A=self.A,
            B=self.B,
            C=self.C,
            D=self.D,
            domain=self.domain,
            representation=self.representation,
            provenance=self.provenance,
        )
        kw.update(changes)
        return StateSpaceModel(**kw)

    @classmethod
    def empty(cls, n_o: int, n_i: int, domain=Domain.DISPLACEMENT, provenance=""):
        return cls(
            np.zeros((0, 0), complex),
            np.zeros((0, n_i), complex),
            np.zeros((n_o, 0), complex),
            None,
            domain,
            Representation.DIAGONAL_COMPLEX,
            provenance,
        )


@dataclass(frozen=True, eq=False)
class FrfSet:
    """FRF matrix sampled on an angular-frequency grid.

    ``values[f]`` is the ``n_o x n_i`` response at ``grid[f]``.
    """

    grid: np.ndarray
    values: np.ndarray
    domain: Domain = Domain.DISPLACEMENT

    def __post_init__(self):
        grid = np.atleast_1d(np.asarray(self.grid, dtype=float))
        values = np.asarray(self.values, dtype=complex)
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1-D sequence")
        if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be non-negative and strictly increasing")
        if values.ndim != 3 or values.shape[0] != grid.size:
            raise ValueError(f"values must be (n_f, n_o, n_i) with n_f={grid.size}, got {values.shape}")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise ValueError("FRF set contains non-finite entries")
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "domain", Domain(self.domain))

    @property
    def shape(self):
        return self.values.shape

    def same_layout(self, other: "FrfSet") -> bool:
        return (
            self.values.shape == other.values.shape
            and self.domain is other.domain
            and np.array_equal(self.grid, other.grid)
        )


def check_grid(grid, allow_zero: bool = False) -> np.ndarray:
    """Validate a frequency grid (rad/s) and return it as a float array."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("grid must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(grid)):
        raise ValueError("grid has non-finite entries")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if np.any(grid < 0) or (not allow_zero and np.any(grid == 0)):
        raise ValueError("grid frequencies must be > 0")
    return grid


@dataclass(frozen=True)
class PoleDescriptor:
    value: complex
    natural_freq: float
    damping_ratio: float
    kind: PoleClass

    @property
    def is_stable(self) -> bool:
        return self.kind in (PoleClass.STABLE_PAIR, PoleClass.STABLE_REAL)

    @property
    def is_real(self) -> bool:
        return self.kind in (PoleClass.STABLE_REAL, PoleClass.UNSTABLE_REAL)


@dataclass(frozen=True)
class RcmConfig:
    """Natural frequencies (rad/s) and damping ratios of the three RCM families."""

    omega_lr: float
    xi_lr: float
    omega_ur: float
    xi_ur: float
    omega_cb: float
    xi_cb: float

    def __post_init__(self):
        for tag in ("lr", "ur", "cb"):
            w = getattr(self, "omega_" + tag)
            xi = getattr(self, "xi_" + tag)
            if not (np.isfinite(w) and w > 0):
                raise ValueError(f"omega_{tag} must be > 0, got {w}")
            if not 0 < xi < 1:
                raise ValueError(f"xi_{tag} must lie in (0, 1), got {xi}")

    @classmethod
    def from_band(cls, omega_min: float, omega_max: float, xi: float = 0.1) -> "RcmConfig":
        """Rule-of-thumb defaults for a band of interest ``[omega_min, omega_max]`` rad/s.

        Lower RCMs sit at a fifth of the band floor, upper and Newton RCMs at ten
        times the band top.
        """
        if not 0 < omega_min < omega_max:
            raise ValueError("need 0 < omega_min < omega_max")
        return cls(omega_min / 5.0, xi, 10.0 * omega_max, xi, 10.0 * omega_max, xi)

    @classmethod
    def from_hz(cls, **kw) -> "RcmConfig":
        conv = {k.replace("_hz", ""): (2 * np.pi * v if k.endswith("_hz") else v) for k, v in kw.items()}
        return cls(**conv)

    def to_hz_dict(self) -> dict:
        out = {}
        for tag in ("lr", "ur", "cb"):
            out[f"omega_{tag}_hz"] = getattr(self, "omega_" + tag) / (2 * np.pi)
            out[f"xi_{tag}"] = getattr(self, "xi_" + tag)
        return out


@dataclass(frozen=True, eq=False)
class InterfaceMap:
    """Signed Boolean matrix pairing outputs of the stacked models.

    Row ``r`` enforces ``y[plus] - y[minus] = 0``.
    """

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.size == 0:
            m = m.reshape(0, m.shape[-1] if m.ndim == 2 else 0)
        m = _as_matrix(m, "interface matrix")
        if not np.all(np.isin(m, (-1, 0, 1))):
            raise ValueError("interface matrix entries must be -1, 0 or +1")
        m = m.astype(int)
        for r, row in enumerate(m):
            if np.count_nonzero(row == 1) != 1 or np.count_nonzero(row == -1) != 1:
                raise ValueError(f"row {r} must hold exactly one +1 and one -1")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def from_pairs(cls, pairs, n_outputs: int) -> "InterfaceMap":
        """Build from ``(plus_output, minus_output)`` index pairs."""
        pairs = list(pairs)
        m = np.zeros((len(pairs), n_outputs), dtype=int)
        for r, (p, q) in enumerate(pairs):
            if not (0 <= p < n_outputs and 0 <= q < n_outputs):
                raise ValueError(f"pair {r} ({p}, {q}) out of range for {n_outputs} outputs")
            if p == q:
                raise ValueError(f"pair {r} pairs output {p} with itself")
            m[r, p] = 1
            m[r, q] = -1
        return cls(m)

    @property
    def n_constraints(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(int(np.flatnonzero(r == 1)[0]), int(np.flatnonzero(r == -1)[0])) for r in self.matrix]


def frf_reweight(frf: FrfSet, k: int) -> FrfSet:
    """Multiply every FRF sample by ``(j*omega)**k`` and shift the domain tag.

    ``k = 1`` turns displacement into velocity, ``k = -2`` acceleration into
    displacement, and so on.
    """
    if k not in (-2, -1, 1, 2):
        raise ValueError(f"unsupported exponent {k}; use -2, -1, 1 or 2")
    domain = frf.domain.shifted(k)
    if k < 0 and np.any(frf.grid == 0):
        raise ValueError("cannot divide by j*omega on a grid containing 0")
    s = 1j * frf.grid
    if k == 1:
        w = s
    elif k == 2:
        w = s * s
    elif k == -1:
        w = 1.0 / s
    else:
        w = 1.0 / (s * s)
    return FrfSet(frf.grid, frf.values * w[:, None, None], domain)
