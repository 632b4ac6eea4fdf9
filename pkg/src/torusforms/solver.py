"""Faedo-Galerkin IMEX solvers for parabolic problems on torus forms.

The state space is the band-limited divergence-free mean-free subspace
(the span of the Galerkin basis).  Time stepping uses Lawson-type
integrating-factor schemes: the stiff diffusion is integrated exactly by
the multiplier exp(-mu |k|^2 dt) and the advection/nonlinear term is
explicit, either forward-Euler (``imex-euler``) or a two-stage midpoint
rule (``imex-rk2``).

Equations integrated (all terms projected onto the state space):

    linearized:  d/dt u = -mu Lap u - P B(w, u) + P f
    nonlinear:   d/dt u = -mu Lap u - P N(u)    + P f

The pressure has no evolution equation; it is recovered at sample times
from the complementary projection of the source, d p = (I - P)(f - Q(u))
with Q the advection or nonlinear term.

Cached time derivatives attached to solutions are obtained by
substituting the evolution equation (and its differentiated form), never
by finite differences; the finite-difference formulas in the residual
diagnostics measure scheme accuracy and are intentional.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from itertools import product
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from .hodge import helmholtz_project, recover_pressure
from .norms import TimeSeriesSolution
from .nonlinear import (
    NonlinearityConfig,
    bilinear_term,
    get_preset,
    nonlinear_term,
)
from .spectral import (
    ConsistencyError,
    FormField,
    SpectralGrid,
    _insertion_table,
    codifferential,
    dealias,
    fractional_power,
    hodge_laplacian,
    inner_product,
    l2_norm,
    load_field,
    remove_harmonic,
    save_field,
)

BLOWUP_THRESHOLD = 1e12
SCHEMES = ("imex-euler", "imex-rk2")


class SolverDivergenceError(RuntimeError):
    """The trajectory norm crossed the blow-up guard."""


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration parameters; dt must divide the horizon T."""

    mu: float
    T: float
    dt: float
    res: int = 32
    degree: int = 1
    scheme: str = "imex-rk2"
    preset: str = "navier-stokes-i1"
    newton_max_iter: int = 12
    newton_tol: float = 1e-10
    n: int = 2

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("viscosity mu must be positive")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("horizon T and step dt must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        steps = round(self.T / self.dt)
        if steps < 1 or not math.isclose(steps * self.dt, self.T, rel_tol=1e-8):
            raise ValueError("dt must divide the horizon T into whole steps")
        if self.newton_max_iter < 1 or self.newton_tol <= 0:
            raise ValueError("newton parameters must be positive")

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.steps + 1)

    def grid(self) -> SpectralGrid:
        return SpectralGrid(self.n, self.res)

    def nonlinearity(self) -> NonlinearityConfig:
        return get_preset(self.preset, self.n, self.degree)


_CONFIG_KEYS = {
    "mu": ("mu", float),
    "T": ("T", float),
    "dt": ("dt", float),
    "res": ("res", int),
    "degree": ("degree", int),
    "scheme": ("scheme", str),
    "preset": ("preset", str),
    "newton.max_iter": ("newton_max_iter", int),
    "newton.tol": ("newton_tol", float),
    "n": ("n", int),
}


def parse_solver_config(text: str) -> SolverConfig:
    """Parse the structured text configuration.

    One ``key = value`` (or ``key value``) pair per line; ``#`` starts a
    comment.  Keys: mu, T, dt, res, degree, scheme, preset,
    newton.max_iter, newton.tol, and optionally n (torus dimension).
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = re.split(r"\s*=\s*|\s+", line, maxsplit=1)
        if len(parts) != 2 or not parts[1]:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = parts[0], parts[1].strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown configuration key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        attr, conv = _CONFIG_KEYS[key]
        try:
            values[attr] = conv(value)
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    missing = [k for k in ("mu", "T", "dt") if k not in values]
    if missing:
        raise ValueError(f"configuration is missing required keys: {missing}")
    return SolverConfig(**values)


def load_solver_config(path) -> SolverConfig:
    return parse_solver_config(Path(path).read_text())


def format_solver_config(cfg: SolverConfig) -> str:
    lines = ["# solver configuration"]
    for key, (attr, _) in _CONFIG_KEYS.items():
        lines.append(f"{key} = {getattr(cfg, attr)}")
    return "\n".join(lines) + "\n"


# -- state-space projection ---------------------------------------------------


def project_state(u: FormField) -> FormField:
    """Orthogonal projection onto the solver state space.

    Dealiased band, divergence-free (kernel of the codifferential), zero
    mean; the harmonic mode is excluded so the diffusion semigroup is a
    strict contraction on states.
    """
    return remove_harmonic(helmholtz_project(dealias(u)))


def _check_initial(u0: FormField, tol: float = 1e-10) -> None:
    if u0.degree >= 1:
        div = l2_norm(codifferential(u0))
        if div > tol * max(l2_norm(u0), 1.0):
            raise ConsistencyError(
                f"initial datum is not divergence-free: |delta u0| = {div:.3e}"
            )


def _decay_multiplier(grid: SpectralGrid, mu: float, tau: float) -> np.ndarray:
    return np.exp(-mu * tau * grid.k_squared)


def _apply_multiplier(u: FormField, mult: np.ndarray) -> FormField:
    return FormField(u.grid, u.degree, tuple(c * mult for c in u.components))


# -- data samplers -------------------------------------------------------------


class _Sampler:
    """Uniform access to time-dependent data given in any supported form.

    Accepts None (zero), a single field (constant in time), a sequence
    sampled on the solver time grid, or a callable of time.  Midpoint
    values come from the callable directly or from averaging neighbours
    (second-order accurate, preserving the midpoint scheme's order).
    """

    def __init__(self, data, times: np.ndarray, what: str):
        self.times = times
        self.what = what
        self.data = data
        if isinstance(data, FormField) or data is None or callable(data):
            return
        data = list(data)
        if len(data) != len(times):
            raise ValueError(
                f"{what} series has {len(data)} samples for {len(times)} "
                "time grid points"
            )
        self.data = data

    @property
    def is_zero(self) -> bool:
        return self.data is None

    def at(self, j: int) -> FormField | None:
        if self.data is None:
            return None
        if isinstance(self.data, FormField):
            return self.data
        if callable(self.data):
            return self.data(float(self.times[j]))
        return self.data[j]

    def mid(self, j: int) -> FormField | None:
        if self.data is None:
            return None
        if isinstance(self.data, FormField):
            return self.data
        if callable(self.data):
            return self.data(float(0.5 * (self.times[j] + self.times[j + 1])))
        return (self.data[j] + self.data[j + 1]) * 0.5

    def sample(self, j: int, midpoint: bool) -> FormField | None:
        return self.mid(j) if midpoint else self.at(j)


# -- generic Lawson stepping ---------------------------------------------------


def _run_scheme(scheme, state0, steps, dt, apply_decay, rhs, guard):
    """Integrate d/dt g = L g + rhs with exact decay for L.

    ``apply_decay(state, tau)`` applies exp(tau L); ``rhs(j, midpoint,
    state)`` evaluates the explicit term.  Works for field states and
    coefficient vectors alike.
    """
    states = [state0]
    u = state0
    for j in range(steps):
        if scheme == "imex-euler":
            u = apply_decay(u + rhs(j, False, u) * dt, dt)
        else:
            u_mid = apply_decay(u + rhs(j, False, u) * (0.5 * dt), 0.5 * dt)
            u = apply_decay(u, dt) + apply_decay(rhs(j, True, u_mid), 0.5 * dt) * dt
        guard(u, j)
        states.append(u)
    return states


def _field_guard(u: FormField, j: int) -> None:
    if not np.isfinite(l2_norm(u)) or l2_norm(u) > BLOWUP_THRESHOLD:
        raise SolverDivergenceError(
            f"trajectory norm exceeded {BLOWUP_THRESHOLD:.0e} at step {j + 1}"
        )


def _stored_indices(steps: int, store_every: int) -> list[int]:
    if store_every < 1 or store_every > steps:
        raise ValueError("store_every must lie in [1, steps]")
    stored = list(range(0, steps + 1, store_every))
    if stored[-1] != steps:
        stored.append(steps)
    return stored


# -- field-space solvers --------------------------------------------------------


def _package_solution(
    states,
    times,
    stored,
    mu,
    f_sampler,
    quad_term,
    quad_derivative,
    f_dt_sampler,
    derivatives,
):
    """Assemble a TimeSeriesSolution with equation-substituted derivatives.

    ``quad_term(j, u)`` is the projected advection/nonlinear term P Q(u)
    at sample index j; ``quad_derivative(j, u, du)`` is its derivative
    P Q'(u) du along the trajectory.  Pressure series are attached by the
    callers, which know the unprojected source.
    """
    u_list = [states[i] for i in stored]
    t_list = times[stored]

    dt_cache: dict[int, list[FormField]] = {}
    if derivatives >= 1:
        first = []
        for idx, i in enumerate(stored):
            u = u_list[idx]
            du = hodge_laplacian(u) * (-mu) - quad_term(i, u)
            fi = f_sampler.at(i)
            if fi is not None:
                du = du + project_state(fi)
            first.append(du)
        dt_cache[1] = first
    if derivatives >= 2:
        second = []
        for idx, i in enumerate(stored):
            u, du = u_list[idx], dt_cache[1][idx]
            ddu = hodge_laplacian(du) * (-mu) - quad_derivative(i, u, du)
            dfi = f_dt_sampler.at(i)
            if dfi is not None:
                ddu = ddu + project_state(dfi)
            second.append(ddu)
        dt_cache[2] = second
    return TimeSeriesSolution(t_list, u_list, dt_cache=dt_cache)


def _pressure_from_source(source: FormField) -> FormField:
    """Potential of the gradient part of the source, zero if negligible.

    Below rounding level relative to the source the gradient part is
    indistinguishable from zero and the potential is returned as zero.
    """
    grad_part = source - helmholtz_project(source)
    if l2_norm(grad_part) <= 1e-12 * max(l2_norm(source), 1.0):
        return FormField.zeros(source.grid, source.degree - 1)
    return recover_pressure(grad_part)


def solve_linearized(
    w_series,
    f_series,
    u0: FormField,
    cfg: SolverConfig,
    ns_cfg: NonlinearityConfig | None = None,
    *,
    derivatives: int = 1,
    store_every: int = 1,
    with_pressure: bool = True,
) -> TimeSeriesSolution:
    """Integrate d/dt u = -mu Lap u - P B(w, u) + P f, u(0) = P u0.

    ``w_series`` and ``f_series`` may each be None, a constant field, a
    sequence on the time grid, or a callable of time.  Derivative caching
    beyond order 1 is unsupported here because it would require dw/dt.
    """
    if derivatives > 1:
        raise ValueError("linearized solves cache derivatives up to order 1")
    grid = cfg.grid()
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    _check_initial(u0)
    times = cfg.times()
    w = _Sampler(w_series, times, "advection field")
    f = _Sampler(f_series, times, "forcing")
    state0 = project_state(u0)

    def quad(j, midpoint, u):
        wj = w.sample(j, midpoint)
        if wj is None:
            return FormField.zeros(grid, u.degree)
        return project_state(bilinear_term(wj, u, ns))

    def rhs(j, midpoint, u):
        out = quad(j, midpoint, u) * (-1.0)
        fj = f.sample(j, midpoint)
        if fj is not None:
            out = out + project_state(fj)
        return out

    states = _run_scheme(
        cfg.scheme, state0, cfg.steps, cfg.T / cfg.steps,
        lambda u, tau: _apply_multiplier(u, _decay_multiplier(grid, cfg.mu, tau)),
        rhs, _field_guard,
    )
    stored = _stored_indices(cfg.steps, store_every)

    def quad_at(j, u):
        return quad(j, False, u)

    def quad_deriv(j, u, du):  # unused (derivatives <= 1)
        raise NotImplementedError

    sol = _package_solution(
        states, times, stored, cfg.mu, f, quad_at, quad_deriv,
        _Sampler(None, times, "forcing derivative"), derivatives,
    )
    if with_pressure:
        p_list = []
        for i in stored:
            u = states[i]
            src = _linearized_source(f, w, i, u, ns, grid)
            p_list.append(_pressure_from_source(src))
        sol.p = p_list
    return sol


def _linearized_source(f, w, j, u, ns, grid):
    wj = w.at(j)
    src = FormField.zeros(grid, u.degree) if wj is None else bilinear_term(wj, u, ns)
    src = src * (-1.0)
    fj = f.at(j)
    if fj is not None:
        src = src + fj
    return src


def solve_nonlinear(
    f_series,
    u0: FormField,
    cfg: SolverConfig,
    ns_cfg: NonlinearityConfig | None = None,
    *,
    derivatives: int = 1,
    store_every: int = 1,
    with_pressure: bool = True,
    f_dt_series=None,
) -> TimeSeriesSolution:
    """Integrate d/dt u = -mu Lap u - P N(u) + P f, u(0) = P u0.

    Second-order derivative caching substitutes the differentiated
    equation and therefore needs df/dt: pass ``f_dt_series`` for
    time-dependent forcing (None means df/dt = 0).
    """
    grid = cfg.grid()
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    if derivatives > 2:
        raise ValueError("derivative caching supports orders up to 2")
    _check_initial(u0)
    times = cfg.times()
    f = _Sampler(f_series, times, "forcing")
    f_dt = _Sampler(f_dt_series, times, "forcing derivative")
    if derivatives >= 2 and not (f.is_zero or isinstance(f.data, FormField) or callable(f.data)):
        if f_dt_series is None:
            raise ValueError(
                "second derivatives of a sampled forcing need f_dt_series"
            )
    state0 = project_state(u0)

    def rhs(j, midpoint, u):
        out = project_state(nonlinear_term(u, ns)) * (-1.0)
        fj = f.sample(j, midpoint)
        if fj is not None:
            out = out + project_state(fj)
        return out

    states = _run_scheme(
        cfg.scheme, state0, cfg.steps, cfg.T / cfg.steps,
        lambda u, tau: _apply_multiplier(u, _decay_multiplier(grid, cfg.mu, tau)),
        rhs, _field_guard,
    )
    stored = _stored_indices(cfg.steps, store_every)

    def quad_at(j, u):
        return project_state(nonlinear_term(u, ns))

    def quad_deriv(j, u, du):
        return project_state(bilinear_term(u, du, ns))

    sol = _package_solution(
        states, times, stored, cfg.mu, f, quad_at, quad_deriv, f_dt,
        derivatives,
    )
    if with_pressure:
        p_list = []
        p_first = []
        for idx, i in enumerate(stored):
            u = states[i]
            src = nonlinear_term(u, ns) * (-1.0)
            fi = f.at(i)
            if fi is not None:
                src = src + fi
            p_list.append(_pressure_from_source(src))
            if derivatives >= 1:
                du = sol.dt_cache[1][idx]
                dsrc = bilinear_term(u, du, ns) * (-1.0)
                dfi = f_dt.at(i)
                if dfi is not None:
                    dsrc = dsrc + dfi
                p_first.append(_pressure_from_source(dsrc))
        sol.p = p_list
        if derivatives >= 1:
            sol.p_dt_cache[1] = p_first
    return sol


# -- Galerkin basis -------------------------------------------------------------


def _divergence_matrix(n: int, degree: int, k: np.ndarray) -> np.ndarray:
    """Real matrix whose kernel is the divergence-free fibre at mode k.

    For a pure mode trig(k.x) xi the codifferential vanishes iff L xi = 0,
    where L is the wavevector contraction read off the insertion table.
    """
    if degree == 0:
        return np.zeros((0, 1))
    rows, cols = comb(n, degree - 1), comb(n, degree)
    L = np.zeros((rows, cols))
    for out_idx, in_idx, axis, sign in _insertion_table(n, degree - 1):
        L[in_idx, out_idx] += sign * k[axis]
    return L


def _kernel_basis(L: np.ndarray) -> list[np.ndarray]:
    """Deterministic orthonormal basis of ker L.

    Columns of the kernel projector are orthonormalized in coordinate
    order (Gram-Schmidt with re-orthogonalization), so axis-aligned fibre
    vectors come out exactly axis-aligned.
    """
    dim = L.shape[1]
    if L.shape[0] == 0 or not np.any(L):
        proj = np.eye(dim)
    else:
        proj = np.eye(dim) - np.linalg.pinv(L) @ L
    basis: list[np.ndarray] = []
    for col in range(dim):
        v = proj[:, col].copy()
        for _ in range(2):
            for b in basis:
                v -= np.dot(b, v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-10:
            basis.append(v / norm)
    return basis


def _canonical_modes(grid: SpectralGrid) -> list[tuple[int, ...]]:
    """Nonzero band wavevectors with positive leading nonzero component,
    ordered by |k|^2 then lexicographically."""
    limit = int(grid.res / 3.0)
    axes = range(-limit, limit + 1)
    modes = []
    for k in product(*([axes] * grid.n)):
        nonzero = [kj for kj in k if kj != 0]
        if not nonzero or nonzero[0] < 0:
            continue
        modes.append(k)
    modes.sort(key=lambda k: (sum(kj * kj for kj in k), k))
    return modes


def _trig_field(grid, degree, k, xi, kind) -> FormField:
    """Unit-norm real eigenfield sqrt(2) {cos,sin}(k.x) xi."""
    comps = [np.zeros(grid.shape, dtype=np.complex128)
             for _ in range(grid.component_count(degree))]
    pos = tuple(kj % grid.res for kj in k)
    neg = tuple(-kj % grid.res for kj in k)
    half = np.sqrt(2.0) / 2.0
    for c_idx, amp in enumerate(xi):
        if amp == 0.0:
            continue
        if kind == "cos":
            comps[c_idx][pos] += half * amp
            comps[c_idx][neg] += half * amp
        else:
            comps[c_idx][pos] += -1j * half * amp
            comps[c_idx][neg] += 1j * half * amp
    return FormField(grid, degree, tuple(comps))


@dataclass(frozen=True)
class GalerkinBasis:
    """Ordered orthonormal divergence-free eigenfields of the Laplacian.

    Fields are sqrt(2) {cos, sin}(k.x) xi over canonical wavevectors k
    (positive leading nonzero component) and orthonormal fibre vectors
    xi in the divergence-free kernel; ordering is (|k|^2, k lexicographic,
    cos before sin, fibre index).  Eigenvalue of field j is |k_j|^2.
    """

    grid: SpectralGrid
    degree: int
    fields: tuple[FormField, ...]
    eigenvalues: np.ndarray
    _flat: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.fields) == 0:
            raise ValueError("basis needs at least one field")
        flat = np.stack([f.stack().ravel() for f in self.fields])
        object.__setattr__(self, "_flat", flat)
        object.__setattr__(
            self, "eigenvalues", np.asarray(self.eigenvalues, dtype=np.float64)
        )

    @property
    def m(self) -> int:
        return len(self.fields)

    def project(self, u: FormField) -> np.ndarray:
        """Coefficients (u, b_j) of the basis expansion."""
        return np.real(self._flat.conj() @ u.stack().ravel())

    def synthesize(self, coeffs: np.ndarray) -> FormField:
        data = np.asarray(coeffs, dtype=np.float64) @ self._flat
        shape = (self.grid.component_count(self.degree),) + self.grid.shape
        comps = data.reshape(shape)
        return FormField(self.grid, self.degree, tuple(np.array(c) for c in comps))

    def reordered(self, permutation: Sequence[int]) -> "GalerkinBasis":
        perm = list(permutation)
        if sorted(perm) != list(range(self.m)):
            raise ValueError("not a permutation of the basis indices")
        return GalerkinBasis(
            self.grid, self.degree,
            tuple(self.fields[i] for i in perm),
            self.eigenvalues[perm],
        )


def build_basis(grid: SpectralGrid, degree: int, m: int | None = None) -> GalerkinBasis:
    """First m divergence-free eigenfields in canonical order.

    With m = None the full band-limited space is used.  The available
    dimension is (band modes)/2 * 2 * fibre dimension; requesting more is
    a parameter error.
    """
    if not 0 <= degree <= grid.n:
        raise ValueError("degree out of range")
    fields: list[FormField] = []
    eigs: list[float] = []
    for k in _canonical_modes(grid):
        kvec = np.array(k, dtype=np.float64)
        fibre = _kernel_basis(_divergence_matrix(grid.n, degree, kvec))
        lam = float(np.dot(kvec, kvec))
        for kind in ("cos", "sin"):
            for xi in fibre:
                fields.append(_trig_field(grid, degree, k, xi, kind))
                eigs.append(lam)
        if m is not None and len(fields) >= m:
            break
    if m is None:
        m = len(fields)
    if m > len(fields):
        raise ValueError(
            f"truncation m = {m} exceeds the band-limited dimension {len(fields)}"
        )
    return GalerkinBasis(grid, degree, tuple(fields[:m]), np.array(eigs[:m]))


# -- linearized operator and its inverse ----------------------------------------


@dataclass(frozen=True)
class LinearizedOperator:
    """Galerkin matrices C(t)[k, j] = mu lam_k delta_kj + (B(w(t), b_k), b_j)."""

    basis: GalerkinBasis
    mu: float
    times: np.ndarray
    matrices: np.ndarray
    w_series: object = None

    @property
    def explicit_part(self) -> np.ndarray:
        """C(t) minus the diagonal diffusion block (the explicit term)."""
        return self.matrices - self.mu * np.diag(self.basis.eigenvalues)


def assemble_linearized(
    w_series, mu: float, basis: GalerkinBasis, times: np.ndarray,
    ns_cfg: NonlinearityConfig,
) -> LinearizedOperator:
    """Sample the Galerkin matrices of the linearized operator in time."""
    times = np.asarray(times, dtype=np.float64)
    w = _Sampler(w_series, times, "advection field")
    m = basis.m
    mats = np.zeros((len(times), m, m))
    diffusion = mu * np.diag(basis.eigenvalues)
    constant_w = w.is_zero or isinstance(w.data, FormField)
    for jt in range(len(times)):
        if constant_w and jt > 0:
            mats[jt] = mats[0]
            continue
        wj = w.at(jt)
        mats[jt] = diffusion
        if wj is None:
            continue
        for kk in range(m):
            bterm = bilinear_term(wj, basis.fields[kk], ns_cfg)
            mats[jt, kk, :] += basis.project(bterm)
    return LinearizedOperator(basis, mu, times, mats, w_series)


def apply_inverse(
    op: LinearizedOperator,
    f_series,
    u0: FormField,
    cfg: SolverConfig,
    *,
    store_every: int = 1,
    derivatives: int = 1,
) -> TimeSeriesSolution:
    """Solve the linearized problem in coefficient space.

    Returns the synthesized trajectory; equivalent to solve_linearized on
    the same data when the basis spans the full band-limited space.
    """
    if derivatives > 1:
        raise ValueError("coefficient-space solves cache derivatives up to order 1")
    times = cfg.times()
    if len(op.times) != len(times) or not np.allclose(op.times, times):
        raise ValueError("operator was sampled on a different time grid")
    basis = op.basis
    _check_initial(u0)
    f = _Sampler(f_series, times, "forcing")
    fvec = np.zeros((len(times), basis.m))
    for j in range(len(times)):
        fj = f.at(j)
        if fj is not None:
            fvec[j] = basis.project(fj)
    expl = op.explicit_part

    def rhs(j, midpoint, g):
        # (B(w, u_m), b_j) = sum_k C~[k, j] g_k: the explicit block acts
        # on coefficients through its transpose.
        if midpoint:
            mat = 0.5 * (expl[j] + expl[j + 1])
            vec = 0.5 * (fvec[j] + fvec[j + 1])
        else:
            mat, vec = expl[j], fvec[j]
        return vec - mat.T @ g

    lam = basis.eigenvalues

    def decay(g, tau):
        return g * np.exp(-op.mu * tau * lam)

    def guard(g, j):
        norm = float(np.linalg.norm(g))
        if not np.isfinite(norm) or norm > BLOWUP_THRESHOLD:
            raise SolverDivergenceError(
                f"coefficient norm exceeded {BLOWUP_THRESHOLD:.0e} at step {j + 1}"
            )

    g_states = _run_scheme(
        cfg.scheme, basis.project(u0), cfg.steps, cfg.T / cfg.steps,
        decay, rhs, guard,
    )
    stored = _stored_indices(cfg.steps, store_every)
    u_list = [basis.synthesize(g_states[i]) for i in stored]
    dt_cache: dict[int, list[FormField]] = {}
    if derivatives >= 1:
        dt_cache[1] = [
            basis.synthesize(fvec[i] - op.matrices[i].T @ g_states[i])
            for i in stored
        ]
    return TimeSeriesSolution(times[stored], u_list, dt_cache=dt_cache)


# -- residual diagnostics --------------------------------------------------------

# The finite differences below reconstruct d/dt at the scheme's own order
# to measure how well a discrete trajectory satisfies the PDE; they are
# diagnostics on solver output, not norm ingredients.


def discrete_residual(
    sol: TimeSeriesSolution,
    cfg: SolverConfig,
    *,
    w_series=None,
    f_series=None,
    ns_cfg: NonlinearityConfig | None = None,
    nonlinear: bool = False,
) -> float:
    """Max L2 residual of d/dt u + mu Lap u + P Q(u) - P f on the trajectory.

    Uses a forward difference for imex-euler (first order) and a central
    difference for imex-rk2 (second order), matching the scheme order.
    """
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    times = sol.times
    f = _Sampler(f_series, times, "forcing")
    w = _Sampler(w_series, times, "advection field")
    worst = 0.0
    indices = range(len(times) - 1) if cfg.scheme == "imex-euler" else range(
        1, len(times) - 1
    )
    for j in indices:
        u = sol.u[j]
        if cfg.scheme == "imex-euler":
            dt = times[j + 1] - times[j]
            du = (sol.u[j + 1] - u) * (1.0 / dt)
        else:
            dt = times[j + 1] - times[j - 1]
            du = (sol.u[j + 1] - sol.u[j - 1]) * (1.0 / dt)
        res = du + hodge_laplacian(u) * cfg.mu
        if nonlinear:
            res = res + project_state(nonlinear_term(u, ns))
        else:
            wj = w.at(j)
            if wj is not None:
                res = res + project_state(bilinear_term(wj, u, ns))
        fj = f.at(j)
        if fj is not None:
            res = res - project_state(fj)
        worst = max(worst, l2_norm(res))
    return worst


def energy_identity_residual(
    sol: TimeSeriesSolution,
    mu: float,
    *,
    f_series=None,
    w_series=None,
    ns_cfg: NonlinearityConfig | None = None,
    nonlinear: bool = False,
) -> float:
    """Max residual of d/dt |u|^2 + 2 mu |grad u|^2 = 2 (f - Q(u), u).

    The energy derivative is reconstructed by central differences, so a
    second-order trajectory gives an O(dt^2) residual.
    """
    times = sol.times
    f = _Sampler(f_series, times, "forcing")
    w = _Sampler(w_series, times, "advection field")
    energies = [l2_norm(u) ** 2 for u in sol.u]
    worst = 0.0
    for j in range(1, len(times) - 1):
        u = sol.u[j]
        dE = (energies[j + 1] - energies[j - 1]) / (times[j + 1] - times[j - 1])
        rhs = 0.0
        fj = f.at(j)
        if fj is not None:
            rhs += 2.0 * inner_product(fj, u)
        if nonlinear or w.at(j) is not None:
            if ns_cfg is None:
                raise ValueError("the quadratic term needs a nonlinearity config")
        if nonlinear:
            rhs -= 2.0 * inner_product(nonlinear_term(u, ns_cfg), u)
        else:
            wj = w.at(j)
            if wj is not None:
                rhs -= 2.0 * inner_product(bilinear_term(wj, u, ns_cfg), u)
        grad = l2_norm(fractional_power(u, 1)) ** 2
        worst = max(worst, abs(dE + 2.0 * mu * grad - rhs))
    return worst


def lions_identity_residual(sol: TimeSeriesSolution) -> float:
    """Max residual of d/dt |u|^2 = 2 (du/dt, u) with the cached derivative.

    Central differences on the energy against the equation-substituted
    derivative; O(dt^2) for second-order trajectories.
    """
    if 1 not in sol.dt_cache:
        raise ValueError("solution carries no first time derivative cache")
    times = sol.times
    energies = [l2_norm(u) ** 2 for u in sol.u]
    worst = 0.0
    for j in range(1, len(times) - 1):
        dE = (energies[j + 1] - energies[j - 1]) / (times[j + 1] - times[j - 1])
        paired = 2.0 * inner_product(sol.dt_cache[1][j], sol.u[j])
        worst = max(worst, abs(dE - paired))
    return worst


# -- Newton local inversion --------------------------------------------------------

# The discrete forward map sends a trajectory {u^n} to its imex-euler
# data: A(u) = ({P f^n}, u^0) with
#     P f^n = (E^{-1} u^{n+1} - u^n)/dt + P N(u^n),   E = exp(-mu dt Lap).
# It is exactly invertible (forward substitution) and exactly quadratic,
# so its Newton iteration has an exact derivative and converges
# quadratically inside the contraction neighbourhood.


def discrete_forward_data(
    states: Sequence[FormField], cfg: SolverConfig,
    ns_cfg: NonlinearityConfig | None = None,
) -> tuple[list[FormField], FormField]:
    """Data (P f cells, u0) reproduced by the imex-euler trajectory."""
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    grid = states[0].grid
    dt = cfg.T / cfg.steps
    if len(states) != cfg.steps + 1:
        raise ValueError("trajectory length does not match the configuration")
    inv = _decay_multiplier(grid, cfg.mu, -dt)
    cells = []
    for j in range(cfg.steps):
        cell = (_apply_multiplier(states[j + 1], inv) - states[j]) * (1.0 / dt)
        cells.append(cell + project_state(nonlinear_term(states[j], ns)))
    return cells, states[0]


def discrete_linearized_data(
    states: Sequence[FormField], directions: Sequence[FormField],
    cfg: SolverConfig, ns_cfg: NonlinearityConfig | None = None,
) -> tuple[list[FormField], FormField]:
    """Derivative of the discrete forward map at ``states`` along ``directions``."""
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    grid = states[0].grid
    dt = cfg.T / cfg.steps
    inv = _decay_multiplier(grid, cfg.mu, -dt)
    cells = []
    for j in range(cfg.steps):
        cell = (_apply_multiplier(directions[j + 1], inv) - directions[j]) * (1.0 / dt)
        cells.append(cell + project_state(bilinear_term(states[j], directions[j], ns)))
    return cells, directions[0]


def _solve_linearized_cells(
    states, rhs_cells, v0, cfg, ns,
) -> list[FormField]:
    """Exactly invert the linearized discrete map by forward substitution."""
    grid = states[0].grid
    dt = cfg.T / cfg.steps
    dec = _decay_multiplier(grid, cfg.mu, dt)
    out = [v0]
    for j in range(cfg.steps):
        explicit = rhs_cells[j] - project_state(bilinear_term(states[j], out[j], ns))
        out.append(_apply_multiplier(out[j] + explicit * dt, dec))
    return out


@dataclass
class NewtonResult:
    """Outcome of the local-inversion iteration."""

    solution: TimeSeriesSolution
    residual_history: list[float]
    converged: bool

    @property
    def iterations(self) -> int:
        return len(self.residual_history) - 1


def _data_residual(f_cells, u0, states, cfg, ns):
    cells, head = discrete_forward_data(states, cfg, ns)
    r_cells = [f_cells[j] - cells[j] for j in range(len(cells))]
    r0 = u0 - head
    norm = max([l2_norm(c) for c in r_cells] + [l2_norm(r0)])
    return r_cells, r0, norm


def newton_local_inverse(
    f_target: Sequence[FormField] | FormField | None,
    u0_target: FormField,
    seed: Sequence[FormField] | TimeSeriesSolution,
    cfg: SolverConfig,
    ns_cfg: NonlinearityConfig | None = None,
) -> NewtonResult:
    """Invert the discrete forward map near a seed trajectory by Newton.

    ``f_target`` holds the projected forcing cells (one per step; a single
    field or None is broadcast), ``u0_target`` the initial datum.  Each
    update solves the exactly-linearized discrete system, so the iteration
    is quadratically convergent near a solution; non-convergence within
    ``cfg.newton_max_iter`` is reported, not raised.
    """
    if cfg.scheme != "imex-euler":
        raise ValueError("the discrete forward map is defined for imex-euler")
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    states = list(seed.u) if isinstance(seed, TimeSeriesSolution) else list(seed)
    if len(states) != cfg.steps + 1:
        raise ValueError("seed trajectory length does not match the configuration")
    grid = states[0].grid
    if f_target is None or isinstance(f_target, FormField):
        base = (FormField.zeros(grid, states[0].degree)
                if f_target is None else project_state(f_target))
        f_cells = [base] * cfg.steps
    else:
        f_cells = [project_state(c) for c in f_target]
        if len(f_cells) != cfg.steps:
            raise ValueError("need one forcing cell per time step")
    u0p = project_state(u0_target)

    r_cells, r0, norm = _data_residual(f_cells, u0p, states, cfg, ns)
    history = [norm]
    converged = norm <= cfg.newton_tol
    for _ in range(cfg.newton_max_iter):
        if converged:
            break
        delta = _solve_linearized_cells(states, r_cells, r0, cfg, ns)
        states = [states[j] + delta[j] for j in range(len(states))]
        r_cells, r0, norm = _data_residual(f_cells, u0p, states, cfg, ns)
        history.append(norm)
        converged = norm <= cfg.newton_tol

    times = cfg.times()
    p_list = [
        _pressure_from_source(
            (f_cells[min(j, cfg.steps - 1)]) - nonlinear_term(states[j], ns)
        )
        for j in range(len(states))
    ]
    dt1 = []
    for j, u in enumerate(states):
        du = hodge_laplacian(u) * (-cfg.mu) - project_state(nonlinear_term(u, ns))
        dt1.append(du + f_cells[min(j, cfg.steps - 1)])
    sol = TimeSeriesSolution(times, states, p=p_list, dt_cache={1: dt1})
    return NewtonResult(sol, history, converged)


# -- Galerkin truncation study ------------------------------------------------------


@dataclass(frozen=True)
class GalerkinStudy:
    """Uniform bounds and Cauchy decay across truncation dimensions."""

    ms: tuple[int, ...]
    bounded_quantities: np.ndarray
    cauchy_differences: np.ndarray
    order: int


def galerkin_convergence_study(
    f_series,
    u0: FormField,
    cfg: SolverConfig,
    ns_cfg: NonlinearityConfig | None = None,
    ms: Sequence[int] = (8, 16, 32),
    order: int = 1,
) -> GalerkinStudy:
    """Solve at increasing truncation m and report stability quantities.

    For each m: sup_t |grad^order u_m|^2 + mu * int |grad^(order+1) u_m|^2 dt
    (the a-priori bounded quantity), plus sup-in-time L2 Cauchy differences
    between consecutive truncations.
    """
    ns = ns_cfg if ns_cfg is not None else cfg.nonlinearity()
    grid = cfg.grid()
    _check_initial(u0)
    times = cfg.times()
    f = _Sampler(f_series, times, "forcing")
    trajectories = []
    bounded = []
    for m in ms:
        basis = build_basis(grid, cfg.degree, m)
        fvec = np.zeros((len(times), basis.m))
        for j in range(len(times)):
            fj = f.at(j)
            if fj is not None:
                fvec[j] = basis.project(fj)

        def rhs(j, midpoint, g, basis=basis, fvec=fvec):
            u = basis.synthesize(g)
            gn = basis.project(nonlinear_term(u, ns))
            if midpoint:
                return 0.5 * (fvec[j] + fvec[j + 1]) - gn
            return fvec[j] - gn

        lam = basis.eigenvalues

        def decay(g, tau, lam=lam):
            return g * np.exp(-cfg.mu * tau * lam)

        def guard(g, j):
            norm = float(np.linalg.norm(g))
            if not np.isfinite(norm) or norm > BLOWUP_THRESHOLD:
                raise SolverDivergenceError(
                    f"coefficient norm exceeded {BLOWUP_THRESHOLD:.0e} "
                    f"at step {j + 1} (m = {basis.m})"
                )

        g_states = _run_scheme(
            cfg.scheme, basis.project(u0), cfg.steps, cfg.T / cfg.steps,
            decay, rhs, guard,
        )
        fields = [basis.synthesize(g) for g in g_states]
        trajectories.append(fields)
        sup_part = max(l2_norm(fractional_power(u, order)) ** 2 for u in fields)
        grads = [l2_norm(fractional_power(u, order + 1)) ** 2 for u in fields]
        int_part = cfg.mu * float(np.trapezoid(grads, times))
        bounded.append(sup_part + int_part)
    cauchy = []
    for a, b in zip(trajectories, trajectories[1:]):
        cauchy.append(max(l2_norm(ua - ub) for ua, ub in zip(a, b)))
    return GalerkinStudy(
        tuple(ms), np.array(bounded), np.array(cauchy), order
    )


# -- solution directories -------------------------------------------------------

MANIFEST_NAME = "manifest.csv"
MANIFEST_COLUMNS = ("t", "file", "energy", "grad_energy")


def save_solution(sol: TimeSeriesSolution, directory) -> Path:
    """Write snapshots plus a CSV manifest (t, file, energy, grad_energy).

    energy = |u|_{L2}^2 and grad_energy = |grad u|_{L2}^2 per sample time;
    pressure snapshots, when present, sit alongside as p_*.hpform.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / MANIFEST_NAME
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for j, (t, u) in enumerate(zip(sol.times, sol.u)):
            name = f"u_{j:05d}.hpform"
            save_field(u, directory / name)
            energy = l2_norm(u) ** 2
            grad_energy = l2_norm(fractional_power(u, 1)) ** 2
            writer.writerow([repr(float(t)), name, repr(energy), repr(grad_energy)])
            if sol.p is not None:
                save_field(sol.p[j], directory / f"p_{j:05d}.hpform")
    return manifest


def load_solution(directory) -> TimeSeriesSolution:
    """Read a solution directory back (no derivative caches)."""
    directory = Path(directory)
    times = []
    u_list = []
    p_list = []
    with open(directory / MANIFEST_NAME, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise ValueError(
                f"manifest columns {reader.fieldnames} != {list(MANIFEST_COLUMNS)}"
            )
        for j, row in enumerate(reader):
            times.append(float(row["t"]))
            u_list.append(load_field(directory / row["file"]))
            p_path = directory / f"p_{j:05d}.hpform"
            if p_path.exists():
                p_list.append(load_field(p_path))
    if len(p_list) not in (0, len(u_list)):
        raise ValueError("pressure snapshots do not match the manifest")
    return TimeSeriesSolution(
        np.array(times), u_list, p=p_list if p_list else None
    )
