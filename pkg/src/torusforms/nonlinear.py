"""Quadratic nonlinearities built from constant-coefficient bilinear maps.

The nonlinearity of degree i is

    N(v) = M1(d v, v) + d M2(v, v)

with fibre-wise bilinear maps M1 : E^(i+1) x E^i -> E^i and
M2 : E^i x E^i -> E^(i-1).  Its polarization

    B(w, v) = M1(d w, v) + M1(d v, w) + d (M2(w, v) + M2(v, w))

satisfies B(v, v) = 2 N(v) and N(w + v) - N(w) - N(v) = B(w, v) exactly,
because both sides run through the same dealiased product pipeline.

Pointwise products are evaluated physically on the two-thirds dealiased
band: inputs are masked, multiplied on the grid, transformed back, and
masked again, which keeps quadratic products of band-limited fields
alias-free.

The ``navier-stokes-i1`` preset instantiates M1 as the interior product
(exterior derivative of the velocity contracted with the velocity) and M2
as half the dot product, so N(u) = (u . grad) u on degree-1 fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .hodge import helmholtz_project
from .norms import BochnerIndex, TimeSeriesSolution, bochner_norm
from .spectral import (
    FormField,
    SpectralGrid,
    dealias,
    exterior_derivative,
    inner_product,
    multi_indices,
    random_form,
    remove_harmonic,
    to_physical,
)


@dataclass(frozen=True)
class BilinearMap:
    """Constant-coefficient fibre map E^d1 x E^d2 -> E^dout.

    ``tensor[a, b, c]`` multiplies component a of the first argument with
    component b of the second and adds into output component c.
    """

    n: int
    degree_first: int
    degree_second: int
    degree_out: int
    tensor: np.ndarray

    def __post_init__(self):
        expected = (
            comb(self.n, self.degree_first),
            comb(self.n, self.degree_second),
            comb(self.n, self.degree_out),
        )
        arr = np.asarray(self.tensor, dtype=np.float64)
        if arr.shape != expected:
            raise ValueError(
                f"tensor shape {arr.shape} does not match degrees "
                f"{expected} on T^{self.n}"
            )
        object.__setattr__(self, "tensor", arr)

    @property
    def operator_norm(self) -> float:
        """Spectral norm of the flattened tensor: |M(a,b)| <= norm |a| |b|."""
        flat = self.tensor.reshape(-1, self.tensor.shape[2])
        return float(np.linalg.norm(flat, ord=2))

    def apply_fibre(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Contract stacked pointwise data (ncomp, ...) bilinearly."""
        return np.einsum("abc,a...,b...->c...", self.tensor, a, b)


@dataclass(frozen=True)
class NonlinearityConfig:
    """Degree-i quadratic nonlinearity assembled from two bilinear maps."""

    degree: int
    m1: BilinearMap | None = None
    m2: BilinearMap | None = None
    tag: str = "custom"

    def __post_init__(self):
        i = self.degree
        if self.m1 is not None:
            got = (self.m1.degree_first, self.m1.degree_second, self.m1.degree_out)
            if got != (i + 1, i, i):
                raise ValueError(f"m1 degrees {got} incompatible with degree {i}")
        if self.m2 is not None:
            if i < 1:
                raise ValueError("m2 needs degree >= 1 (its output is degree i-1)")
            got = (self.m2.degree_first, self.m2.degree_second, self.m2.degree_out)
            if got != (i, i, i - 1):
                raise ValueError(f"m2 degrees {got} incompatible with degree {i}")

    @property
    def is_zero(self) -> bool:
        return self.m1 is None and self.m2 is None


# -- presets --------------------------------------------------------------


def interior_product_map(n: int) -> BilinearMap:
    """M(omega, u) = contraction of the 2-form omega with the vector u.

    iota_u (dx^a ^ dx^b) = u_a dx^b - u_b dx^a for a < b.
    """
    pairs = multi_indices(n, 2)
    tensor = np.zeros((len(pairs), n, n))
    for p_idx, (a, b) in enumerate(pairs):
        tensor[p_idx, a, b] += 1.0
        tensor[p_idx, b, a] -= 1.0
    return BilinearMap(n, 2, 1, 1, tensor)


def half_dot_map(n: int) -> BilinearMap:
    """M(u, v) = (u . v) / 2 landing in degree 0."""
    tensor = np.zeros((n, n, 1))
    for a in range(n):
        tensor[a, a, 0] = 0.5
    return BilinearMap(n, 1, 1, 0, tensor)


def navier_stokes_config(n: int) -> NonlinearityConfig:
    return NonlinearityConfig(
        degree=1,
        m1=interior_product_map(n),
        m2=half_dot_map(n),
        tag="navier-stokes-i1",
    )


def zero_config(degree: int = 1) -> NonlinearityConfig:
    return NonlinearityConfig(degree=degree, tag="zero")


PRESETS = ("navier-stokes-i1", "zero")


def get_preset(name: str, n: int, degree: int = 1) -> NonlinearityConfig:
    if name == "navier-stokes-i1":
        if degree != 1:
            raise ValueError("the navier-stokes-i1 preset is a degree-1 map")
        return navier_stokes_config(n)
    if name == "zero":
        return zero_config(degree)
    raise ValueError(f"unknown nonlinearity preset {name!r}; know {PRESETS}")


# -- evaluation -------------------------------------------------------------


def _product(bmap: BilinearMap, a: FormField, b: FormField) -> FormField:
    """Dealiased pointwise bilinear product of two fields."""
    grid = a.grid
    if grid != b.grid:
        raise ValueError("product arguments live on different grids")
    if a.degree != bmap.degree_first or b.degree != bmap.degree_second:
        raise ValueError("field degrees do not match the bilinear map")
    a_phys = np.stack(to_physical(dealias(a)))
    b_phys = np.stack(to_physical(dealias(b)))
    out_phys = bmap.apply_fibre(a_phys, b_phys)
    return dealias(FormField.from_physical(grid, bmap.degree_out, list(out_phys)))


def _half_quadratic(a: FormField, b: FormField, cfg: NonlinearityConfig) -> FormField:
    """Q(a, b) = M1(d a, b) + d M2(a, b); N(v) = Q(v, v)."""
    grid = a.grid
    out = FormField.zeros(grid, cfg.degree)
    if cfg.m1 is not None and a.degree < grid.n:
        out = out + _product(cfg.m1, exterior_derivative(a), b)
    if cfg.m2 is not None:
        out = out + exterior_derivative(_product(cfg.m2, a, b))
    return out


def nonlinear_term(v: FormField, cfg: NonlinearityConfig) -> FormField:
    """N(v) = M1(d v, v) + d M2(v, v)."""
    if v.degree != cfg.degree:
        raise ValueError(
            f"field degree {v.degree} does not match nonlinearity degree "
            f"{cfg.degree}"
        )
    if cfg.is_zero:
        return FormField.zeros(v.grid, v.degree)
    return _half_quadratic(v, v, cfg)


def bilinear_term(w: FormField, v: FormField, cfg: NonlinearityConfig) -> FormField:
    """Polarization B(w, v) = N(w + v) - N(w) - N(v), evaluated directly."""
    if w.degree != cfg.degree or v.degree != cfg.degree:
        raise ValueError("field degrees do not match the nonlinearity degree")
    if cfg.is_zero:
        return FormField.zeros(v.grid, v.degree)
    return _half_quadratic(w, v, cfg) + _half_quadratic(v, w, cfg)


def convective_term(w: FormField, u: FormField) -> FormField:
    """(w . grad) u for degree-1 fields, via dealiased products."""
    if w.degree != 1 or u.degree != 1:
        raise ValueError("the convective term is defined for degree-1 fields")
    grid = w.grid
    w_phys = np.stack(to_physical(dealias(w)))
    kvecs = grid.wavevectors
    comps = []
    for c in dealias(u).components:
        grads = [np.real(np.fft.ifftn(1j * kvecs[j] * c) * c.size) for j in range(grid.n)]
        acc = np.zeros(grid.shape)
        for j in range(grid.n):
            acc += w_phys[j] * grads[j]
        comps.append(acc)
    return dealias(FormField.from_physical(grid, 1, comps))


def trilinear_form(
    w: FormField, u: FormField, cfg: NonlinearityConfig, diagnostic: str = "auto"
) -> float:
    """Trilinear pairing of the nonlinearity against the state.

    ``diagnostic="convective"`` returns ((w . grad) u, u), the classical
    form that vanishes for divergence-free w; it is the default for the
    navier-stokes-i1 preset.  ``"raw"`` returns (B(w, u), u) for any
    configuration.
    """
    if diagnostic == "auto":
        diagnostic = "convective" if cfg.tag == "navier-stokes-i1" else "raw"
    if diagnostic == "convective":
        return inner_product(convective_term(w, u), u)
    if diagnostic == "raw":
        return inner_product(bilinear_term(w, u, cfg), u)
    raise ValueError(f"unknown diagnostic {diagnostic!r}")


# -- empirical continuity bound ------------------------------------------------


@dataclass(frozen=True)
class ContinuityReport:
    """Measured ratios |B(w,v)| / (|w| |v|) in the parabolic norms."""

    k: int
    s: int
    res: int
    kmax: float
    trials: int
    ratios: np.ndarray

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0


def continuity_bound_survey(
    cfg: NonlinearityConfig,
    grid: SpectralGrid,
    trials: int,
    k: int,
    s: int,
    seed: int = 0,
    kmax: float | None = None,
    horizon: float = 1.0,
    samples: int = 9,
) -> ContinuityReport:
    """Sample the continuity constant of B on stationary random pairs.

    For each trial, draws divergence-free mean-free band-limited fields
    w, v, and measures

        |B(w, v)|_{for, (k, s-1)} / (|w|_{vel, (k+2, s-1)} |v|_{vel, (k+2, s-1)})

    on a stationary trajectory of the given horizon.  The band defaults to
    res/6 so quadratic products stay fully resolved; surveys at different
    resolutions then sample the same field class and their maxima are
    directly comparable.
    """
    n = grid.n
    if not 2 * s + k > n / 2.0 - 1.0:
        raise ValueError(f"need 2s + k > n/2 - 1, got k={k}, s={s}, n={n}")
    if s < 1:
        raise ValueError("the continuity survey needs s >= 1")
    if kmax is None:
        kmax = grid.res / 6.0
    rng = np.random.default_rng(seed)
    times = np.linspace(0.0, horizon, samples)
    sub = s - 1

    def stationary(field: FormField) -> TimeSeriesSolution:
        series = [field] * len(times)
        cache = {
            j: [FormField.zeros(grid, field.degree)] * len(times)
            for j in range(1, sub + 1)
        }
        return TimeSeriesSolution(times, series, dt_cache=cache)

    ratios = []
    vel_idx = BochnerIndex(k + 2, sub, "vel")
    for_idx = BochnerIndex(k, sub, "for")
    for _ in range(trials):
        w = remove_harmonic(
            helmholtz_project(random_form(grid, cfg.degree, rng, kmax=kmax))
        )
        v = remove_harmonic(
            helmholtz_project(random_form(grid, cfg.degree, rng, kmax=kmax))
        )
        denom = bochner_norm(stationary(w), vel_idx) * bochner_norm(
            stationary(v), vel_idx
        )
        b = bilinear_term(w, v, cfg)
        numer = bochner_norm(stationary(b), for_idx)
        ratios.append(0.0 if denom == 0.0 else numer / denom)
    return ContinuityReport(
        k=k, s=s, res=grid.res, kmax=float(kmax), trials=trials,
        ratios=np.array(ratios),
    )


# -- tensor text format ---------------------------------------------------------

# Header line "degrees <n> <first> <second> <out>", then one entry per
# line "a b c value"; omitted entries are zero.


def save_bilinear_map(bmap: BilinearMap, path) -> None:
    with open(path, "w") as fh:
        fh.write("# bilinear map tensor: component_a component_b component_out value\n")
        fh.write(
            f"degrees {bmap.n} {bmap.degree_first} {bmap.degree_second} "
            f"{bmap.degree_out}\n"
        )
        for (a, b, c), value in np.ndenumerate(bmap.tensor):
            if value != 0.0:
                fh.write(f"{a} {b} {c} {float(value)!r}\n")


def load_bilinear_map(path) -> BilinearMap:
    header = None
    entries = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("degrees"):
                parts = line.split()
                if len(parts) != 5:
                    raise ValueError(
                        "header must read 'degrees <n> <first> <second> <out>'"
                    )
                header = tuple(int(x) for x in parts[1:])
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"bad tensor entry line: {raw.rstrip()!r}")
            entries.append((int(parts[0]), int(parts[1]), int(parts[2]),
                            float(parts[3])))
    if header is None:
        raise ValueError("tensor file is missing its degrees header")
    n, d1, d2, dout = header
    tensor = np.zeros((comb(n, d1), comb(n, d2), comb(n, dout)))
    for a, b, c, value in entries:
        tensor[a, b, c] = value
    return BilinearMap(n, d1, d2, dout, tensor)
