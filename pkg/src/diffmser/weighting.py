"""Diffusion-geometric vertex and edge weighting functions.

Each weighting is described by a :class:`WeightingSpec` with a compact text
form used on the command line::

    vw:heat:t=2048          h_t(v, v)
    vw:ct                   c(v, v)
    vw:sihk:w=0             modified heat kernel h^_w(v, v)
    vw:sihknorm:w1=0,w2=5   ||h^_w(v, v)||_w over a frequency band
    ew:absdiff:heat:t=2048  |f(v1) - f(v2)| for an inner vertex weighting f
    ew:invheat:t=2048       1 / h_t(v1, v2)
    ew:invct                1 / c(v1, v2)
    ew:invsihknorm:w1=0,w2=5  1 / ||h^_w(v1, v2)||_w
    ew:diffdist:t=2048      diffusion distance
    ew:heatl2:t1=128,t2=32000  ||h_t(v1, v1) - h_t(v2, v2)||_t over [t1, t2]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.integrate import trapezoid

from .component_tree import WeightedGraph
from .errors import NumericalError
from .spectral import (
    TIME_GRID,
    auto_diffusivity,
    commute_time_diagonal,
    commute_time_pairs,
    diffusion_distance_pairs,
    heat_kernel_pairs,
    modified_auto_diffusivity,
    modified_heat_kernel_pairs,
)

VERTEX_KINDS = ("heat", "ct", "sihk", "sihknorm")
EDGE_KINDS = ("absdiff", "invheat", "invct", "invsihknorm", "diffdist", "heatl2")

DEFAULT_TIME = 2048.0
DEFAULT_OMEGA = 0
DEFAULT_BAND = (0, 5)
DEFAULT_TIME_RANGE = (128.0, 32000.0)

# parameters each kind accepts, with defaults
_PARAMS = {
    "heat": {"t": DEFAULT_TIME},
    "ct": {},
    "sihk": {"w": DEFAULT_OMEGA},
    "sihknorm": {"w1": DEFAULT_BAND[0], "w2": DEFAULT_BAND[1]},
    "absdiff": {},
    "invheat": {"t": DEFAULT_TIME},
    "invct": {},
    "invsihknorm": {"w1": DEFAULT_BAND[0], "w2": DEFAULT_BAND[1]},
    "diffdist": {"t": DEFAULT_TIME},
    "heatl2": {"t1": DEFAULT_TIME_RANGE[0], "t2": DEFAULT_TIME_RANGE[1]},
}
_INT_PARAMS = {"w", "w1", "w2"}


@dataclass(frozen=True)
class WeightingSpec:
    """A weighting function and its parameters.

    Parameters not meaningful for ``kind`` must be left as ``None``; missing
    ones receive their defaults (``t = 2048``, ``w = 0``, band ``[0, 5]``,
    time range ``[128, 32000]``).
    """

    kind: str
    t: float | None = None
    w: int | None = None
    w1: int | None = None
    w2: int | None = None
    t1: float | None = None
    t2: float | None = None
    inner: WeightingSpec | None = field(default=None)

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        allowed = _PARAMS[self.kind]
        for f in fields(self):
            if f.name in ("kind", "inner"):
                continue
            value = getattr(self, f.name)
            if f.name not in allowed:
                if value is not None:
                    raise ValueError(f"{self.kind!r} takes no parameter {f.name!r}")
                continue
            if value is None:
                value = allowed[f.name]
            value = int(value) if f.name in _INT_PARAMS else float(value)
            object.__setattr__(self, f.name, value)

        if self.kind == "absdiff":
            inner = self.inner or WeightingSpec("heat")
            if not inner.is_vertex:
                raise ValueError("absdiff needs a vertex weighting as its inner field")
            object.__setattr__(self, "inner", inner)
        elif self.inner is not None:
            raise ValueError(f"{self.kind!r} takes no inner weighting")

        if self.t is not None and not self.t > 0:
            raise ValueError("t must be positive")
        for name in ("w", "w1", "w2"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f"{name} must be a non-negative frequency index")
        if self.w1 is not None and not self.w1 < self.w2:
            raise ValueError("need w1 < w2")
        if self.t1 is not None and not 0 < self.t1 < self.t2:
            raise ValueError("need 0 < t1 < t2")

    @property
    def is_vertex(self):
        return self.kind in VERTEX_KINDS

    @property
    def is_edge(self):
        return self.kind in EDGE_KINDS

    @property
    def family(self):
        """Kind label without numeric parameters, e.g. ``ew:absdiff:heat``."""
        prefix = "vw" if self.is_vertex else "ew"
        if self.inner is not None:
            return f"{prefix}:{self.kind}:{self.inner.kind}"
        return f"{prefix}:{self.kind}"

    def _param_string(self):
        parts = []
        for name in _PARAMS[self.kind]:
            value = getattr(self, name)
            text = str(value) if name in _INT_PARAMS else _format_float(value)
            parts.append(f"{name}={text}")
        return ",".join(parts)

    def __str__(self):
        prefix = "vw" if self.is_vertex else "ew"
        out = f"{prefix}:{self.kind}"
        if self.inner is not None:
            out += ":" + str(self.inner).split(":", 1)[1]
            return out
        params = self._param_string()
        return f"{out}:{params}" if params else out

    @classmethod
    def parse(cls, text):
        """Parse the compact form, e.g. ``"ew:absdiff:heat:t=1024"``."""
        parts = [p.strip() for p in text.strip().split(":")]
        if len(parts) < 2 or parts[0] not in ("vw", "ew"):
            raise ValueError(f"weighting {text!r} must start with 'vw:' or 'ew:'")
        prefix, kind, rest = parts[0], parts[1], parts[2:]
        if kind not in _PARAMS:
            raise ValueError(f"unknown weighting kind {kind!r} in {text!r}")
        is_vertex = kind in VERTEX_KINDS
        if (prefix == "vw") != is_vertex:
            raise ValueError(f"{kind!r} is not a {'vertex' if prefix == 'vw' else 'edge'} weighting")
        if kind == "absdiff":
            if len(rest) > 2:
                raise ValueError(f"malformed weighting {text!r}")
            inner = cls.parse("vw:" + ":".join(rest)) if rest else None
            return cls(kind, inner=inner)
        if len(rest) > 1:
            raise ValueError(f"malformed weighting {text!r}")
        kwargs = {}
        if rest and rest[0]:
            for item in rest[0].split(","):
                key, sep, value = item.partition("=")
                key = key.strip()
                if not sep or key not in _PARAMS[kind]:
                    raise ValueError(f"bad parameter {item!r} for {kind!r}")
                try:
                    kwargs[key] = int(value) if key in _INT_PARAMS else float(value)
                except ValueError:
                    raise ValueError(f"bad value in {item!r}") from None
        return cls(kind, **kwargs)


def _format_float(x):
    # shortest round-trip text, without a trailing ".0"
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


# The twelve rows of the weighting comparison with their instability cutoffs.
TABLE_ROWS = (
    (WeightingSpec("heat"), math.inf),
    (WeightingSpec("ct"), math.inf),
    (WeightingSpec("sihk"), math.inf),
    (WeightingSpec("sihknorm"), math.inf),
    (WeightingSpec("absdiff", inner=WeightingSpec("heat")), 2.51e5),
    (WeightingSpec("absdiff", inner=WeightingSpec("ct")), math.inf),
    (WeightingSpec("absdiff", inner=WeightingSpec("sihk")), math.inf),
    (WeightingSpec("invheat"), math.inf),
    (WeightingSpec("invct"), 1.0),
    (WeightingSpec("invsihknorm"), 100.0),
    (WeightingSpec("diffdist"), 5e6),
    (WeightingSpec("heatl2"), 1.58e7),
)

_CUTOFFS = {spec.family: cutoff for spec, cutoff in TABLE_ROWS}


def default_max_instability(spec):
    """Instability cutoff associated with a weighting family (``inf`` if none)."""
    return _CUTOFFS.get(spec.family, math.inf)


def _band_norm(spectra, w1, w2):
    band = spectra[..., w1 : w2 + 1]
    if band.shape[-1] != w2 - w1 + 1:
        raise ValueError(f"frequency band [{w1}, {w2}] exceeds the grid length")
    return np.sqrt(trapezoid(np.square(band), dx=1.0, axis=-1))


def vertex_weights(spec, basis, grid=TIME_GRID):
    """Evaluate a vertex weighting on every vertex.

    Returns
    -------
    ndarray, shape=[N]
    """
    if isinstance(spec, str):
        spec = WeightingSpec.parse(spec)
    if not spec.is_vertex:
        raise ValueError(f"{spec} is not a vertex weighting")
    if spec.kind == "heat":
        return auto_diffusivity(basis, spec.t)
    if spec.kind == "ct":
        return commute_time_diagonal(basis)
    spectra = modified_auto_diffusivity(basis, grid)
    if spec.kind == "sihk":
        if spec.w >= spectra.shape[1]:
            raise ValueError(f"frequency {spec.w} exceeds the grid length")
        return spectra[:, spec.w]
    return _band_norm(spectra, spec.w1, spec.w2)


def _inverse(values, edges, what):
    bad = np.flatnonzero(~(values > 0))
    if bad.size:
        u, v = edges[bad[0]]
        raise NumericalError(
            f"{what} is {values[bad[0]]!r} on edge ({int(u)}, {int(v)}) "
            f"({bad.size} edge(s) non-positive); increase k or check the mesh"
        )
    return 1.0 / values


def edge_weights(spec, basis, edges, grid=TIME_GRID):
    """Evaluate an edge weighting on the given edges.

    Parameters
    ----------
    spec : WeightingSpec or str
    basis : SpectralBasis
    edges : array_like, shape=[E, 2]
    grid : array_like
        Log-uniform time grid of the modified heat kernel and of the
        time-integrated kinds.

    Returns
    -------
    ndarray, shape=[E]

    Raises
    ------
    NumericalError
        If an inverse kind meets a non-positive kernel value.
    """
    if isinstance(spec, str):
        spec = WeightingSpec.parse(spec)
    if not spec.is_edge:
        raise ValueError(f"{spec} is not an edge weighting")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    u, v = edges[:, 0], edges[:, 1]
    kind = spec.kind
    if kind == "absdiff":
        f = vertex_weights(spec.inner, basis, grid)
        return np.abs(f[u] - f[v])
    if kind == "invheat":
        return _inverse(heat_kernel_pairs(basis, spec.t, u, v), edges, f"h_{_format_float(spec.t)}")
    if kind == "invct":
        return _inverse(commute_time_pairs(basis, u, v), edges, "commute-time kernel")
    if kind == "invsihknorm":
        spectra = modified_heat_kernel_pairs(basis, grid, u, v)
        return _inverse(_band_norm(spectra, spec.w1, spec.w2), edges, "modified heat kernel norm")
    if kind == "diffdist":
        return diffusion_distance_pairs(basis, spec.t, u, v)
    # heatl2
    grid = np.asarray(grid, dtype=float)
    times = grid[(grid >= spec.t1) & (grid <= spec.t2)]
    if len(times) < 2:
        raise ValueError(f"fewer than two grid times inside [{spec.t1:g}, {spec.t2:g}]")
    h = auto_diffusivity(basis, times)
    return np.sqrt(trapezoid(np.square(h[u] - h[v]), x=times, axis=1))


def weighted_graph(spec, basis, edges, grid=TIME_GRID):
    """Build the :class:`~diffmser.component_tree.WeightedGraph` for a weighting."""
    if isinstance(spec, str):
        spec = WeightingSpec.parse(spec)
    if spec.is_vertex:
        return WeightedGraph(
            basis.n_vertices, edges, vertex_weights=vertex_weights(spec, basis, grid),
            areas=basis.areas,
        )
    return WeightedGraph(
        basis.n_vertices, edges, edge_weights=edge_weights(spec, basis, edges, grid),
        areas=basis.areas,
    )

