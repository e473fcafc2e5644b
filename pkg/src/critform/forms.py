"""Quadratic forms on weighted graphs with measures, potentials and Dirichlet boundaries.

The central object is :class:`GraphForm`: an undirected graph with positive edge
weights ``b``, a positive vertex measure ``mu``, a real potential ``c`` and an
optional Dirichlet vertex set on which every admissible function vanishes.  The
associated energy is

    q(f) = sum_edges b(u,v) * (f(u) - f(v))**2 + sum_v c(v) * f(v)**2 * mu(v)

and the generator L satisfies q(f, g) = <L f, g>_mu on the non-Dirichlet part.
"""
from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla

from .config import tolerances
from .errors import (
    DisconnectedDirichletSpec,
    DomainMismatch,
    FormNotNonnegative,
    NonPositiveMeasure,
    NonSymmetricWeights,
    ParseError,
    SolverFailure,
)

__all__ = [
    "GraphForm",
    "VertexFunction",
    "InvarianceReport",
    "build_form",
    "evaluate",
    "evaluate_bilinear",
    "operator_apply",
    "check_first_bd",
    "check_lattice_inequality",
    "is_invariant_set",
    "irreducible_components",
    "as_function",
    "as_domain_function",
]

_ALLOWED_SPEC_KEYS = {"vertices", "edges", "mu", "potential", "dirichlet", "name", "comment"}


@dataclass(frozen=True)
class GraphForm:
    """Immutable graph form.  Vertex order is fixed at build time.

    Attributes
    ----------
    vertices : tuple of vertex ids (strings), in canonical (lexicographic) order
    edge_index : (m, 2) int array, each row (i, j) with i < j, one row per edge
    weights : (m,) positive edge weights
    measure : (n,) positive vertex measure
    potential : (n,) real potential
    dirichlet : frozenset of vertex ids forced to zero
    """

    vertices: tuple[str, ...]
    edge_index: np.ndarray
    weights: np.ndarray
    measure: np.ndarray
    potential: np.ndarray
    dirichlet: frozenset
    name: str = field(default="", compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for arr in (self.edge_index, self.weights, self.measure, self.potential):
            arr.setflags(write=False)
        # reentrant: cached builders may themselves read other cached fields
        self._cache["lock"] = threading.RLock()

    # -- basic geometry ----------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return self.edge_index.shape[0]

    def index(self, vertex: str) -> int:
        table = self._cached("index_table", lambda: {v: i for i, v in enumerate(self.vertices)})
        try:
            return table[vertex]
        except KeyError:
            raise DomainMismatch(f"unknown vertex id {vertex!r}") from None

    @property
    def boundary_mask(self) -> np.ndarray:
        def make():
            mask = np.zeros(self.n, dtype=bool)
            for v in self.dirichlet:
                mask[self.index(v)] = True
            mask.setflags(write=False)
            return mask
        return self._cached("boundary_mask", make)

    @property
    def active(self) -> np.ndarray:
        def make():
            idx = np.flatnonzero(~self.boundary_mask)
            idx.setflags(write=False)
            return idx
        return self._cached("active", make)

    @property
    def n_active(self) -> int:
        return int(self.active.size)

    # -- assembled matrices -------------------------------------------------

    @property
    def form_matrix(self) -> sp.csr_matrix:
        """Sparse n x n matrix Q with q(f) = f @ Q @ f for boundary-vanishing f."""
        def make():
            i = self.edge_index[:, 0]
            j = self.edge_index[:, 1]
            b = self.weights
            deg = np.zeros(self.n)
            np.add.at(deg, i, b)
            np.add.at(deg, j, b)
            diag = deg + self.potential * self.measure
            rows = np.concatenate([i, j, np.arange(self.n)])
            cols = np.concatenate([j, i, np.arange(self.n)])
            vals = np.concatenate([-b, -b, diag])
            return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))
        return self._cached("form_matrix", make)

    @property
    def active_form_matrix(self) -> sp.csr_matrix:
        def make():
            act = self.active
            return self.form_matrix[act][:, act].tocsr()
        return self._cached("active_form_matrix", make)

    @property
    def active_measure(self) -> np.ndarray:
        def make():
            m = self.measure[self.active]
            m.setflags(write=False)
            return m
        return self._cached("active_measure", make)

    def operator_norm_bound(self) -> float:
        """Row-sum bound on the mu-weighted operator norm of L."""
        def make():
            i = self.edge_index[:, 0]
            j = self.edge_index[:, 1]
            deg = np.zeros(self.n)
            np.add.at(deg, i, self.weights)
            np.add.at(deg, j, self.weights)
            vals = (2.0 * deg + np.abs(self.potential) * self.measure) / self.measure
            act = self.active
            return float(vals[act].max()) if act.size else 0.0
        return self._cached("norm_bound", make)

    def _cached(self, key, make):
        cache = self._cache
        if key not in cache:
            with cache["lock"]:
                if key not in cache:
                    cache[key] = make()
        return cache[key]


@dataclass(frozen=True)
class VertexFunction:
    """Values attached to the vertex tuple of a specific form."""

    vertices: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.vertices),):
            raise DomainMismatch(
                f"function has {vals.shape} values for {len(self.vertices)} vertices"
            )
        object.__setattr__(self, "values", vals)
        vals.setflags(write=False)

    @classmethod
    def from_mapping(cls, form: GraphForm, mapping: Mapping[str, float]) -> "VertexFunction":
        unknown = set(mapping) - set(form.vertices)
        if unknown:
            raise DomainMismatch(f"values reference unknown vertices: {sorted(unknown)[:5]}")
        vals = np.array([float(mapping.get(v, 0.0)) for v in form.vertices])
        return cls(form.vertices, vals)

    def as_mapping(self) -> dict[str, float]:
        return {v: float(x) for v, x in zip(self.vertices, self.values)}


# ---------------------------------------------------------------------------
# function coercion
# ---------------------------------------------------------------------------

def as_function(form: GraphForm, f) -> np.ndarray:
    """Coerce ``f`` (array, sequence, mapping or VertexFunction) to a full vector."""
    if isinstance(f, VertexFunction):
        if f.vertices != form.vertices:
            raise DomainMismatch("function belongs to a different vertex set")
        return np.asarray(f.values, dtype=float)
    if isinstance(f, Mapping):
        return VertexFunction.from_mapping(form, f).values
    arr = np.asarray(f, dtype=float)
    if arr.shape != (form.n,):
        raise DomainMismatch(f"expected {form.n} values, got shape {arr.shape}")
    return arr


def as_domain_function(form: GraphForm, f) -> np.ndarray:
    """Like :func:`as_function` but requires f to vanish on the Dirichlet set."""
    arr = as_function(form, f)
    if form.dirichlet and np.any(arr[form.boundary_mask] != 0.0):
        raise DomainMismatch("form argument must vanish on the Dirichlet boundary")
    return arr


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def build_form(spec: Mapping) -> GraphForm:
    """Build a validated :class:`GraphForm` from a parsed graph description.

    Expected keys: ``vertices`` (list of ids), ``edges`` (list of [u, v, b]),
    and optional ``mu`` (default 1), ``potential`` (default 0), ``dirichlet``
    (default empty).  Vertices are reordered lexicographically.
    """
    unknown = set(spec) - _ALLOWED_SPEC_KEYS
    if unknown:
        raise ParseError(f"unknown graph-description keys: {sorted(unknown)}")
    if "vertices" not in spec:
        raise ParseError("graph description lacks 'vertices'")

    raw_vertices = [str(v) for v in spec["vertices"]]
    if len(set(raw_vertices)) != len(raw_vertices):
        raise ParseError("duplicate vertex ids")
    if not raw_vertices:
        raise ParseError("empty vertex list")
    vertices = tuple(sorted(raw_vertices))
    index = {v: i for i, v in enumerate(vertices)}

    seen: dict[tuple[int, int], float] = {}
    for entry in spec.get("edges", []):
        if len(entry) != 3:
            raise ParseError(f"edge entry must be [u, v, b], got {entry!r}")
        u, v, b = str(entry[0]), str(entry[1]), float(entry[2])
        if u not in index or v not in index:
            raise ParseError(f"edge ({u!r}, {v!r}) references unknown vertex")
        if u == v:
            raise NonSymmetricWeights(f"self-loop at {u!r} (weights must vanish on the diagonal)")
        if b < 0:
            raise NonSymmetricWeights(f"negative weight {b} on edge ({u!r}, {v!r})")
        key = (min(index[u], index[v]), max(index[u], index[v]))
        if key in seen:
            if seen[key] != b:
                raise NonSymmetricWeights(
                    f"conflicting weights for edge ({u!r}, {v!r}): {seen[key]} vs {b}"
                )
        elif b > 0:
            seen[key] = b

    if seen:
        edge_index = np.array(sorted(seen), dtype=np.int64)
        weights = np.array([seen[tuple(row)] for row in edge_index], dtype=float)
    else:
        edge_index = np.zeros((0, 2), dtype=np.int64)
        weights = np.zeros(0, dtype=float)

    mu_map = spec.get("mu", {}) or {}
    pot_map = spec.get("potential", {}) or {}
    for name, mapping in (("mu", mu_map), ("potential", pot_map)):
        bad = set(map(str, mapping)) - set(vertices)
        if bad:
            raise ParseError(f"{name} references unknown vertices: {sorted(bad)[:5]}")
    measure = np.array([float(mu_map.get(v, 1.0)) for v in vertices])
    potential = np.array([float(pot_map.get(v, 0.0)) for v in vertices])
    if np.any(measure <= 0) or not np.all(np.isfinite(measure)):
        raise NonPositiveMeasure("mu must be strictly positive and finite")
    if not np.all(np.isfinite(potential)):
        raise ParseError("potential must be finite")

    dirichlet_ids = [str(v) for v in spec.get("dirichlet", [])]
    bad = set(dirichlet_ids) - set(vertices)
    if bad:
        raise DisconnectedDirichletSpec(
            f"dirichlet set references unknown vertices: {sorted(bad)[:5]}"
        )

    form = GraphForm(
        vertices=vertices,
        edge_index=edge_index,
        weights=weights,
        measure=measure,
        potential=potential,
        dirichlet=frozenset(dirichlet_ids),
        name=str(spec.get("name", "")),
    )
    _validate_nonnegative(form)
    return form


def _validate_nonnegative(form: GraphForm) -> None:
    """Reject forms whose restricted energy takes negative values.

    With c >= 0 the energy is a sum of squares, so the check is skipped; signed
    potentials trigger a smallest-pencil-eigenvalue computation.
    """
    if np.all(form.potential[form.active] >= 0):
        return
    if form.n_active == 0:
        return
    tol = tolerances()["tol_psd"] * max(form.operator_norm_bound(), 1.0)
    lam = _smallest_pencil_eigenvalue(form)
    if lam < -tol:
        raise FormNotNonnegative(lam, tol)


def _smallest_pencil_eigenvalue(form: GraphForm) -> float:
    Q = form.active_form_matrix
    mu = form.active_measure
    n = Q.shape[0]
    if n <= 2000:
        dense = Q.toarray()
        lam = scipy.linalg.eigh(dense, np.diag(mu), eigvals_only=True,
                                subset_by_index=[0, 0])[0]
        return float(lam)
    # Symmetrize: eigenvalues of mu^{-1/2} Q mu^{-1/2} match the pencil.
    d = 1.0 / np.sqrt(mu)
    S = sp.diags(d) @ Q @ sp.diags(d)
    try:
        vals = spla.eigsh(S, k=1, which="SA", maxiter=5000,
                          return_eigenvectors=False, tol=1e-9)
        return float(vals[0])
    except Exception:
        pass
    # Lanczos stalls on near-semidefinite spectra (smallest eigenvalue ~ 0
    # with slow separation).  Rayleigh-Ritz values are always >= the true
    # minimum, so an unconverged LOBPCG result can only err toward acceptance,
    # and genuinely negative directions surface within a few iterations.
    rng = np.random.default_rng(0)
    X = rng.standard_normal((n, min(4, n)))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            theta, _ = spla.lobpcg(S.tocsr(), X, largest=False, maxiter=300,
                                   tol=1e-10)
        return float(np.min(theta))
    except Exception as exc:
        raise SolverFailure(
            f"cannot certify nonnegativity of the signed form: {exc}"
        ) from None


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate(form: GraphForm, f) -> float:
    """Energy q(f) of a boundary-vanishing function."""
    vec = as_domain_function(form, f)
    return float(vec @ (form.form_matrix @ vec))


def evaluate_bilinear(form: GraphForm, f, g) -> float:
    """Bilinear energy q(f, g)."""
    fv = as_domain_function(form, f)
    gv = as_domain_function(form, g)
    return float(fv @ (form.form_matrix @ gv))


def operator_apply(form: GraphForm, f) -> np.ndarray:
    """Apply the generator L (zero on the Dirichlet set)."""
    vec = as_domain_function(form, f)
    out = np.zeros(form.n)
    act = form.active
    out[act] = (form.form_matrix[act] @ vec) / form.measure[act]
    return out


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------

def check_first_bd(form: GraphForm, n_samples: int = 100, seed: int = 0) -> float:
    """Max violation of q(|f|) <= q(f) over unit-measure-normalized samples."""
    rng = np.random.default_rng(seed)
    act = form.active
    worst = -np.inf
    for _ in range(n_samples):
        f = np.zeros(form.n)
        f[act] = rng.standard_normal(act.size)
        norm = np.sqrt(float(np.sum(f * f * form.measure)))
        if norm == 0.0:
            continue
        f /= norm
        worst = max(worst, evaluate(form, np.abs(f)) - evaluate(form, f))
    return float(worst)


def check_lattice_inequality(form: GraphForm, f, g) -> float:
    """Gap q(f) + q(g) - q(f min g) - q(f max g), nonnegative up to tolerance."""
    fv = as_domain_function(form, f)
    gv = as_domain_function(form, g)
    lo = np.minimum(fv, gv)
    hi = np.maximum(fv, gv)
    return evaluate(form, fv) + evaluate(form, gv) - evaluate(form, lo) - evaluate(form, hi)


@dataclass(frozen=True)
class InvarianceReport:
    """Outcome of the invariant-set test for a vertex subset."""

    subset: tuple[str, ...]
    invariant: bool
    crossing_edges: tuple[tuple[str, str], ...]
    witness: np.ndarray | None
    witness_gap: float
    corroboration_gap: float


def is_invariant_set(form: GraphForm, subset: Iterable[str],
                     n_samples: int = 50, seed: int = 0) -> InvarianceReport:
    """Decide whether multiplying by the subset indicator never raises the energy.

    The decision is exact: the subset is invariant iff no positive-weight edge
    crosses between the subset and its complement (within the non-Dirichlet
    part).  When a crossing edge exists an explicit witness f with
    q(1_A f) > q(f) is constructed; random samples corroborate the verdict.
    """
    ids = {str(v) for v in subset}
    unknown = ids - set(form.vertices)
    if unknown:
        raise DomainMismatch(f"subset references unknown vertices: {sorted(unknown)[:5]}")
    in_a = np.zeros(form.n, dtype=bool)
    for v in ids:
        in_a[form.index(v)] = True
    in_a &= ~form.boundary_mask

    i = form.edge_index[:, 0]
    j = form.edge_index[:, 1]
    act_edge = ~form.boundary_mask[i] & ~form.boundary_mask[j]
    crossing = act_edge & (in_a[i] ^ in_a[j])
    cross_rows = np.flatnonzero(crossing)
    invariant = cross_rows.size == 0

    witness = None
    witness_gap = 0.0
    if not invariant:
        # Pick the crossing edge with the largest weight; perturb the outside
        # endpoint of the plain indicator by the optimal step.
        row = cross_rows[np.argmax(form.weights[cross_rows])]
        u, v = form.edge_index[row]
        outside = v if in_a[u] else u
        f = in_a.astype(float)
        delta = np.zeros(form.n)
        delta[outside] = 1.0
        s = -evaluate_bilinear(form, f, delta)
        qd = evaluate(form, delta)
        step = s / qd if qd > 0 else 1.0
        witness = f + step * delta
        witness_gap = evaluate(form, in_a.astype(float) * witness) - evaluate(form, witness)

    rng = np.random.default_rng(seed)
    act = form.active
    corroboration = -np.inf
    for _ in range(n_samples):
        f = np.zeros(form.n)
        f[act] = rng.standard_normal(act.size)
        norm = np.sqrt(float(np.sum(f * f * form.measure)))
        if norm == 0.0:
            continue
        f /= norm
        corroboration = max(corroboration, evaluate(form, f * in_a) - evaluate(form, f))

    return InvarianceReport(
        subset=tuple(sorted(ids)),
        invariant=invariant,
        crossing_edges=tuple(
            (form.vertices[form.edge_index[r, 0]], form.vertices[form.edge_index[r, 1]])
            for r in cross_rows[:16]
        ),
        witness=witness,
        witness_gap=float(witness_gap),
        corroboration_gap=float(corroboration),
    )


def irreducible_components(form: GraphForm) -> list[tuple[str, ...]]:
    """Connected components of the positive-weight edge graph."""
    i = form.edge_index[:, 0]
    j = form.edge_index[:, 1]
    adj = sp.csr_matrix(
        (np.ones(2 * len(i)), (np.concatenate([i, j]), np.concatenate([j, i]))),
        shape=(form.n, form.n),
    )
    n_comp, labels = csgraph.connected_components(adj, directed=False)
    comps: list[list[str]] = [[] for _ in range(n_comp)]
    for idx, lab in enumerate(labels):
        comps[lab].append(form.vertices[idx])
    return [tuple(c) for c in sorted(comps, key=lambda c: c[0])]


def is_irreducible(form: GraphForm) -> bool:
    return len(irreducible_components(form)) == 1
