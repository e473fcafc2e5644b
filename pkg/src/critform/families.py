"""Built-in graph families and exhaustions: integer lattices with Dirichlet
shells, Dirichlet paths, designed birth–death chains, plus seeded random
instance generators used by the property suites.
"""
from __future__ import annotations

import numpy as np

from .criticality import Exhaustion
from .errors import BadConfig, UnknownFamily
from .forms import GraphForm, build_form

__all__ = [
    "lattice",
    "lattice_exhaustion",
    "dirichlet_path",
    "dirichlet_path_exhaustion",
    "path_form",
    "birth_death",
    "birth_death_exhaustion",
    "constant_exhaustion",
    "builtin_family",
    "random_connected_form",
    "random_tree_form",
    "random_kernel_data",
    "DEFAULT_LATTICE_RADII",
]

DEFAULT_LATTICE_RADII = {
    1: (25, 50, 100, 150, 200),
    2: (8, 16, 24, 32, 48, 64),
    3: (4, 6, 8, 10, 12),
}


def _coord_id(point: tuple[int, ...]) -> str:
    return ",".join(str(c) for c in point)


def lattice(d: int, R: int) -> GraphForm:
    """Box {-R..R}^d with unit edge weights, mu = 1, c = 0, and a Dirichlet
    boundary on the sup-norm shell |x|_inf = R."""
    if d not in (1, 2, 3):
        raise BadConfig(f"lattice dimension must be 1, 2, or 3, got {d}")
    if R < 1:
        raise BadConfig(f"lattice radius must be >= 1, got {R}")
    axis = range(-R, R + 1)
    if d == 1:
        points = [(i,) for i in axis]
    elif d == 2:
        points = [(i, j) for i in axis for j in axis]
    else:
        points = [(i, j, k) for i in axis for j in axis for k in axis]
    vertices = [_coord_id(p) for p in points]
    edges = []
    for p in points:
        for ax in range(d):
            q = list(p)
            q[ax] += 1
            if q[ax] <= R:
                edges.append([_coord_id(p), _coord_id(tuple(q)), 1.0])
    shell = [_coord_id(p) for p in points if max(abs(c) for c in p) == R]
    return build_form({
        "vertices": vertices,
        "edges": edges,
        "dirichlet": shell,
        "name": f"lattice-d{d}-R{R}",
    })


def lattice_exhaustion(d: int, radii=None) -> Exhaustion:
    radii = tuple(radii) if radii is not None else DEFAULT_LATTICE_RADII[d]
    root = _coord_id((0,) * d)
    return Exhaustion(generator=lambda R: lattice(d, R), radii=radii, root=root)


def dirichlet_path(R: int) -> GraphForm:
    """Path 0..R with unit weights and Dirichlet boundary at both endpoints."""
    if R < 2:
        raise BadConfig(f"Dirichlet path level needs R >= 2, got {R}")
    vertices = [str(n) for n in range(R + 1)]
    edges = [[str(n), str(n + 1), 1.0] for n in range(R)]
    return build_form({
        "vertices": vertices,
        "edges": edges,
        "dirichlet": ["0", str(R)],
        "name": f"dirichlet-path-R{R}",
    })


def dirichlet_path_exhaustion(radii=(25, 50, 100, 150, 200)) -> Exhaustion:
    return Exhaustion(generator=dirichlet_path, radii=tuple(radii), root="1")


def path_form(N: int) -> GraphForm:
    """Half-line testbed: path 0..N, unit weights, mu = 1, Dirichlet at 0
    only.  Its Green function is min(n, m)."""
    if N < 1:
        raise BadConfig(f"path length must be >= 1, got {N}")
    vertices = [str(n) for n in range(N + 1)]
    edges = [[str(n), str(n + 1), 1.0] for n in range(N)]
    return build_form({
        "vertices": vertices,
        "edges": edges,
        "dirichlet": ["0"],
        "name": f"path-N{N}",
    })


def _birth_death_potential(beta: float, gamma: float, n: int) -> float:
    """Potential making h(n) = (n+1)^(-gamma) annihilated by the generator of
    the chain with b(n, n+1) = (n+1)^beta and mu = 1."""
    def b(k):
        return float(k + 1) ** beta

    def h(k):
        return float(k + 1) ** (-gamma)

    l0 = b(n) * (h(n) - h(n + 1))
    if n > 0:
        l0 += b(n - 1) * (h(n) - h(n - 1))
    return -l0 / h(n)


def birth_death(beta: float, R: int, gamma: float | None = None) -> GraphForm:
    """Birth–death chain on 0..R with b(n, n+1) = (n+1)^beta, mu = 1, and a
    Dirichlet cap at R.  With gamma set, the potential is designed so that
    h(n) = (n+1)^(-gamma) is annihilated by the generator — for beta = 2,
    gamma = 1 the chain is critical with ground state h."""
    if R < 2:
        raise BadConfig(f"birth-death level needs R >= 2, got {R}")
    vertices = [str(n) for n in range(R + 1)]
    edges = [[str(n), str(n + 1), float(n + 1) ** beta] for n in range(R)]
    spec = {
        "vertices": vertices,
        "edges": edges,
        "dirichlet": [str(R)],
        "name": f"birth-death-b{beta}-R{R}",
    }
    if gamma is not None:
        spec["potential"] = {
            str(n): _birth_death_potential(beta, gamma, n) for n in range(R)
        }
    return build_form(spec)


def birth_death_exhaustion(beta: float, gamma: float | None = None,
                           radii=(25, 50, 100, 200, 400)) -> Exhaustion:
    return Exhaustion(
        generator=lambda R: birth_death(beta, R, gamma),
        radii=tuple(radii),
        root="0",
    )


def constant_exhaustion(form: GraphForm, n_levels: int = 4) -> Exhaustion:
    """Wrap a single finite form as a trivially constant exhaustion (every
    level identical), rooted at its first non-Dirichlet vertex."""
    act = form.active
    if act.size == 0:
        raise BadConfig("form has no non-Dirichlet vertices")
    root = form.vertices[act[0]]
    return Exhaustion(
        generator=lambda R: form,
        radii=tuple(range(1, n_levels + 1)),
        root=root,
    )


def builtin_family(name: str, params: dict | None = None) -> Exhaustion:
    """Named deterministic exhaustions for the CLI: lattice (d, radii),
    birth_death (beta, gamma, radii), dirichlet_path (radii)."""
    params = dict(params or {})

    def pop_radii(default=None):
        radii = params.pop("radii", default)
        if radii is None:
            return None
        try:
            radii = tuple(int(r) for r in radii)
        except (TypeError, ValueError) as exc:
            raise BadConfig(f"radii must be a list of integers: {exc}") from None
        return radii

    if name == "lattice":
        try:
            d = int(params.pop("d"))
        except KeyError:
            raise BadConfig("lattice family needs parameter d") from None
        radii = pop_radii()
        _reject_extras(name, params)
        if d not in DEFAULT_LATTICE_RADII:
            raise BadConfig(f"lattice dimension must be 1, 2, or 3, got {d}")
        return lattice_exhaustion(d, radii)
    if name == "birth_death":
        try:
            beta = float(params.pop("beta"))
        except KeyError:
            raise BadConfig("birth_death family needs parameter beta") from None
        gamma = params.pop("gamma", None)
        gamma = None if gamma is None else float(gamma)
        radii = pop_radii((25, 50, 100, 200, 400))
        _reject_extras(name, params)
        return birth_death_exhaustion(beta, gamma, radii)
    if name == "dirichlet_path":
        radii = pop_radii((25, 50, 100, 150, 200))
        _reject_extras(name, params)
        return dirichlet_path_exhaustion(radii)
    raise UnknownFamily(
        f"unknown family {name!r}; available: lattice, birth_death, dirichlet_path"
    )


def _reject_extras(name: str, params: dict) -> None:
    if params:
        raise BadConfig(f"unknown parameters for family {name!r}: {sorted(params)}")


# ---------------------------------------------------------------------------
# seeded random instances for the property suites
# ---------------------------------------------------------------------------

def random_tree_form(n: int, seed: int, potential_low: float = 0.1,
                     potential_high: float = 1.0) -> GraphForm:
    """Random tree with uniform(0.5, 2) weights and measures and strictly
    positive potentials — always subcritical."""
    if n < 2:
        raise BadConfig("tree needs at least 2 vertices")
    rng = np.random.default_rng(seed)
    width = len(str(n - 1))
    ids = [str(k).zfill(width) for k in range(n)]
    edges = []
    for k in range(1, n):
        parent = int(rng.integers(0, k))
        edges.append([ids[parent], ids[k], float(rng.uniform(0.5, 2.0))])
    return build_form({
        "vertices": ids,
        "edges": edges,
        "mu": {v: float(rng.uniform(0.5, 2.0)) for v in ids},
        "potential": {v: float(rng.uniform(potential_low, potential_high)) for v in ids},
        "name": f"random-tree-{n}-{seed}",
    })


def random_connected_form(n: int, seed: int, extra_edge_prob: float = 0.15,
                          signed_potential: bool = False,
                          dirichlet_count: int = 0) -> GraphForm:
    """Random connected graph: a random tree plus extra edges, uniform
    weights/measures, and optional small signed or nonnegative potentials."""
    if n < 2:
        raise BadConfig("graph needs at least 2 vertices")
    rng = np.random.default_rng(seed)
    width = len(str(n - 1))
    ids = [str(k).zfill(width) for k in range(n)]
    seen = set()
    edges = []
    for k in range(1, n):
        parent = int(rng.integers(0, k))
        seen.add((parent, k))
        edges.append([ids[parent], ids[k], float(rng.uniform(0.5, 2.0))])
    n_extra = rng.binomial(n, extra_edge_prob)
    for _ in range(int(n_extra)):
        u, v = sorted(rng.choice(n, size=2, replace=False).tolist())
        if (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append([ids[u], ids[v], float(rng.uniform(0.5, 2.0))])
    mu = {v: float(rng.uniform(0.5, 2.0)) for v in ids}
    if signed_potential:
        # genuinely signed but provably nonnegative: pick h > 0, choose c so
        # that h is annihilated by the edge part, then add a nonnegative bump
        h = {v: float(rng.uniform(0.5, 2.0)) for v in ids}
        raw = {v: 0.0 for v in ids}
        for u, v, b in edges:
            raw[u] += b * (h[u] - h[v])
            raw[v] += b * (h[v] - h[u])
        pot = {
            v: -raw[v] / (h[v] * mu[v]) + float(rng.uniform(0.0, 0.3))
            for v in ids
        }
    else:
        pot = {v: float(rng.uniform(0.0, 0.5)) for v in ids}
    boundary = []
    if dirichlet_count > 0:
        boundary = [ids[int(i)] for i in rng.choice(n, size=min(dirichlet_count, n - 1),
                                                    replace=False)]
    return build_form({
        "vertices": ids,
        "edges": edges,
        "mu": mu,
        "potential": pot,
        "dirichlet": boundary,
        "name": f"random-graph-{n}-{seed}",
    })


def random_kernel_data(n_target: int, n_source: int, seed: int):
    """Strictly positive kernel matrix plus source/target measures."""
    rng = np.random.default_rng(seed)
    kernel = rng.uniform(0.1, 2.0, size=(n_target, n_source))
    mu = rng.uniform(0.5, 2.0, size=n_source)
    nu = rng.uniform(0.5, 2.0, size=n_target)
    return kernel, mu, nu
