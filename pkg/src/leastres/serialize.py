"""File formats: JSON meshes and bodies, CSV sweeps, OBJ surfaces.

Numbers are written with 17 significant digits, so save -> load -> save
is byte-identical.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Domain, GridFn, PolyBody


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    v = float(x)
    if not np.isfinite(v):
        raise RuntimeError(f"non-finite number in output: {v!r}")
    return format(v, ".17g")


def _emit(obj) -> str:
    if isinstance(obj, dict):
        inner = ",".join(f"{json.dumps(k)}:{_emit(v)}" for k, v in obj.items())
        return "{" + inner + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_emit(v) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    return _fmt(obj)


def dumps(obj) -> str:
    """Deterministic JSON with fixed float formatting."""
    return _emit(obj) + "\n"


def domain_to_dict(d: Domain) -> dict:
    if d.kind == "disk":
        return {"kind": "disk", "center": list(d.center), "radius": d.radius, "h": d.h}
    return {"kind": "polygon", "vertices": [list(v) for v in d.vertices], "h": d.h}


def domain_from_dict(obj) -> Domain:
    kind = obj["kind"]
    if kind == "disk":
        return Domain.disk(obj["center"], obj["radius"], obj["h"])
    if kind == "polygon":
        return Domain.polygon(obj["vertices"], obj["h"])
    raise ValueError(f"unknown domain kind {kind!r}")


def gridfn_to_json(u: GridFn) -> str:
    nodes = u.domain.nodes
    rows = [[nodes[i, 0], nodes[i, 1], u.values[i]] for i in range(len(nodes))]
    return dumps({
        "domain": domain_to_dict(u.domain),
        "h": u.domain.h,
        "height_cap": u.height_cap,
        "nodes": rows,
    })


def gridfn_from_json(text: str) -> GridFn:
    obj = json.loads(text)
    dom = domain_from_dict(obj["domain"])
    rows = np.asarray(obj["nodes"], dtype=float)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise ValueError("mesh nodes must be rows of [x, y, u]")
    pts = rows[:, :2]
    vals = rows[:, 2]
    nodes = dom.nodes
    if len(pts) != len(nodes):
        raise ValueError("mesh node count does not match the domain grid")
    # tolerate permuted node order from external writers
    dist, idx = cKDTree(pts).query(nodes)
    if dist.max() > 1e-9 * dom.diameter or len(np.unique(idx)) != len(nodes):
        raise ValueError("mesh nodes do not match the domain grid")
    return GridFn(dom, vals[idx], float(obj.get("height_cap", vals.max())))


def body_to_json(C: PolyBody) -> str:
    return dumps({"vertices": [list(v) for v in C.vertices]})


def body_from_json(text: str) -> PolyBody:
    obj = json.loads(text)
    return PolyBody.from_points(np.asarray(obj["vertices"], dtype=float))


def body_to_obj(C: PolyBody) -> str:
    lines = ["# convex body surface"]
    for v in C.vertices:
        lines.append("v " + " ".join(_fmt(x) for x in v))
    for normal, cycle, area in C.facets:
        lines.append("f " + " ".join(str(i + 1) for i in cycle))
    return "\n".join(lines) + "\n"


def gridfn_to_obj(u: GridFn) -> str:
    """Triangulated lower surface of the grid function."""
    p = u.domain.nodes
    lines = ["# graph surface"]
    for i in range(len(p)):
        lines.append(f"v {_fmt(p[i, 0])} {_fmt(p[i, 1])} {_fmt(u.values[i])}")
    for tri in u.envelope.simplices:
        lines.append("f " + " ".join(str(int(i) + 1) for i in tri))
    return "\n".join(lines) + "\n"


def trace_to_csv(trace) -> str:
    lines = ["iter,F"]
    for it, F in trace:
        lines.append(f"{int(it)},{_fmt(F)}")
    return "\n".join(lines) + "\n"


def toy_sweep_to_csv(rows) -> str:
    lines = ["s,F,chord,residual"]
    for s, F, chord, resid in rows:
        lines.append(",".join(_fmt(x) for x in (s, F, chord, resid)))
    return "\n".join(lines) + "\n"


def radial_to_csv(sol) -> str:
    r, phi = sol.phi()
    lines = ["r,phi"]
    for i in range(len(r)):
        lines.append(f"{_fmt(r[i])},{_fmt(phi[i])}")
    return "\n".join(lines) + "\n"


def assert_finite(obj, path="root"):
    """Hard failure on any NaN or infinity in a nested structure."""
    if isinstance(obj, dict):
        for k, v in obj.items():
            assert_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        for i, v in enumerate(obj):
            assert_finite(v, f"{path}[{i}]")
    elif isinstance(obj, (float, np.floating)):
        if not np.isfinite(obj):
            raise RuntimeError(f"non-finite value at {path}")
