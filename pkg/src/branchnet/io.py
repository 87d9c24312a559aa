"""JSON serialization for measures and networks, plus SVG emission.

Measure files: {"version": 1, "n": ..., "m": ..., "atoms": [{"p": [...],
"w": [...]}]}.  Network files: {"version": 1, "n": ..., "m": ...,
"edges": [{"a": [...], "b": [...], "theta": [...]}]}.  Numbers are written
as decimal text with full precision (repr round-trips IEEE doubles), so
save followed by load is an exact identity up to ordering.
"""

from __future__ import annotations

import colorsys
import json
import math
from pathlib import Path

import numpy as np

from branchnet.chains import Atom, Chain0, Chain1, Edge

FORMAT_VERSION = 1


class SchemaError(ValueError):
    """Malformed or inconsistent input file; message carries the location."""


def _require(cond: bool, where: str, msg: str):
    if not cond:
        raise SchemaError(f"{where}: {msg}")


def _check_vector(v, length: int, where: str) -> tuple[float, ...]:
    _require(isinstance(v, list), where, f"expected a list, got {type(v).__name__}")
    _require(len(v) == length, where, f"expected length {length}, got {len(v)}")
    out = []
    for i, x in enumerate(v):
        _require(isinstance(x, (int, float)) and not isinstance(x, bool), f"{where}[{i}]", "expected a number")
        xf = float(x)
        _require(math.isfinite(xf), f"{where}[{i}]", "non-finite number")
        out.append(xf)
    return tuple(out)


def _load_header(path, kind: str) -> tuple[dict, int, int]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: cannot read {kind} file: {exc}") from exc
    _require(isinstance(doc, dict), str(path), "top level must be an object")
    for key in ("version", "n", "m"):
        _require(key in doc, str(path), f"missing field '{key}'")
    _require(doc["version"] == FORMAT_VERSION, f"{path}:version", f"unsupported version {doc['version']}")
    n, m = doc["n"], doc["m"]
    _require(isinstance(n, int) and n >= 1, f"{path}:n", "n must be a positive integer")
    _require(isinstance(m, int) and m >= 1, f"{path}:m", "m must be a positive integer")
    return doc, n, m


def load_measure(path) -> Chain0:
    doc, n, m = _load_header(path, "measure")
    _require("atoms" in doc and isinstance(doc["atoms"], list), f"{path}:atoms", "missing atom list")
    atoms = []
    for i, rec in enumerate(doc["atoms"]):
        where = f"{path}:atoms[{i}]"
        _require(isinstance(rec, dict), where, "expected an object")
        _require("p" in rec and "w" in rec, where, "atom needs fields 'p' and 'w'")
        p = _check_vector(rec["p"], n, f"{where}.p")
        w = _check_vector(rec["w"], m, f"{where}.w")
        atoms.append(Atom(p, w))
    return Chain0(n, m, tuple(atoms))


def save_measure(mu: Chain0, path) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "n": mu.n,
        "m": mu.m,
        "atoms": [{"p": list(a.position), "w": list(a.weight)} for a in mu.atoms],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_network(path) -> Chain1:
    doc, n, m = _load_header(path, "network")
    _require("edges" in doc and isinstance(doc["edges"], list), f"{path}:edges", "missing edge list")
    edges = []
    for i, rec in enumerate(doc["edges"]):
        where = f"{path}:edges[{i}]"
        _require(isinstance(rec, dict), where, "expected an object")
        for key in ("a", "b", "theta"):
            _require(key in rec, where, f"edge needs field '{key}'")
        a = _check_vector(rec["a"], n, f"{where}.a")
        b = _check_vector(rec["b"], n, f"{where}.b")
        th = _check_vector(rec["theta"], m, f"{where}.theta")
        _require(a != b, where, "degenerate edge (a == b)")
        edges.append(Edge(a, b, th))
    return Chain1(n, m, tuple(edges))


def save_network(T: Chain1, path) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "n": T.n,
        "m": T.m,
        "edges": [{"a": list(e.a), "b": list(e.b), "theta": list(e.theta)} for e in T.edges],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


# ---------------------------------------------------------------------------
# SVG rendering (planar chains)

def _component_hue(j: int, m: int) -> float:
    return (j / max(m, 1)) % 1.0


def _blend_color(theta) -> str:
    th = np.abs(np.asarray(theta, dtype=float))
    total = float(th.sum())
    m = len(th)
    if total == 0:
        return "#888888"
    hue = float(sum(_component_hue(j, m) * th[j] for j in range(m)) / total)
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 0.75)
    return f"#{int(r * 255):02x}{int(g * 255):02x}{int(b * 255):02x}"


def emit_svg(
    T: Chain1,
    mu_minus: Chain0 | None = None,
    mu_plus: Chain0 | None = None,
    path="network.svg",
    gamma: float = 0.7,
    width: int = 640,
    project: bool = False,
) -> None:
    """Render a planar network: stroke width proportional to |theta|_2^gamma,
    per-component hue blending, measures as discs scaled by weight norm.

    Chains with n > 2 require project=True (first two coordinates)."""
    if T.n != 2 and not project:
        raise ValueError(f"n={T.n}: SVG rendering is planar; pass project=True for a coordinate projection")

    def xy(p):
        return (p[0], p[1]) if len(p) >= 2 else (p[0], 0.0)

    pts = [xy(e.a) for e in T.edges] + [xy(e.b) for e in T.edges]
    for mu in (mu_minus, mu_plus):
        if mu is not None:
            pts += [xy(a.position) for a in mu.atoms]
    if not pts:
        Path(path).write_text('<svg xmlns="http://www.w3.org/2000/svg" width="64" height="64"/>\n')
        return
    P = np.array(pts)
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = float(np.max(hi - lo)) or 1.0
    pad = 0.05 * span
    scale = width / (span + 2 * pad)

    def to_px(p):
        q = (np.array(xy(p)) - lo + pad) * scale
        return float(q[0]), float(width - q[1])

    norms = [float(np.linalg.norm(e.theta)) for e in T.edges]
    wmax = max(norms) if norms else 1.0
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{width}">']
    for e, nrm in zip(T.edges, norms):
        (x1, y1), (x2, y2) = to_px(e.a), to_px(e.b)
        sw = 1.0 + 6.0 * (nrm / wmax) ** gamma if wmax > 0 else 1.0
        parts.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'stroke="{_blend_color(e.theta)}" stroke-width="{sw:.2f}" stroke-linecap="round"/>'
        )
    for mu, color in ((mu_minus, "#1f77b4"), (mu_plus, "#d62728")):
        if mu is None:
            continue
        wm = max((float(np.linalg.norm(a.weight)) for a in mu.atoms), default=1.0) or 1.0
        for a in mu.atoms:
            x, y = to_px(a.position)
            r = 2.0 + 5.0 * float(np.linalg.norm(a.weight)) / wm
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" fill="{color}" fill-opacity="0.8"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
