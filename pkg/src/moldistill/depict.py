"""Deterministic 2D structure diagrams.

Layout: rings are drawn as regular polygons with unit bond length, chains
zig-zag at alternating 120 degree angles, and multi-ring systems (fused,
bridged, spiro) get a fixed-budget force-directed relaxation pass to
untangle what the constructive placement cannot. The layout is a pure
function of the graph, so repeated renders are byte-identical.

Output is SVG 1.1; ``render_png`` rasterizes the same layout to PNG bytes
for vision-model payloads.
"""

from __future__ import annotations

import io
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import GraphError
from .smiles import AROMATIC, DOUBLE, TRIPLE, MolGraph

RELAX_ITERATIONS = 200
_MAX_RING = 12


@dataclass
class DepictOptions:
    scale: float = 40.0       # pixels per bond length
    padding: float = 24.0
    font_size: float = 13.0
    image_size: int = 384     # PNG edge length


def find_rings(mol: MolGraph) -> list[list[int]]:
    """Smallest ring through each bond, deduplicated, as ordered vertex cycles."""
    adj: list[list[int]] = [[] for _ in range(mol.n)]
    for a, b, _ in mol.bonds:
        adj[a].append(b)
        adj[b].append(a)
    for nbrs in adj:
        nbrs.sort()

    rings: list[list[int]] = []
    seen: set[frozenset[int]] = set()
    for a, b, _ in mol.bonds:
        cycle = _shortest_cycle(adj, a, b)
        if cycle and len(cycle) <= _MAX_RING:
            key = frozenset(cycle)
            if key not in seen:
                seen.add(key)
                rings.append(cycle)
    return rings


def _shortest_cycle(adj, a: int, b: int) -> list[int] | None:
    """Shortest path b -> a avoiding the direct edge, closed into a cycle."""
    prev = {b: -1}
    queue = deque([b])
    while queue:
        u = queue.popleft()
        if u == a:
            break
        for v in adj[u]:
            if u == b and v == a:
                continue
            if v not in prev:
                prev[v] = u
                queue.append(v)
    if a not in prev:
        return None
    path = [a]
    while path[-1] != b:
        path.append(prev[path[-1]])
    return path


def _rotate(vec: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def layout_coordinates(mol: MolGraph) -> np.ndarray:
    """(n, 2) coordinates with unit bond length; pure function of the graph."""
    if mol.n < 1:
        raise GraphError("cannot lay out an empty graph")
    n = mol.n
    coords = np.full((n, 2), np.nan)
    placed = np.zeros(n, dtype=bool)

    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b, _ in mol.bonds:
        adj[a].append(b)
        adj[b].append(a)
    for nbrs in adj:
        nbrs.sort()

    rings = find_rings(mol)
    atom_rings: list[list[int]] = [[] for _ in range(n)]
    for ri, ring in enumerate(rings):
        for v in ring:
            atom_rings[v].append(ri)
    ring_placed = [False] * len(rings)

    parent = {}   # atom -> atom it was placed from
    depth = {}    # atom -> chain depth for zig-zag parity
    x_offset = 0.0

    def place_polygon(ring: list[int], ri: int):
        """Place every vertex of `ring`, honouring already-placed vertices."""
        k = len(ring)
        radius = 0.5 / math.sin(math.pi / k)
        fixed = [v for v in ring if placed[v]]

        if len(fixed) == 0:
            center = np.array([x_offset + radius, 0.0])
            for j, v in enumerate(ring):
                theta = math.pi + 2 * math.pi * j / k
                coords[v] = center + radius * np.array(
                    [math.cos(theta), math.sin(theta)]
                )
                placed[v] = True
                depth[v] = 0
        elif len(fixed) == 1:
            v0 = fixed[0]
            d = _entry_direction(v0)
            center = coords[v0] + d * radius
            base = math.atan2(*(coords[v0] - center)[::-1])
            cycle = ring[ring.index(v0):] + ring[: ring.index(v0)]
            for j, v in enumerate(cycle):
                if placed[v]:
                    continue
                theta = base + 2 * math.pi * j / k
                coords[v] = center + radius * np.array(
                    [math.cos(theta), math.sin(theta)]
                )
                placed[v] = True
                parent.setdefault(v, v0)
                depth[v] = depth.get(v0, 0)
        else:
            # find a placed edge of the ring to reflect across
            edge = None
            for i in range(k):
                u, v = ring[i], ring[(i + 1) % k]
                if placed[u] and placed[v]:
                    edge = (i, u, v)
                    break
            if edge is None:
                # placed vertices not adjacent (bridged systems); anchor on one
                anchor = fixed[0]
                d = _entry_direction(anchor)
                center = coords[anchor] + d * radius
            else:
                _, u, v = edge
                mid = (coords[u] + coords[v]) / 2.0
                evec = coords[v] - coords[u]
                normal = np.array([-evec[1], evec[0]])
                norm = np.linalg.norm(normal)
                normal = normal / norm if norm > 1e-12 else np.array([0.0, 1.0])
                apothem = 0.5 / math.tan(math.pi / k)
                occupied = _neighborhood_center(ring, mid)
                side = mid + normal * apothem
                if occupied is not None and np.dot(side - mid, occupied - mid) > 0:
                    normal = -normal
                center = mid + normal * apothem
            anchor = edge[1] if edge else fixed[0]
            base = math.atan2(*(coords[anchor] - center)[::-1])
            cycle = ring[ring.index(anchor):] + ring[: ring.index(anchor)]
            # choose rotation sign that walks away from the other fixed vertex
            step = 2 * math.pi / k
            second = cycle[1]
            cand = center + radius * np.array(
                [math.cos(base + step), math.sin(base + step)]
            )
            if placed[second] and np.linalg.norm(cand - coords[second]) > 1e-6:
                step = -step
            for j, v in enumerate(cycle):
                if placed[v]:
                    continue
                theta = base + step * j
                coords[v] = center + radius * np.array(
                    [math.cos(theta), math.sin(theta)]
                )
                placed[v] = True
                parent.setdefault(v, anchor)
                depth[v] = depth.get(anchor, 0)
        ring_placed[ri] = True

    def _entry_direction(v: int) -> np.ndarray:
        p = parent.get(v)
        if p is not None and placed[p]:
            d = coords[v] - coords[p]
            norm = np.linalg.norm(d)
            if norm > 1e-12:
                return d / norm
        nbrs = [u for u in adj[v] if placed[u]]
        if nbrs:
            avg = np.mean([coords[u] for u in nbrs], axis=0)
            d = coords[v] - avg
            norm = np.linalg.norm(d)
            if norm > 1e-12:
                return d / norm
        return np.array([1.0, 0.0])

    def _neighborhood_center(ring, mid) -> np.ndarray | None:
        pts = [coords[u] for u in range(n) if placed[u] and u not in ring]
        pts += [coords[u] for u in ring if placed[u]]
        if not pts:
            return None
        c = np.mean(pts, axis=0)
        return None if np.linalg.norm(c - mid) < 1e-9 else c

    def place_chain_atom(v: int, u: int):
        """Place v bonded to already-placed u, zig-zagging."""
        p = parent.get(u)
        base = np.array([1.0, 0.0])
        if p is not None and placed[p]:
            d = coords[u] - coords[p]
            norm = np.linalg.norm(d)
            if norm > 1e-12:
                base = d / norm
        k = sum(1 for w in adj[u] if placed[w])
        sign = 1.0 if depth.get(u, 0) % 2 == 0 else -1.0
        angles = [sign * math.pi / 3, -sign * math.pi / 3, 0.0,
                  sign * 2 * math.pi / 3, -sign * 2 * math.pi / 3, math.pi]
        for angle in angles[min(k - 1, len(angles) - 1):] + angles:
            pos = coords[u] + _rotate(base, angle)
            if _clear(pos):
                break
        coords[v] = pos
        placed[v] = True
        parent[v] = u
        depth[v] = depth.get(u, 0) + 1

    def _clear(pos) -> bool:
        idx = np.where(placed)[0]
        if len(idx) == 0:
            return True
        d = np.linalg.norm(coords[idx] - pos, axis=1)
        return bool(np.min(d) > 0.45)

    for start in range(n):
        if placed[start]:
            continue
        if start > 0:
            done = coords[placed]
            x_offset = float(np.max(done[:, 0])) + 2.0 if len(done) else 0.0
        if atom_rings[start]:
            ri = min(atom_rings[start], key=lambda r: (len(rings[r]), rings[r]))
            place_polygon(rings[ri], ri)
        else:
            coords[start] = np.array([x_offset, 0.0])
            placed[start] = True
            depth[start] = 0
        queue = deque(sorted(np.where(placed)[0].tolist()))
        while queue:
            u = queue.popleft()
            for ri in atom_rings[u]:
                if not ring_placed[ri]:
                    place_polygon(rings[ri], ri)
                    queue.extend(v for v in rings[ri] if v != u)
            for v in adj[u]:
                if placed[v]:
                    continue
                shared = [ri for ri in atom_rings[v] if not ring_placed[ri]]
                if shared:
                    ri = min(shared, key=lambda r: (len(rings[r]), rings[r]))
                    parent.setdefault(v, u)
                    place_polygon(rings[ri], ri)
                    queue.extend(w for w in rings[ri])
                else:
                    place_chain_atom(v, u)
                    queue.append(v)

    _separate_coincident(coords)
    if _needs_relaxation(rings):
        coords = _relax(mol, coords)
    return coords


def _separate_coincident(coords: np.ndarray, min_dist: float = 1e-3) -> None:
    """Nudge exactly overlapping atoms apart so relaxation forces are defined.

    Constructive placement can drop a reflected ring vertex onto an existing
    atom; the offsets here are a deterministic function of atom index.
    """
    n = len(coords)
    golden = 2.399963229728653  # radians; spreads successive nudges apart
    for i in range(1, n):
        d = np.linalg.norm(coords[:i] - coords[i], axis=1)
        if np.min(d) < min_dist:
            angle = golden * i
            coords[i] += 0.31 * np.array([math.cos(angle), math.sin(angle)])


def _needs_relaxation(rings: list[list[int]]) -> bool:
    """True when two rings share an atom (fused, bridged, or spiro systems)."""
    seen: dict[int, int] = {}
    for ri, ring in enumerate(rings):
        for v in ring:
            if v in seen and seen[v] != ri:
                return True
            seen[v] = ri
    return False


def _relax(mol: MolGraph, coords: np.ndarray) -> np.ndarray:
    """Fixed-budget spring relaxation: bonds to unit length, others repelled."""
    pos = coords.copy()
    n = mol.n
    bonds = [(a, b) for a, b, _ in mol.bonds]
    step = 0.08
    for it in range(RELAX_ITERATIONS):
        force = np.zeros_like(pos)
        for a, b in bonds:
            d = pos[b] - pos[a]
            dist = np.linalg.norm(d)
            if dist < 1e-9:
                d, dist = np.array([1e-3, 0.0]), 1e-3
            f = (dist - 1.0) * d / dist
            force[a] += f
            force[b] -= f
        diff = pos[None, :, :] - pos[:, None, :]
        dist = np.maximum(np.linalg.norm(diff, axis=2) + np.eye(n), 0.05)
        rep = np.minimum(0.25 / (dist ** 2), 2.0)
        np.fill_diagonal(rep, 0.0)
        force -= (rep[:, :, None] * diff / dist[:, :, None]).sum(axis=1)
        pos += step * force
        step *= 0.995
    return pos


_HETERO_COLORS = {
    "N": "#1040c0", "O": "#c01010", "S": "#b08000", "F": "#10a010",
    "Cl": "#10a010", "Br": "#803030", "I": "#602080", "P": "#c06000",
}


def _bond_lines(p1, p2, order: str) -> list[tuple[np.ndarray, np.ndarray, bool]]:
    """Line segments for one bond: (start, end, dashed)."""
    d = p2 - p1
    norm = np.linalg.norm(d)
    off = (np.array([-d[1], d[0]]) / norm * 0.09) if norm > 1e-12 else np.array([0.0, 0.09])
    if order == DOUBLE:
        return [(p1 + off, p2 + off, False), (p1 - off, p2 - off, False)]
    if order == TRIPLE:
        return [(p1, p2, False), (p1 + 2 * off, p2 + 2 * off, False),
                (p1 - 2 * off, p2 - 2 * off, False)]
    if order == AROMATIC:
        inner1 = p1 + off + (p2 - p1) * 0.15
        inner2 = p2 + off - (p2 - p1) * 0.15
        return [(p1, p2, False), (inner1, inner2, True)]
    return [(p1, p2, False)]


def depict(mol: MolGraph, opts: DepictOptions | None = None) -> str:
    """Render a molecule to an SVG 1.1 document string."""
    opts = opts or DepictOptions()
    coords = layout_coordinates(mol)
    pts = coords * opts.scale
    pts[:, 1] = -pts[:, 1]  # SVG y grows downward
    mins = pts.min(axis=0) - opts.padding
    maxs = pts.max(axis=0) + opts.padding
    size = maxs - mins
    pts = pts - mins

    def fmt(x: float) -> str:
        return f"{x:.2f}"

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{fmt(size[0])}" height="{fmt(size[1])}" '
        f'viewBox="0 0 {fmt(size[0])} {fmt(size[1])}">',
        f'<rect width="{fmt(size[0])}" height="{fmt(size[1])}" fill="white"/>',
    ]
    for a, b, order in sorted(
        (min(a, b), max(a, b), order) for a, b, order in mol.bonds
    ):
        for p1, p2, dashed in _bond_lines(coords[a], coords[b], order):
            q1 = p1 * opts.scale
            q2 = p2 * opts.scale
            q1 = np.array([q1[0], -q1[1]]) - mins
            q2 = np.array([q2[0], -q2[1]]) - mins
            dash = ' stroke-dasharray="4,3"' if dashed else ""
            parts.append(
                f'<line x1="{fmt(q1[0])}" y1="{fmt(q1[1])}" '
                f'x2="{fmt(q2[0])}" y2="{fmt(q2[1])}" '
                f'stroke="black" stroke-width="1.5"{dash}/>'
            )
    for i, atom in enumerate(mol.atoms):
        label = atom.symbol
        if label == "C" and mol.n > 1 and atom.formal_charge == 0:
            continue
        if atom.formal_charge > 0:
            label += "+" if atom.formal_charge == 1 else f"+{atom.formal_charge}"
        elif atom.formal_charge < 0:
            label += "-" if atom.formal_charge == -1 else f"{atom.formal_charge}"
        color = _HETERO_COLORS.get(atom.symbol, "black")
        x, y = pts[i]
        parts.append(
            f'<circle cx="{fmt(x)}" cy="{fmt(y)}" r="{fmt(opts.font_size * 0.62)}" '
            f'fill="white"/>'
        )
        parts.append(
            f'<text x="{fmt(x)}" y="{fmt(y)}" font-family="sans-serif" '
            f'font-size="{fmt(opts.font_size)}" text-anchor="middle" '
            f'dominant-baseline="central" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_png(mol: MolGraph, opts: DepictOptions | None = None) -> bytes:
    """Rasterize the same layout to PNG bytes (for vision-API payloads)."""
    from PIL import Image, ImageDraw

    opts = opts or DepictOptions()
    coords = layout_coordinates(mol)
    pts = coords.copy()
    pts[:, 1] = -pts[:, 1]
    mins = pts.min(axis=0)
    maxs = pts.max(axis=0)
    span = float(max(maxs[0] - mins[0], maxs[1] - mins[1], 1e-6))
    margin = 30
    scale = (opts.image_size - 2 * margin) / span
    pts = (pts - mins) * scale + margin

    img = Image.new("RGB", (opts.image_size, opts.image_size), "white")
    draw = ImageDraw.Draw(img)
    unit = scale  # pixels per bond length

    for a, b, order in mol.bonds:
        p1 = coords[a] * np.array([1, -1])
        p2 = coords[b] * np.array([1, -1])
        for q1, q2, dashed in _bond_lines(p1, p2, order):
            r1 = (q1 - mins) * scale + margin
            r2 = (q2 - mins) * scale + margin
            if dashed:
                _dashed_line(draw, r1, r2)
            else:
                draw.line([tuple(r1), tuple(r2)], fill="black", width=2)
    for i, atom in enumerate(mol.atoms):
        if atom.symbol == "C" and mol.n > 1 and atom.formal_charge == 0:
            continue
        x, y = pts[i]
        r = max(7, int(unit * 0.22))
        draw.ellipse([x - r, y - r, x + r, y + r], fill="white")
        draw.text((x - 4, y - 6), atom.symbol, fill="black")

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _dashed_line(draw, p1: np.ndarray, p2: np.ndarray, dash: float = 5.0):
    d = p2 - p1
    length = float(np.linalg.norm(d))
    if length < 1e-9:
        return
    steps = max(1, int(length / dash))
    for k in range(0, steps, 2):
        a = p1 + d * (k / steps)
        b = p1 + d * (min(k + 1, steps) / steps)
        draw.line([tuple(a), tuple(b)], fill="black", width=1)
