"""File formats: instances, 17-digit CSV/JSON, self-contained SVG, run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from html import escape

import numpy as np

from .problem import GroupedProblem, ProblemError

REAL_FMT = ".17g"


def format_real(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, REAL_FMT)


def parse_real(text: str) -> float:
    """Float or exact fraction such as ``1/256``."""
    return float(Fraction(text.strip())) if "/" in text else float(text)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def _json_token(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return json.dumps(format_real(x))
        return format_real(x)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [json.dumps(str(k)) + ": " + _json_token(v, indent, level + 1) for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_json_token(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_json_token(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    """JSON with every real written to 17 significant digits; non-finite reals become strings."""
    return _json_token(obj, indent, 0) + "\n"


def write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(obj))


def load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{path}: invalid JSON ({exc})") from exc


def load_instance(path: str) -> GroupedProblem:
    return GroupedProblem.from_json_dict(load_json(path))


def save_instance(path: str, problem: GroupedProblem) -> None:
    write_json(path, problem.to_json_dict())


def instance_sha256(problem: GroupedProblem) -> str:
    return hashlib.sha256(dumps_json(problem.to_json_dict()).encode()).hexdigest()


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- manifests


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    params: dict
    instance_sha256: str | None
    version: str
    wall_time: float
    cwd: str
    outputs: list[dict] = field(default_factory=list)
    output_flags: dict = field(default_factory=dict)

    def add_output(self, path: str) -> None:
        self.outputs.append({"path": path, "sha256": file_sha256(path),
                             "byte_identical": not path.endswith(".svg")})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(**d)

    def save(self, path: str) -> None:
        write_json(path, self.to_dict())


def manifest_path(out: str) -> str:
    return out + ".manifest.json"


# ---------------------------------------------------------------- SVG

_SIZE = 420
_PAD = 40
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_doc(body: list[str], title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
            f'viewBox="0 0 {_SIZE} {_SIZE}">')
    return "\n".join([head, f"<title>{escape(title)}</title>",
                      f'<rect width="{_SIZE}" height="{_SIZE}" fill="white"/>', *body, "</svg>"]) + "\n"


def _scaler(xmax: float, ymax: float):
    span = _SIZE - 2 * _PAD
    xmax = xmax or 1.0
    ymax = ymax or 1.0

    def f(x, y):
        return _PAD + span * x / xmax, _SIZE - _PAD - span * y / ymax
    return f


def _poly(pts, f, color, closed=False, width=1.5) -> str:
    coords = " ".join(f"{a:.3f},{b:.3f}" for a, b in (f(x, y) for x, y in pts))
    tag = "polygon" if closed else "polyline"
    fill = color + '" fill-opacity="0.15' if closed else "none"
    return f'<{tag} points="{coords}" fill="{fill}" stroke="{color}" stroke-width="{width}"/>'


def _axes(f, xlabel, ylabel, xmax, ymax) -> list[str]:
    x0, y0 = f(0, 0)
    x1, _ = f(xmax, 0)
    _, y1 = f(0, ymax)
    return [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
            f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
            f'<text x="{(x0 + x1) / 2}" y="{y0 + 28}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="12" y="{(y0 + y1) / 2}" font-size="12" transform="rotate(-90 12 {(y0 + y1) / 2})" '
            f'text-anchor="middle">{escape(ylabel)}</text>']


def ips_svg(geoms: dict, points=None, title: str = "IPS") -> str:
    """Each group's zonotope as a filled polygon; optional marked points."""
    xmax = max(g.p0 for g in geoms.values())
    ymax = max(g.p1 for g in geoms.values())
    f = _scaler(xmax, ymax)
    body = _axes(f, "tnr", "tpr", xmax, ymax)
    for k, (gid, g) in enumerate(geoms.items()):
        color = _COLORS[k % len(_COLORS)]
        body.append(_poly(g.vertices, f, color, closed=True))
        body.append(_poly(g.upper, f, color, width=2.5))
        tx, ty = f(g.p0 * 0.02, g.p1 * (0.95 - 0.06 * k))
        body.append(f'<text x="{tx:.3f}" y="{ty:.3f}" font-size="12" fill="{color}">{escape(str(gid))}</text>')
    for x, y in points if points is not None else []:
        cx, cy = f(x, y)
        body.append(f'<circle cx="{cx:.3f}" cy="{cy:.3f}" r="3" fill="black"/>')
    return _svg_doc(body, title)


def curve_svg(xs, series: dict, xlabel: str, title: str) -> str:
    xs = np.asarray(xs, dtype=float)
    ymax = max(float(np.max(np.abs(v))) for v in series.values()) or 1.0
    xmax = float(xs.max()) or 1.0
    f = _scaler(xmax, ymax)
    body = _axes(f, xlabel, "value", xmax, ymax)
    for k, (name, ys) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        body.append(_poly(list(zip(xs, ys)), f, color))
        tx, ty = f(xmax * 0.65, ymax * (0.95 - 0.07 * k))
        body.append(f'<text x="{tx:.3f}" y="{ty:.3f}" font-size="12" fill="{color}">{escape(name)}</text>')
    return _svg_doc(body, title)


def ternary_svg(points: np.ndarray, labels: np.ndarray, title: str = "partition") -> str:
    """Barycentric grid coloured by allowed label; multi-label cells drawn black."""
    span = _SIZE - 2 * _PAD
    corners = np.array([[_PAD, _SIZE - _PAD], [_PAD + span, _SIZE - _PAD],
                        [_PAD + span / 2, _SIZE - _PAD - span * math.sqrt(3) / 2]])
    xy = points @ corners
    n_lab = labels.sum(axis=1)
    first = np.argmax(labels, axis=1)
    body = ['<polygon points="' + " ".join(f"{a:.3f},{b:.3f}" for a, b in corners)
            + '" fill="none" stroke="black"/>']
    for (x, y), k, lab in zip(xy, n_lab, first):
        color = "black" if k != 1 else _COLORS[lab % len(_COLORS)]
        r = 1.6 if k > 1 else 1.0
        body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{color}"/>')
    for k, (x, y) in enumerate(corners):
        body.append(f'<text x="{x:.1f}" y="{y + (16 if k < 2 else -6):.1f}" font-size="12" '
                    f'text-anchor="middle">y{k + 1}</text>')
    return _svg_doc(body, title)


def write_text(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def ensure_parent(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
