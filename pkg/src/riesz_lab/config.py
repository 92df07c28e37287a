"""Experiment configuration: an INI-style text file (or JSON) describing one run.

Example::

    [run]
    seed = 7
    output_dir = out/sphere

    [set]
    kind = sphere          ; sphere | circle | box | pointcloud | cantor | union
    center = 0, 0, 0
    radius = 1
    resolution = 2000

    [kernel]
    alpha = 1.0
    ; truncation = 50

    [field]
    expression = 0.5*norm()^2   ; or: file = grid.txt

    [measure]
    kind = reference       ; reference | file
    normalize = false

    [fekete]
    n = 4
    restarts = 6

Each subcommand reads its own section (``[fekete]``, ``[zn]``, ...).  A
union set lists component sections: ``components = a, b`` with sections
``[set.a]`` and ``[set.b]``.  The JSON form is the same structure as a
nested object, e.g. ``{"run": {"seed": 7}, "set": {"kind": "sphere"}}``.
"""

from __future__ import annotations

import configparser
import json
import os
from dataclasses import dataclass, field

import numpy as np

from ._util import sha256_bytes
from .field import ExpressionField, GridField
from .geometry import Box, Circle, PointCloud, Sphere, Union, cantor_set
from .potential import DiscreteMeasure, RieszKernel

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "load_points"]


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def load_points(path, d: int | None = None, weighted: bool | None = None):
    """Read a whitespace/comma separated point file; '#' starts a comment.

    Returns (points, extra) where ``extra`` is the trailing column (weights
    or field values) when the file has d + 1 columns, else None.
    """
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(t) for t in line.replace(",", " ").split()])
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ConfigError(f"{path}: ragged rows")
    arr = np.array(rows)
    cols = arr.shape[1]
    if d is None:
        d = cols - 1 if weighted else cols
    if cols == d:
        if weighted:
            raise ConfigError(f"{path}: expected a value column")
        return arr, None
    if cols == d + 1:
        return arr[:, :d], arr[:, d]
    raise ConfigError(f"{path}: expected {d} or {d + 1} columns, found {cols}")


def _vec(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(",", " ").split()]


def _num(v, kind=float):
    try:
        return kind(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"not a number: {v!r}") from exc


@dataclass
class ExperimentConfig:
    sections: dict
    source: bytes
    base_dir: str = "."
    seed_override: int | None = None
    out_override: str | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------ basics
    @property
    def content_hash(self) -> str:
        return sha256_bytes(self.source)

    @property
    def seed(self) -> int:
        if self.seed_override is not None:
            return int(self.seed_override)
        run = self.sections.get("run", {})
        if "seed" not in run:
            raise ConfigError("no seed: set [run] seed or pass --seed")
        return _num(run["seed"], int)

    @property
    def output_dir(self) -> str:
        env = os.environ.get("RIESZ_LAB_OUT")
        if env:
            return env
        if self.out_override:
            return self.out_override
        return self._path(self.sections.get("run", {}).get("output_dir", "riesz_out"))

    def task(self, name: str) -> dict:
        return dict(self.sections.get(name, {}))

    def _path(self, p) -> str:
        return p if os.path.isabs(p) else os.path.join(self.base_dir, p)

    # ------------------------------------------------------------ builders
    def _build_set(self, spec: dict):
        kind = spec.get("kind", "sphere").lower()
        if kind == "sphere":
            c = _vec(spec.get("center", "0 0 0"))
            return Sphere(tuple(c), _num(spec.get("radius", 1.0)))
        if kind == "circle":
            c = _vec(spec.get("center", "0 0 0"))
            plane = tuple(int(x) for x in _vec(spec.get("plane", "0 1")))
            return Circle(tuple(c), _num(spec.get("radius", 1.0)), plane)
        if kind == "box":
            return Box(tuple(_vec(spec["lower"])), tuple(_vec(spec["upper"])))
        if kind == "pointcloud":
            path = self._path(spec["file"])
            if not os.path.exists(path):
                raise ConfigError(f"point file not found: {path}")
            pts, w = load_points(path, int(spec["d"]) if "d" in spec else None)
            return PointCloud(pts, weights=w)
        if kind == "cantor":
            return PointCloud(cantor_set(_num(spec.get("depth", 6), int), _num(spec.get("d", 3), int)))
        if kind == "union":
            names = [s.strip() for s in str(spec["components"]).split(",") if s.strip()]
            comps = []
            for nm in names:
                sub = self.sections.get(f"set.{nm}")
                if sub is None:
                    raise ConfigError(f"missing section [set.{nm}]")
                comps.append(self._build_set(sub))
            return Union(tuple(comps))
        raise ConfigError(f"unknown set kind {kind!r}")

    def build_set(self):
        if "set" not in self._cache:
            self._cache["set"] = self._build_set(self.sections.get("set", {"kind": "sphere"}))
        return self._cache["set"]

    @property
    def resolution(self) -> int:
        return _num(self.sections.get("set", {}).get("resolution", 1000), int)

    def build_mesh(self):
        if "mesh" not in self._cache:
            self._cache["mesh"] = self.build_set().mesh(self.resolution)
        return self._cache["mesh"]

    def build_kernel(self) -> RieszKernel:
        spec = self.sections.get("kernel", {})
        if "alpha" not in spec:
            raise ConfigError("[kernel] alpha is required")
        d = self.build_set().ambient_dim
        trunc = spec.get("truncation")
        try:
            return RieszKernel(_num(spec["alpha"]), d, None if trunc in (None, "", "none") else _num(trunc))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_field(self):
        spec = self.sections.get("field", {})
        d = self.build_set().ambient_dim
        if "file" in spec:
            path = self._path(spec["file"])
            if not os.path.exists(path):
                raise ConfigError(f"field grid file not found: {path}")
            pts, vals = load_points(path, d, weighted=True)
            return GridField(pts, vals)
        expr = spec.get("expression", "0")
        f = ExpressionField(str(expr), d)
        vals = f(self.build_mesh().points)
        if not np.all(np.isfinite(vals)):
            raise ConfigError("field expression is not finite on the mesh")
        return f

    def build_measure(self) -> DiscreteMeasure:
        spec = self.sections.get("measure", {})
        kind = spec.get("kind", "reference")
        mesh = self.build_mesh()
        if kind == "reference":
            mu = DiscreteMeasure.from_mesh(mesh)
        elif kind == "file":
            path = self._path(spec["file"])
            if not os.path.exists(path):
                raise ConfigError(f"measure file not found: {path}")
            pts, w = load_points(path, self.build_set().ambient_dim)
            mu = DiscreteMeasure(pts, np.ones(len(pts)) if w is None else w)
        else:
            raise ConfigError(f"unknown measure kind {kind!r}")
        if str(spec.get("normalize", "false")).lower() in ("1", "true", "yes"):
            mu = mu.normalized()
        return mu

    def validate(self) -> "ExperimentConfig":
        self.seed
        self.build_kernel()
        self.build_field()
        return self


def _from_ini(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from exc
    return {s: dict(cp.items(s)) for s in cp.sections()}


def parse_config(text: str | bytes, base_dir: str = ".", fmt: str | None = None) -> ExperimentConfig:
    raw = text.encode() if isinstance(text, str) else text
    body = raw.decode("utf-8")
    if fmt == "json" or (fmt is None and body.lstrip().startswith("{")):
        try:
            data = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config JSON: {exc}") from exc
        sections = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    else:
        sections = _from_ini(body)
    return ExperimentConfig(sections, raw, base_dir)


def load_config(path, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    cfg = parse_config(raw, os.path.dirname(os.path.abspath(path)), "json" if str(path).endswith(".json") else None)
    cfg.seed_override = seed
    cfg.out_override = out
    return cfg
