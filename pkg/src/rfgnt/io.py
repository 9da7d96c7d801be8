"""Experiment configuration and artifact files.

Config files are flat ``key = value`` lines; ``#`` starts a comment and
``none`` stands for an unset optional value.

Field files (``*.txt``) hold the interior grid as a whitespace-separated
matrix, one grid row per line, top line = largest ``y``; images (``*.pgm``)
are binary 8-bit PGM in the same orientation, linearly scaled from
``[min, max]`` to ``[0, 255]`` with the two constants written to
``<image>.scale.txt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, get_type_hints

import numpy as np

METHODS = ("gnt", "rfgnt", "early-stop", "lcurve", "gat-demo")


@dataclass
class ExperimentConfig:
    method: str = "rfgnt"
    # grid and physics
    interior_n: int = 48
    buffer_n: int = 4
    pre_tail_n: int = 4
    tail_n: int = 16
    tail_angle: float = math.pi / 6
    half_width: float = 5.0
    n_angles: int = 8
    k0: float = 1.0
    phantom_radius: float = 2.5
    # data
    noise_level: float = 0.1
    sigma: Optional[float] = None
    seed: int = 0
    eta: float = 1.0
    init: str = "prior"
    # drivers
    alpha0: float = 0.0
    alpha1: float = 1.0
    gnt_alpha0: float = 1.0
    max_outer: int = 30
    lcurve_alpha_min: float = 0.0
    lcurve_alpha_max: float = 0.5
    lcurve_points: int = 26
    # Newton-CG
    fd_scheme: str = "forward"
    cg_step_floor: float = 1e-3
    stagnation_tol: float = 1e-3
    max_newton: int = 50
    max_backtracks: int = 30
    h_fd: Optional[float] = None
    # linear solves
    solver: str = "direct"
    workers: int = 1
    # gat-demo
    gat_n: int = 32
    gat_blur_width: float = 0.05
    gat_alpha0: float = 1.0
    output_dir: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.init not in ("prior", "exact"):
            raise ValueError("init must be 'prior' or 'exact'")
        if self.fd_scheme not in ("forward", "central", "backward"):
            raise ValueError(f"unknown fd_scheme {self.fd_scheme!r}")


class ConfigError(ValueError):
    pass


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text: str, typ):
    text = text.strip()
    optional = getattr(typ, "__args__", None)
    if optional:
        if text.lower() == "none":
            return None
        typ = next(t for t in optional if t is not type(None))
    if typ is bool:
        return text.lower() in ("1", "true", "yes", "on")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text


def config_from_mapping(items: dict) -> ExperimentConfig:
    hints = get_type_hints(ExperimentConfig)
    kwargs = {}
    for key, raw in items.items():
        if key not in hints:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            kwargs[key] = _parse_value(raw, hints[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def parse_config_text(text: str) -> ExperimentConfig:
    items = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        items[key.strip()] = value.strip()
    return config_from_mapping(items)


def load_config(path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text())


def echo_config(config: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_format_value(getattr(config, f.name))}\n" for f in fields(config))


def field_image(values, n: int) -> np.ndarray:
    """Interior vector (row-major, y ascending) as a matrix with the top row at max y."""
    return np.asarray(values, dtype=float).reshape(n, n)[::-1]


def write_field(path, values, n: int):
    np.savetxt(path, field_image(values, n), fmt="%.17g")


def read_field(path) -> np.ndarray:
    m = np.loadtxt(path, ndmin=2)
    return m[::-1].ravel()


def write_pgm(path, values, n: int):
    """8-bit binary PGM plus a ``.scale.txt`` sidecar holding min and max."""
    img = field_image(values, n)
    lo, hi = float(img.min()), float(img.max())
    if hi > lo:
        pix = np.rint((img - lo) / (hi - lo) * 255.0)
    else:
        pix = np.zeros_like(img)
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
        fh.write(pix.astype(np.uint8).tobytes())
    Path(str(path) + ".scale.txt").write_text(f"min = {lo!r}\nmax = {hi!r}\n")


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def format_kv(items: dict) -> str:
    """Single-line ``key=value`` record (floats with 17 significant digits)."""
    out = []
    for key, v in items.items():
        if isinstance(v, float):
            v = format(v, ".17g")
        out.append(f"{key}={v}")
    return " ".join(out) + "\n"


def parse_kv(text: str) -> dict:
    line = text.strip()
    if not line:
        raise ValueError("empty ledger record")
    out = {}
    for tok in line.split():
        if "=" not in tok:
            raise ValueError(f"malformed token {tok!r}")
        key, value = tok.split("=", 1)
        out[key] = value
    return out
