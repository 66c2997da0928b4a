"""End-to-end matching run: load, initialize, refine, write artifacts and a manifest."""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ParseError
from .io import atomic_write_text, load_shape, read_correspondence, read_pairs, write_correspondence
from .lmd import AnchorSet, lmd_field
from .refine import GDS_MODE, DirConfig, descriptor_init, dir_gds, dir_spectral, prune_final
from .spectral import cached_embedding

logger = logging.getLogger(__name__)


def _parse_value(name, raw, default):
    raw = raw.strip()
    if name == "lmd_thresholds":
        try:
            return tuple(float(x) for x in raw.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"{name}: expected a list of numbers, got {raw!r}") from None
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {raw!r}") from None
    return raw


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys are DirConfig field names."""
    values = {}
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ParseError("config file not found", path) from None
    known = set(DirConfig.keys())
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else (":" if ":" in line else None)
        if sep is None:
            raise ParseError(f"expected 'key = value', got {line!r}", path, no)
        key, raw = (s.strip() for s in line.split(sep, 1))
        if key not in known:
            raise ParseError(f"unknown config key {key!r}", path, no)
        values[key] = raw
    return values


def make_config(file_values=None, **overrides):
    """DirConfig from raw file values, with non-None ``overrides`` taking precedence."""
    defaults = DirConfig()
    kwargs = {}
    for f in fields(DirConfig):
        if file_values and f.name in file_values:
            kwargs[f.name] = _parse_value(f.name, file_values[f.name], getattr(defaults, f.name))
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    return DirConfig(**kwargs)


def config_text(cfg):
    lines = []
    for key, value in asdict(cfg).items():
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines)


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: str = ""
    inputs: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    version: str = __version__

    def add_input(self, path):
        self.inputs[str(path)] = file_sha256(path)

    def write(self, out_dir):
        out_dir = Path(out_dir)
        missing = [p for p in self.outputs if not (out_dir / p).exists()]
        if missing:
            raise RuntimeError(f"manifest lists missing outputs: {missing}")
        lines = [f"command: {self.command}", f"version: {self.version}", "", "[config]"]
        lines += self.config.splitlines()
        lines += ["", "[inputs]"] + [f"{p} sha256={h}" for p, h in self.inputs.items()]
        lines += ["", "[stages]"] + [f"{s} {t:.3f}s" for s, t in self.stages.items()]
        lines += ["", "[outputs]"] + list(self.outputs)
        atomic_write_text(out_dir / "manifest.txt", "\n".join(lines) + "\n")


class _Stage:
    def __init__(self, manifest, name):
        self.manifest, self.name = manifest, name

    def __enter__(self):
        self.start = time.perf_counter()

    def __exit__(self, *exc):
        self.manifest.stages[self.name] = time.perf_counter() - self.start


@dataclass
class MatchResult:
    correspondence: np.ndarray
    trace: object
    lmd: object
    manifest: RunManifest


def run_pipeline(src, dst, cfg=None, out_dir="out", landmarks=None, init_map=None, cache_dir=None):
    """Match ``src`` to ``dst`` and write all artifacts under ``out_dir``.

    Writes ``correspondence.txt`` (one 0-based target per source vertex,
    -1 when unmatched), ``trace.csv``, ``fmaps/iter_XX.csv`` (spectral
    mode), ``lmd.csv`` for the final map and ``manifest.txt``.
    """
    cfg = cfg or DirConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest("match", config_text(cfg))

    with _Stage(manifest, "load"):
        shape1 = load_shape(src, k_local=cfg.k_local)
        shape2 = load_shape(dst, k_local=cfg.k_local)
        manifest.add_input(src)
        manifest.add_input(dst)

    with _Stage(manifest, "init"):
        if cfg.init == "landmarks":
            if landmarks is None:
                raise ConfigError("init=landmarks needs a landmark file")
            pairs = read_pairs(landmarks)
            if pairs[:, 0].max() >= shape1.n or pairs[:, 1].max() >= shape2.n or pairs.min() < 0:
                raise ParseError("landmark index out of range", landmarks)
            manifest.add_input(landmarks)
            init = AnchorSet.from_pairs(pairs)
        elif cfg.init == "file":
            if init_map is None:
                raise ConfigError("init=file needs an initial correspondence file")
            init = read_correspondence(init_map, n=shape1.n, n_target=shape2.n)
            manifest.add_input(init_map)
        else:
            init = descriptor_init(shape1, shape2, cfg.shot_radius)

    if cfg.mode == GDS_MODE:
        with _Stage(manifest, "refine"):
            T, trace = dir_gds(shape1, shape2, init, cfg)
    else:
        K = min(cfg.K, shape1.n - 1, shape2.n - 1)
        cache = Path(cache_dir) if cache_dir is not None else out / "cache"
        with _Stage(manifest, "eigs"):
            emb1 = cached_embedding(shape1, K, cache)
            emb2 = cached_embedding(shape2, K, cache)
        with _Stage(manifest, "refine"):
            T, trace = dir_spectral(shape1, shape2, emb1, emb2, init, cfg)

    with _Stage(manifest, "lmd"):
        if cfg.prune:
            T, lmd = prune_final(shape1, shape2, T, cfg)
        else:
            lmd = lmd_field(shape1, shape2, T, cfg.ring_depth, cfg.lmd_cap)

    with _Stage(manifest, "write"):
        write_correspondence(out / "correspondence.txt", T)
        trace.to_csv(out / "trace.csv")
        lmd.to_csv(out / "lmd.csv")
        outputs = ["correspondence.txt", "trace.csv", "lmd.csv"]
        if cfg.mode != GDS_MODE:
            (out / "fmaps").mkdir(exist_ok=True)
            for r in trace.records:
                name = f"fmaps/iter_{r.iteration:02d}.csv"
                r.fmap.to_csv(out / name)
                outputs.append(name)
    manifest.outputs = outputs
    manifest.write(out)
    return MatchResult(T, trace, lmd, manifest)
