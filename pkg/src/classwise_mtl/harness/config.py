"""Experiment configuration files.

The format is YAML. Every validation error names the file, line and column
of the offending node and its key path, e.g.::

    exp.yaml:7:11: methods[1].mode: unknown mode 'arbitre'

A minimal file::

    seed: 0
    output_dir: runs/demo
    dataset:
      synthetic: {n_train: 3200, n_val: 800}
    train:
      epochs: 30
      alpha: 0.01
    methods:
      - single_main
      - uniform_sum
      - {name: arbiter, mode: arbiter}
      - {name: grid, mode: grid_oracle, levels: [0, 0.5, 1]}
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..synthlab import TransferSpec
from ..trainer import MODES, TrainConfig

GRID_MODE = "grid_oracle"
TOP_KEYS = {"seed", "output_dir", "workers", "dataset", "train", "methods", "diagnostic", "bench"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
SPEC_KEYS = {f.name for f in fields(TransferSpec)}
DIAGNOSTIC_KEYS = {"single", "multi", "arbiter"}
BENCH_KEYS = {"repeats", "epochs", "skip_batches"}


class ConfigError(ValueError):
    pass


@dataclass
class MethodSpec:
    name: str
    mode: str
    overrides: dict = field(default_factory=dict)
    levels: tuple = (0.0, 0.5, 1.0)

    def train_config(self, base, class_weights=None):
        # grid points run as fixed per-class weights; default probe is all ones
        if self.mode == GRID_MODE:
            return replace(base, **self.overrides, mode="fixed_classwise",
                           class_weights=tuple(class_weights) if class_weights is not None else (1.0,))
        cfg = replace(base, mode=self.mode, **self.overrides)
        cfg.validate()
        return cfg


@dataclass
class ExperimentConfig:
    methods: list
    train: TrainConfig = field(default_factory=TrainConfig)
    spec: TransferSpec = None
    dataset_path: str = None
    output_dir: str = "runs/experiment"
    seed: int = 0
    workers: int = 1
    diagnostic: dict = field(default_factory=lambda: {"single": "single_main", "multi": "uniform_sum",
                                                      "arbiter": "arbiter"})
    bench: dict = field(default_factory=lambda: {"repeats": 5, "epochs": 2, "skip_batches": 20})

    def method(self, name):
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


class _Located:
    """Walks a composed YAML node tree next to the constructed data."""

    def __init__(self, source):
        self.source = source
        self.marks = {}

    def index(self, node, path=()):
        self.marks[path] = node.start_mark
        if isinstance(node, yaml.MappingNode):
            seen = set()
            for key_node, value_node in node.value:
                key = key_node.value
                if key in seen:
                    self.fail(path + (key,), f"duplicate key {key!r}", key_node.start_mark)
                seen.add(key)
                self.marks[path + (key, "__key__")] = key_node.start_mark
                self.index(value_node, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for i, item in enumerate(node.value):
                self.index(item, path + (i,))

    def fail(self, path, message, mark=None):
        mark = mark or self.marks.get(path) or self.marks.get(path[:-1]) or self.marks.get(())
        where = f"{self.source}:{mark.line + 1}:{mark.column + 1}" if mark else self.source
        dotted = "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else p)
                         for i, p in enumerate(p for p in path if p != "__key__"))
        raise ConfigError(f"{where}: {dotted or '<root>'}: {message}")

    def check_keys(self, data, allowed, path):
        if not isinstance(data, dict):
            self.fail(path, f"expected a mapping, got {type(data).__name__}")
        for key in data:
            if key not in allowed:
                self.fail(path + (key, "__key__"), f"unknown key {key!r}; allowed: {sorted(allowed)}")


def load_config(source, overrides=None):
    """Parse and validate a config file path or YAML text.

    ``overrides`` (e.g. from CLI flags) may set ``seed``, ``output_dir``
    and ``workers`` after validation.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        name, text = str(source), Path(source).read_text(encoding="utf-8")
    else:
        name, text = "<config>", source
    loc = _Located(name)
    loader = yaml.SafeLoader(text)
    try:
        node = loader.get_single_node()
        data = loader.construct_document(node) if node is not None else {}
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError(f"{name}:{mark.line + 1}:{mark.column + 1}: {exc.problem}") from exc
    finally:
        loader.dispose()
    if node is not None:
        loc.index(node)
    return _build(data or {}, loc, overrides or {})


def _build(data, loc, overrides):
    loc.check_keys(data, TOP_KEYS, ())
    seed = overrides.get("seed", data.get("seed", 0))
    if not isinstance(seed, int):
        loc.fail(("seed",), "seed must be an integer")

    train_raw = data.get("train", {}) or {}
    loc.check_keys(train_raw, TRAIN_KEYS, ("train",))
    forced = "seed" in overrides
    try:
        base = TrainConfig(**{**train_raw, "seed": seed if forced else train_raw.get("seed", seed)})
        base.validate()
    except (TypeError, ValueError) as exc:
        loc.fail(("train",), str(exc))

    spec, path = None, None
    ds = data.get("dataset", {"synthetic": {}}) or {"synthetic": {}}
    loc.check_keys(ds, {"synthetic", "path"}, ("dataset",))
    if ("synthetic" in ds) == ("path" in ds):
        loc.fail(("dataset",), "give exactly one of 'synthetic' or 'path'")
    if "path" in ds:
        path = ds["path"]
        if not isinstance(path, str):
            loc.fail(("dataset", "path"), "path must be a string")
    else:
        raw = ds["synthetic"] or {}
        loc.check_keys(raw, SPEC_KEYS, ("dataset", "synthetic"))
        try:
            spec = TransferSpec(**{**raw, "seed": seed if forced else raw.get("seed", seed)})
            spec.validate()
        except (TypeError, ValueError) as exc:
            loc.fail(("dataset", "synthetic"), str(exc))

    methods_raw = data.get("methods")
    if not isinstance(methods_raw, list) or not methods_raw:
        loc.fail(("methods",), "methods must be a non-empty list")
    methods = []
    for i, entry in enumerate(methods_raw):
        methods.append(_method(entry, loc, ("methods", i), base))
    names = [m.name for m in methods]
    for i, n in enumerate(names):
        if names.index(n) != i:
            loc.fail(("methods", i), f"duplicate method name {n!r}")

    diagnostic = {"single": "single_main", "multi": "uniform_sum", "arbiter": "arbiter"}
    if "diagnostic" in data:
        loc.check_keys(data["diagnostic"], DIAGNOSTIC_KEYS, ("diagnostic",))
        diagnostic.update(data["diagnostic"])
    bench = {"repeats": 5, "epochs": 2, "skip_batches": 20}
    if "bench" in data:
        loc.check_keys(data["bench"], BENCH_KEYS, ("bench",))
        for key, value in data["bench"].items():
            if not isinstance(value, int) or value < (1 if key != "skip_batches" else 0):
                loc.fail(("bench", key), f"{key} must be a positive integer")
        bench.update(data["bench"])

    workers = overrides.get("workers", data.get("workers", 1))
    if not isinstance(workers, int) or workers < 1:
        loc.fail(("workers",), "workers must be a positive integer")
    output_dir = overrides.get("output_dir", data.get("output_dir", "runs/experiment"))
    if not isinstance(output_dir, str):
        loc.fail(("output_dir",), "output_dir must be a string")
    return ExperimentConfig(methods=methods, train=base, spec=spec, dataset_path=path, output_dir=output_dir,
                            seed=seed, workers=workers, diagnostic=diagnostic, bench=bench)


def _method(entry, loc, path, base):
    if isinstance(entry, str):
        entry = {"name": entry, "mode": entry}
    if not isinstance(entry, dict):
        loc.fail(path, "a method is a mode name or a mapping with 'name' and 'mode'")
    mode = entry.get("mode", entry.get("name"))
    if mode not in MODES and mode != GRID_MODE:
        loc.fail(path + ("mode",) if "mode" in entry else path, f"unknown mode {mode!r}; expected one of "
                 f"{list(MODES) + [GRID_MODE]}")
    name = entry.get("name", mode)
    if not isinstance(name, str):
        loc.fail(path + ("name",), "name must be a string")
    allowed = {"name", "mode"} | TRAIN_KEYS - {"mode"}
    if mode == GRID_MODE:
        allowed = allowed | {"levels"}
    loc.check_keys(entry, allowed, path)
    overrides = {k: v for k, v in entry.items() if k not in ("name", "mode", "levels")}
    spec = MethodSpec(name, mode, overrides)
    if mode == GRID_MODE:
        levels = entry.get("levels", [0.0, 0.5, 1.0])
        if not isinstance(levels, list) or not levels or not all(isinstance(v, (int, float)) and v >= 0
                                                               for v in levels):
            loc.fail(path + ("levels",), "levels must be a non-empty list of non-negative numbers")
        spec.levels = tuple(float(v) for v in levels)
    try:
        spec.train_config(base)
    except (TypeError, ValueError) as exc:
        loc.fail(path, str(exc))
    return spec


DEFAULT_EXPERIMENT = """\
seed: 0
output_dir: runs/default
dataset:
  synthetic: {}
train:
  epochs: 30
  warmup_epochs: 10
methods:
  - single_main
  - single_aux
  - uniform_sum
  - {name: fixed_weighted, mode: fixed_weighted, w_t1: 1.0, w_t2: 0.5}
  - arbiter
  - {name: grid_oracle, mode: grid_oracle, levels: [0, 0.5, 1]}
diagnostic: {single: single_main, multi: uniform_sum, arbiter: arbiter}
"""


def default_config(overrides=None):
    return load_config(DEFAULT_EXPERIMENT, overrides)
