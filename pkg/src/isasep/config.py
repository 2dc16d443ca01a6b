"""Experiment configuration: a flat INI-style grammar with line-numbered
errors.

Grammar::

    # comment            (also ';' comments)
    [section]
    key = value          lists are comma-separated

Sections: ``[run]``, ``[source.N]`` (N = 1, 2, ...), ``[mixing]``,
``[ica]``, ``[grouping]``, ``[separate]``, ``[verify]``, ``[scan]``.
A rot90 source describes its base with ``base.``-prefixed keys.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ica import NONLINEARITIES, ICAConfig
from .sources import (
    IID_MARGINALS,
    ChiOfDim,
    Constant,
    Elliptical,
    ExponentialRadial,
    IidMarginal,
    LpSpherical,
    Rot90,
    SourceSpec,
    Spherical,
    UniformRadial,
    source_dim,
)

BLOCK_CHECKS = ("w_epi", "entropy_combination", "projection_invariance", "rot90_symmetry")
CHECKS = BLOCK_CHECKS + ("proposition_sum",)
CONTROLS = ("sheared", "uniform_square")
SOURCE_TYPES = ("spherical", "elliptical", "lp", "rot90", "iid")
RADIALS = ("chi", "constant", "uniform", "exponential")

_SECTION = re.compile(r"^\[\s*([A-Za-z0-9_.]+)\s*\]$")
_KEYS = {
    "run": {"n", "seed", "out"},
    "mixing": {"type"},
    "ica": {"nonlinearity", "max_iter", "tol", "restarts", "seed"},
    "grouping": {"strategy", "rescore", "k", "dims"},
    "separate": {"input"},
    "verify": {"checks", "directions", "include_canonical", "num_w", "controls", "k_sigma"},
    "scan": {"source", "resolution"},
}
_SOURCE_KEYS = {"type", "d", "radial", "c", "a", "b", "rate", "p", "mu", "lambda", "marginal"}


@dataclass(frozen=True)
class Entry:
    value: str
    line: int


@dataclass
class RawConfig:
    """Parsed but unvalidated sections: ``{section: {key: Entry}}``."""

    sections: dict[str, dict[str, Entry]]
    section_lines: dict[str, int]
    path: str | None = None

    def echo(self) -> list[tuple[str, str]]:
        """Flattened ``section.key`` pairs in file order."""
        return [(f"{s}.{k}", e.value) for s, keys in self.sections.items() for k, e in keys.items()]


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    seed: int
    sources: tuple
    mixing: str = "haar"
    ica: ICAConfig = ICAConfig()
    ica_seed_given: bool = False
    strategy: str = "exhaustive"
    rescore: str = "pairwise"
    k: int = 5
    dims: tuple | None = None
    input: str | None = None
    checks: tuple = ()
    directions: int = 50
    include_canonical: bool = True
    num_w: int = 100
    controls: tuple = ()
    k_sigma: float = 3.0
    scan_source: int = 1
    resolution: int = 64
    out: str | None = None
    raw: RawConfig | None = field(default=None, compare=False, repr=False)

    @property
    def block_dims(self) -> tuple[int, ...]:
        if self.dims is not None:
            return self.dims
        return tuple(source_dim(s) for s in self.sources)


def parse_text(text: str, path: str | None = None) -> RawConfig:
    sections: dict[str, dict[str, Entry]] = {}
    section_lines: dict[str, int] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = _SECTION.match(line.split("#")[0].strip()) if line[0] == "[" else None
        if m:
            current = m.group(1)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", lineno, path)
            if current not in _KEYS and not re.fullmatch(r"source\.\d+", current):
                raise ConfigError(f"unknown section [{current}]", lineno, path)
            sections[current] = {}
            section_lines[current] = lineno
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, path)
        if current is None:
            raise ConfigError("entry outside of any section", lineno, path)
        key = key.strip()
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r} in [{current}]", lineno, path)
        allowed = _KEYS.get(current)
        if allowed is None:
            bare = key[len("base."):] if key.startswith("base.") else key
            while bare.startswith("base."):
                bare = bare[len("base."):]
            ok = bare in _SOURCE_KEYS
        else:
            ok = key in allowed
        if not ok:
            raise ConfigError(f"unknown key {key!r} in [{current}]", lineno, path)
        sections[current][key] = Entry(value.split("#")[0].strip(), lineno)
    return RawConfig(sections, section_lines, path)


class _Reader:
    """Typed access to one section with line-numbered errors."""

    def __init__(self, raw: RawConfig, section: str, prefix: str = ""):
        self.raw = raw
        self.section = section
        self.prefix = prefix
        self.entries = raw.sections.get(section, {})

    def _entry(self, key):
        return self.entries.get(self.prefix + key)

    def has(self, key) -> bool:
        return self._entry(key) is not None

    def error(self, key, msg) -> ConfigError:
        e = self._entry(key)
        line = e.line if e is not None else self.raw.section_lines.get(self.section)
        return ConfigError(f"[{self.section}] {self.prefix}{key}: {msg}", line, self.raw.path)

    def text(self, key, default=None, choices=None):
        e = self._entry(key)
        if e is None:
            if default is None:
                raise self.error(key, "missing required key")
            return default
        if choices is not None and e.value not in choices:
            raise self.error(key, f"must be one of {', '.join(choices)}, got {e.value!r}")
        return e.value

    def integer(self, key, default=None, lo=None, hi=None):
        e = self._entry(key)
        if e is None:
            if default is None:
                raise self.error(key, "missing required key")
            return default
        try:
            v = int(e.value)
        except ValueError:
            raise self.error(key, f"expected an integer, got {e.value!r}") from None
        if lo is not None and v < lo:
            raise self.error(key, f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise self.error(key, f"must be <= {hi}, got {v}")
        return v

    def number(self, key, default=None):
        e = self._entry(key)
        if e is None:
            if default is None:
                raise self.error(key, "missing required key")
            return default
        try:
            return float(e.value)
        except ValueError:
            raise self.error(key, f"expected a number, got {e.value!r}") from None

    def flag(self, key, default):
        e = self._entry(key)
        if e is None:
            return default
        v = e.value.lower()
        if v in ("true", "yes", "1", "on"):
            return True
        if v in ("false", "no", "0", "off"):
            return False
        raise self.error(key, f"expected true/false, got {e.value!r}")

    def items(self, key, default=(), cast=str):
        e = self._entry(key)
        if e is None:
            return tuple(default)
        items = [s.strip() for s in e.value.split(",") if s.strip()]
        try:
            return tuple(cast(s) for s in items)
        except ValueError:
            raise self.error(key, f"bad list element in {e.value!r}") from None


def _radial(r: _Reader):
    kind = r.text("radial", "chi", RADIALS)
    try:
        if kind == "chi":
            return ChiOfDim()
        if kind == "constant":
            return Constant(r.number("c", 1.0))
        if kind == "uniform":
            return UniformRadial(r.number("a", 0.0), r.number("b", 1.0))
        return ExponentialRadial(r.number("rate", 1.0))
    except ValueError as exc:
        raise r.error("radial", str(exc)) from None


def _source(r: _Reader) -> SourceSpec:
    kind = r.text("type", choices=SOURCE_TYPES)
    try:
        if kind == "spherical":
            return Spherical(r.integer("d", lo=1), _radial(r))
        if kind == "lp":
            return LpSpherical(r.integer("d", lo=1), r.number("p"), _radial(r))
        if kind == "iid":
            return IidMarginal(r.integer("d", lo=1), r.text("marginal", "uniform", IID_MARGINALS))
        if kind == "elliptical":
            mu = r.items("mu", cast=float)
            lam = r.items("lambda", cast=float)
            if not mu:
                raise r.error("mu", "missing required key")
            if len(lam) != len(mu) ** 2:
                raise r.error("lambda", f"needs {len(mu) ** 2} row-major entries, got {len(lam)}")
            return Elliptical(mu, lam, _radial(r))
        return Rot90(_source(_Reader(r.raw, r.section, r.prefix + "base.")))
    except ConfigError:
        raise
    except ValueError as exc:
        raise r.error("type", str(exc)) from None


def load_config(raw: RawConfig) -> ExperimentConfig:
    """Validate a parsed configuration."""
    run = _Reader(raw, "run")
    n = run.integer("n", lo=1)
    seed = run.integer("seed", 0, lo=0, hi=(1 << 64) - 1)

    names = sorted((s for s in raw.sections if s.startswith("source.")), key=lambda s: int(s.split(".")[1]))
    if not names:
        raise ConfigError("no [source.N] section", None, raw.path)
    for want, name in enumerate(names, start=1):
        if int(name.split(".")[1]) != want:
            raise ConfigError(f"source sections must be numbered 1..M; found [{name}]", raw.section_lines[name], raw.path)
    sources = tuple(_source(_Reader(raw, name)) for name in names)
    D = sum(source_dim(s) for s in sources)
    if n < 10 * D:
        raise run.error("n", f"must be >= 10 * D = {10 * D}")

    mixing = _Reader(raw, "mixing").text("type", "haar", ("haar", "identity"))

    ica_r = _Reader(raw, "ica")
    try:
        ica = ICAConfig(
            nonlinearity=ica_r.text("nonlinearity", "tanh", NONLINEARITIES),
            max_iter=ica_r.integer("max_iter", 1000, lo=1),
            tol=ica_r.number("tol", 1e-8),
            restarts=ica_r.integer("restarts", 5, lo=0),
            seed=ica_r.integer("seed", 0, lo=0, hi=(1 << 64) - 1),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[ica] {exc}", raw.section_lines.get("ica"), raw.path) from None

    g = _Reader(raw, "grouping")
    strategy = g.text("strategy", "exhaustive", ("exhaustive", "greedy"))
    rescore = g.text("rescore", "pairwise", ("pairwise", "joint"))
    k = g.integer("k", 5, lo=1, hi=20)
    dims = g.items("dims", cast=int) or None
    if dims is not None and (any(d < 1 for d in dims) or sum(dims) != D):
        raise g.error("dims", f"block sizes must be positive and sum to D={D}")

    sep = _Reader(raw, "separate")
    inp = sep.text("input", "") or None

    v = _Reader(raw, "verify")
    checks = v.items("checks")
    for c in checks:
        if c not in CHECKS:
            raise v.error("checks", f"unknown check {c!r}; known: {', '.join(CHECKS)}")
    controls = v.items("controls")
    for c in controls:
        if c not in CONTROLS:
            raise v.error("controls", f"unknown control {c!r}; known: {', '.join(CONTROLS)}")

    sc = _Reader(raw, "scan")
    scan_source = sc.integer("source", 1, lo=1, hi=len(sources))
    resolution = sc.integer("resolution", 64, lo=8)

    return ExperimentConfig(
        n=n,
        seed=seed,
        sources=sources,
        mixing=mixing,
        ica=ica,
        ica_seed_given=ica_r.has("seed"),
        strategy=strategy,
        rescore=rescore,
        k=k,
        dims=dims,
        input=inp,
        checks=checks,
        directions=v.integer("directions", 50, lo=1),
        include_canonical=v.flag("include_canonical", True),
        num_w=v.integer("num_w", 100, lo=0),
        controls=controls,
        k_sigma=v.number("k_sigma", 3.0),
        scan_source=scan_source,
        resolution=resolution,
        out=run.text("out", "") or None,
        raw=raw,
    )


def read_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(path)) from None
    return load_config(parse_text(text, str(path)))


def config_from_text(text: str) -> ExperimentConfig:
    return load_config(parse_text(text))
