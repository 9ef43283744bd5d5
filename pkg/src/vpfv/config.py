"""Run configuration: flat sectioned key=value text, round-trip exact.

Grammar (INI dialect via :mod:`configparser`):

* ``[domain]``     — ``d``, ``v``, ``N`` (comma list, one per physical
  dimension); optional ``x_lo`` / ``x_hi`` comma lists (default: the
  problem builder's box).
* ``[species.<name>]`` — ``Nv`` (comma list, one per velocity dimension);
  optional ``q``, ``m`` (informational overrides must match the problem),
  ``v_lo`` / ``v_hi`` comma lists or ``alpha`` (thermal-box half-width in
  thermal speeds).  Order of sections fixes species order.
* ``[problem]``    — ``tag`` plus any parameter the problem accepts;
  ``none`` selects the builder default for nullable parameters.
* ``[time]``       — ``t_end``; exactly one of ``cfl_fraction`` or ``dt``.
* ``[partition]``  — optional ``n`` (per-species comma lists separated by
  ``;``), ``ranks``, ``species_per_rank``, ``deterministic``, ``strategy``.
* ``[output]``     — ``directory``, ``cadence`` (steps between diagnostics
  rows, default 10), ``snapshots`` (true/false).

``parse_config(serialize_config(cfg))`` equals ``cfg`` exactly.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """A configuration problem, named by section and field."""


def _scalar(text):
    s = text.strip()
    if s.lower() == "none":
        return None
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _render(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _num_list(section, key, text, kind):
    try:
        return tuple(kind(part.strip()) for part in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


@dataclass(frozen=True)
class SpeciesSection:
    name: str
    Nv: tuple
    q: float = None
    m: float = None
    v_lo: tuple = None
    v_hi: tuple = None
    alpha: float = None


@dataclass(frozen=True)
class RunConfig:
    d: int
    v: int
    N: tuple
    species: tuple
    problem: str
    problem_params: dict = field(default_factory=dict)
    t_end: float = 10.0
    cfl_fraction: float = None
    dt: float = None
    x_lo: tuple = None
    x_hi: tuple = None
    partition_n: tuple = None
    ranks: int = None
    species_per_rank: int = 1
    deterministic: bool = True
    strategy: str = "vp"
    output_dir: str = "out"
    cadence: int = 10
    snapshots: bool = False

    def __post_init__(self):
        if len(self.N) != self.d:
            raise ConfigError(f"[domain] N: expected {self.d} entries, got {len(self.N)}")
        for sp in self.species:
            if len(sp.Nv) != self.v:
                raise ConfigError(
                    f"[species.{sp.name}] Nv: expected {self.v} entries, got {len(sp.Nv)}"
                )
        if (self.cfl_fraction is None) == (self.dt is None):
            raise ConfigError("[time]: exactly one of cfl_fraction or dt is required")
        if self.partition_n is not None and len(self.partition_n) != len(self.species):
            raise ConfigError(
                "[partition] n: one comma list per species, separated by ';'"
            )


def parse_config(text):
    """Parse configuration text into a :class:`RunConfig`."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # problem parameters are case-sensitive (v_T2, ...)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if not cp.sections():
        raise ConfigError("empty configuration: no sections found")

    def need(section, key, kind=str):
        if not cp.has_option(section, key):
            raise ConfigError(f"[{section}] {key}: missing required field")
        raw = cp.get(section, key)
        try:
            return kind(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None

    for required in ("domain", "problem", "time"):
        if not cp.has_section(required):
            raise ConfigError(f"missing required section [{required}]")

    d = need("domain", "d", int)
    v = need("domain", "v", int)
    N = _num_list("domain", "N", need("domain", "N"), int)
    x_lo = x_hi = None
    if cp.has_option("domain", "x_lo"):
        x_lo = _num_list("domain", "x_lo", cp.get("domain", "x_lo"), float)
    if cp.has_option("domain", "x_hi"):
        x_hi = _num_list("domain", "x_hi", cp.get("domain", "x_hi"), float)

    species = []
    for section in cp.sections():
        if not section.startswith("species."):
            continue
        name = section.split(".", 1)[1]
        kwargs = {"name": name, "Nv": _num_list(section, "Nv", need(section, "Nv"), int)}
        for key, kind in (("q", float), ("m", float), ("alpha", float)):
            if cp.has_option(section, key):
                kwargs[key] = kind(cp.get(section, key))
        for key in ("v_lo", "v_hi"):
            if cp.has_option(section, key):
                kwargs[key] = _num_list(section, key, cp.get(section, key), float)
        species.append(SpeciesSection(**kwargs))
    if not species:
        raise ConfigError("at least one [species.<name>] section is required")

    tag = need("problem", "tag")
    params = {
        key: _scalar(cp.get("problem", key))
        for key in cp.options("problem")
        if key != "tag"
    }

    t_end = need("time", "t_end", float)
    cfl = float(cp.get("time", "cfl_fraction")) if cp.has_option("time", "cfl_fraction") else None
    dt = float(cp.get("time", "dt")) if cp.has_option("time", "dt") else None

    part_n = ranks = None
    spr = 1
    deterministic = True
    strategy = "vp"
    if cp.has_section("partition"):
        if cp.has_option("partition", "n"):
            part_n = tuple(
                _num_list("partition", "n", group, int)
                for group in cp.get("partition", "n").split(";")
            )
        if cp.has_option("partition", "ranks"):
            ranks = int(cp.get("partition", "ranks"))
        if cp.has_option("partition", "species_per_rank"):
            spr = int(cp.get("partition", "species_per_rank"))
        if cp.has_option("partition", "deterministic"):
            deterministic = cp.getboolean("partition", "deterministic")
        if cp.has_option("partition", "strategy"):
            strategy = cp.get("partition", "strategy").strip()

    out_dir = "out"
    cadence = 10
    snapshots = False
    if cp.has_section("output"):
        if cp.has_option("output", "directory"):
            out_dir = cp.get("output", "directory").strip()
        if cp.has_option("output", "cadence"):
            cadence = int(cp.get("output", "cadence"))
        if cp.has_option("output", "snapshots"):
            snapshots = cp.getboolean("output", "snapshots")

    return RunConfig(
        d=d,
        v=v,
        N=N,
        species=tuple(species),
        problem=tag,
        problem_params=params,
        t_end=t_end,
        cfl_fraction=cfl,
        dt=dt,
        x_lo=x_lo,
        x_hi=x_hi,
        partition_n=part_n,
        ranks=ranks,
        species_per_rank=spr,
        deterministic=deterministic,
        strategy=strategy,
        output_dir=out_dir,
        cadence=cadence,
        snapshots=snapshots,
    )


def read_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig):
    """Render a :class:`RunConfig` back to canonical text."""
    out = io.StringIO()

    def sec(name, pairs):
        out.write(f"[{name}]\n")
        for key, value in pairs:
            out.write(f"{key} = {value}\n")
        out.write("\n")

    domain = [("d", cfg.d), ("v", cfg.v), ("N", ",".join(str(n) for n in cfg.N))]
    if cfg.x_lo is not None:
        domain.append(("x_lo", ",".join(_render(x) for x in cfg.x_lo)))
    if cfg.x_hi is not None:
        domain.append(("x_hi", ",".join(_render(x) for x in cfg.x_hi)))
    sec("domain", domain)

    for sp in cfg.species:
        pairs = [("Nv", ",".join(str(n) for n in sp.Nv))]
        if sp.q is not None:
            pairs.append(("q", _render(sp.q)))
        if sp.m is not None:
            pairs.append(("m", _render(sp.m)))
        if sp.v_lo is not None:
            pairs.append(("v_lo", ",".join(_render(x) for x in sp.v_lo)))
        if sp.v_hi is not None:
            pairs.append(("v_hi", ",".join(_render(x) for x in sp.v_hi)))
        if sp.alpha is not None:
            pairs.append(("alpha", _render(sp.alpha)))
        sec(f"species.{sp.name}", pairs)

    sec(
        "problem",
        [("tag", cfg.problem)]
        + [(k, _render(v)) for k, v in sorted(cfg.problem_params.items())],
    )

    time_pairs = [("t_end", _render(cfg.t_end))]
    if cfg.cfl_fraction is not None:
        time_pairs.append(("cfl_fraction", _render(cfg.cfl_fraction)))
    if cfg.dt is not None:
        time_pairs.append(("dt", _render(cfg.dt)))
    sec("time", time_pairs)

    part_pairs = []
    if cfg.partition_n is not None:
        part_pairs.append(
            ("n", ";".join(",".join(str(x) for x in grp) for grp in cfg.partition_n))
        )
    if cfg.ranks is not None:
        part_pairs.append(("ranks", cfg.ranks))
    if cfg.species_per_rank != 1:
        part_pairs.append(("species_per_rank", cfg.species_per_rank))
    part_pairs.append(("deterministic", _render(cfg.deterministic)))
    part_pairs.append(("strategy", cfg.strategy))
    sec("partition", part_pairs)

    sec(
        "output",
        [
            ("directory", cfg.output_dir),
            ("cadence", cfg.cadence),
            ("snapshots", _render(cfg.snapshots)),
        ],
    )
    return out.getvalue()
