"""Experiment configuration: strict TOML parsing and object builders.

A config is a TOML document with ``[potential]``, ``[schedule]``,
``[sampler]`` and optional ``[target]``, ``[bounds]``, ``[pgf]``,
``[output]`` tables.  Parsing is strict: unknown sections or keys are
errors, missing required keys are reported as ``section.key: required``,
and type mismatches name the expected type.  Everything is validated
before any computation starts.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import SamplerConfig
from .errors import ConfigError
from .potentials import Potential, make_potential, target_moment
from .schedules import PenaltySchedule, make_schedule

_NUMBER = (int, float)


def _type_name(typ: str) -> str:
    return {"number": "number", "int": "integer", "str": "string",
            "bool": "boolean", "list_number": "list of numbers",
            "list_int": "list of integers", "list_str": "list of strings",
            "matrix": "list of number rows"}[typ]


def _check_type(val: Any, typ: str) -> bool:
    if typ == "number":
        return isinstance(val, _NUMBER) and not isinstance(val, bool)
    if typ == "int":
        return isinstance(val, int) and not isinstance(val, bool)
    if typ == "str":
        return isinstance(val, str)
    if typ == "bool":
        return isinstance(val, bool)
    if typ == "list_number":
        return (isinstance(val, list) and len(val) > 0
                and all(isinstance(v, _NUMBER) and not isinstance(v, bool) for v in val))
    if typ == "list_int":
        return (isinstance(val, list)
                and all(isinstance(v, int) and not isinstance(v, bool) for v in val))
    if typ == "list_str":
        return isinstance(val, list) and all(isinstance(v, str) for v in val)
    if typ == "matrix":
        return (isinstance(val, list) and len(val) > 0
                and all(_check_type(r, "list_number") for r in val))
    raise AssertionError(typ)


class _Section:
    def __init__(self, name: str, data: dict):
        self.name = name
        self.data = dict(data)
        self.seen: set[str] = set()

    def get(self, key: str, typ: str, required: bool = False, default=None):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.name}.{key}: required")
            return default
        val = self.data[key]
        if not _check_type(val, typ):
            raise ConfigError(
                f"{self.name}.{key}: expected {_type_name(typ)}, "
                f"got {type(val).__name__}")
        return val

    def get_union(self, key: str, typs: tuple[str, ...], required: bool = False,
                  default=None):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(f"{self.name}.{key}: required")
            return default
        val = self.data[key]
        for typ in typs:
            if _check_type(val, typ):
                return val
        names = " or ".join(_type_name(t) for t in typs)
        raise ConfigError(f"{self.name}.{key}: expected {names}, "
                          f"got {type(val).__name__}")

    def finish(self) -> None:
        unknown = set(self.data) - self.seen
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"{self.name}.{key}: unknown key")


_SCHEDULE_AUTO = ("2mu2", "121mu2")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; builders construct live objects."""

    potential: dict
    schedule: dict
    sampler: dict | None
    target_n: int | None
    bounds: dict
    pgf: dict | None
    output: dict
    raw: dict = field(repr=False, default_factory=dict)

    # -- builders --------------------------------------------------------

    def build_potential(self) -> Potential:
        p = dict(self.potential)
        kind = p.pop("kind")
        return make_potential(kind, **p)

    def build_schedule(self, pot: Potential, for_pgf: bool = False) -> PenaltySchedule:
        s = dict(self.schedule)
        kind = s.pop("kind")
        m = s.pop("m", None)
        if for_pgf:
            m_val = 0.0
        elif m is None or m == "potential":
            m_val = pot.m
        else:
            m_val = float(m)
        if "A" in s and isinstance(s["A"], str):
            mu2 = pot.mu2 if pot.mu2 is not None else target_moment(pot, 0.0, 2)
            s["A"] = {"2mu2": 2.0 * mu2, "121mu2": 121.0 * mu2}[s["A"]]
        return make_schedule(kind, m=m_val, **s)

    def build_sampler(self) -> SamplerConfig:
        if self.sampler is None:
            raise ConfigError("sampler: required for this command")
        return SamplerConfig(**self.sampler)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate a TOML experiment config."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    known = {"potential", "schedule", "sampler", "target", "bounds", "pgf", "output"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown section")
    if "potential" not in doc:
        raise ConfigError("potential: required section")
    if "schedule" not in doc:
        raise ConfigError("schedule: required section")

    potential = _parse_potential(_Section("potential", doc["potential"]))
    schedule = _parse_schedule(_Section("schedule", doc["schedule"]))
    sampler = None
    if "sampler" in doc:
        sampler = _parse_sampler(_Section("sampler", doc["sampler"]))
    target_n = None
    if "target" in doc:
        sec = _Section("target", doc["target"])
        target_n = sec.get("n", "int")
        if target_n is not None and target_n < 2:
            raise ConfigError("target.n: must be >= 2")
        sec.finish()
    bounds = _parse_bounds(_Section("bounds", doc.get("bounds", {})))
    pgf = None
    if "pgf" in doc:
        pgf = _parse_pgf(_Section("pgf", doc["pgf"]))
    output = _parse_output(_Section("output", doc.get("output", {})))
    return ExperimentConfig(potential=potential, schedule=schedule, sampler=sampler,
                            target_n=target_n, bounds=bounds, pgf=pgf,
                            output=output, raw=doc)


def _parse_potential(sec: _Section) -> dict:
    kind = sec.get("kind", "str", required=True)
    out: dict[str, Any] = {"kind": kind}
    if kind == "gaussian":
        H = sec.get("H", "matrix")
        hdiag = sec.get("hdiag", "list_number")
        if (H is None) == (hdiag is None):
            raise ConfigError("potential: gaussian needs exactly one of H or hdiag")
        out["H"] = np.diag(hdiag) if hdiag is not None else np.asarray(H, dtype=float)
        centre = sec.get("centre", "list_number")
        if centre is not None:
            out["centre"] = np.asarray(centre, dtype=float)
    elif kind in ("cubic", "power", "pseudo_huber", "separable_power"):
        out["xstar"] = np.asarray(sec.get("xstar", "list_number", required=True),
                                  dtype=float)
        if kind == "power":
            out["a"] = float(sec.get("a", "number", required=True))
        if kind == "pseudo_huber":
            out["b"] = float(sec.get("b", "number", required=True))
        if kind == "separable_power":
            out["a"] = float(sec.get("a", "number", required=True))
            out["weights"] = np.asarray(sec.get("weights", "list_number", required=True),
                                        dtype=float)
    else:
        raise ConfigError(f"potential.kind: unknown kind {kind!r}")
    sec.finish()
    # construct once to surface parameter errors at parse time
    make_potential(out["kind"], **{k: v for k, v in out.items() if k != "kind"})
    return out


def _parse_schedule(sec: _Section) -> dict:
    kind = sec.get("kind", "str", required=True)
    out: dict[str, Any] = {"kind": kind}
    if kind == "constant":
        out["c"] = float(sec.get("c", "number", required=True))
    elif kind == "pld_optimal":
        A = sec.get_union("A", ("number", "str"), required=True)
        if isinstance(A, str):
            if A not in _SCHEDULE_AUTO:
                raise ConfigError(
                    f"schedule.A: string form must be one of {_SCHEDULE_AUTO}")
            out["A"] = A
        else:
            if A <= 0:
                raise ConfigError("schedule.A: must be positive")
            out["A"] = float(A)
    elif kind == "pgf_optimal":
        out["D"] = float(sec.get("D", "number", required=True))
        out["q"] = float(sec.get("q", "number", required=True))
        if not (0.0 <= out["q"] < 1.0):
            raise ConfigError("schedule.q: must lie in [0, 1)")
    elif kind != "zero":
        raise ConfigError(f"schedule.kind: unknown kind {kind!r}")
    m = sec.get_union("m", ("number", "str"))
    if m is not None:
        if isinstance(m, str) and m != "potential":
            raise ConfigError("schedule.m: expected number or 'potential'")
        out["m"] = m
    sec.finish()
    return out


def _parse_sampler(sec: _Section) -> dict:
    out = {
        "variant": sec.get("variant", "str", required=True),
        "h": float(sec.get("h", "number", required=True)),
        "n_steps": sec.get("n_steps", "int", required=True),
        "n_paths": sec.get("n_paths", "int", default=10_000),
        "tau": float(sec.get("tau", "number", default=1.0)),
        "R": sec.get("R", "int", default=1),
        "master_seed": sec.get("seed", "int", default=0),
        "engine": sec.get("engine", "str", default="auto"),
    }
    cps = sec.get_union("checkpoints", ("str", "list_int"), default="geometric")
    if isinstance(cps, str):
        if cps != "geometric":
            raise ConfigError("sampler.checkpoints: expected 'geometric' or a "
                              "list of step indices")
        out["checkpoints"] = None
    else:
        out["checkpoints"] = tuple(cps)
    threads = sec.get("threads", "int")
    sec.finish()
    cfg = SamplerConfig(**out)  # surfaces value errors at parse time
    del cfg
    if threads is not None and threads > 0:
        out_threads = threads
    else:
        out_threads = None
    out["_threads"] = out_threads
    return out


def _parse_bounds(sec: _Section) -> dict:
    known_bounds = ("thm1", "prop1", "pgf2")
    out = {
        "evaluate": sec.get("evaluate", "list_str", default=[]),
        "dominance": sec.get("dominance", "list_str", default=[]),
        "rate_window": sec.get("rate_window", "list_number"),
        "slope_range": sec.get("slope_range", "list_number"),
        "slack_const": float(sec.get("slack_const", "number", default=1.0)),
        "t_min": sec.get("t_min", "number"),
        "t_max": sec.get("t_max", "number"),
        "n_points": sec.get("n_points", "int", default=50),
    }
    sec.finish()
    for b in list(out["evaluate"]) + list(out["dominance"]):
        if b not in known_bounds:
            raise ConfigError(f"bounds: unknown bound {b!r} "
                              f"(known: {', '.join(known_bounds)})")
    for k in ("rate_window", "slope_range"):
        if out[k] is not None and len(out[k]) != 2:
            raise ConfigError(f"bounds.{k}: expected [lo, hi]")
    return out


def _parse_pgf(sec: _Section) -> dict:
    out = {
        "T": float(sec.get("T", "number", required=True)),
        "dt": float(sec.get("dt", "number", required=True)),
        "n_records": sec.get("n_records", "int", default=400),
        "compare_unpenalized": sec.get("compare_unpenalized", "bool", default=False),
        "D": sec.get("D", "number"),
        "q": sec.get("q", "number"),
        "x0": sec.get("x0", "list_number"),
    }
    sec.finish()
    if out["T"] <= 0 or out["dt"] <= 0:
        raise ConfigError("pgf.T and pgf.dt must be positive")
    return out


def _parse_output(sec: _Section) -> dict:
    out = {
        "csv": sec.get("csv", "str"),
        "summary": sec.get("summary", "str"),
        "outdir": sec.get("outdir", "str"),
    }
    sec.finish()
    return out
