"""Run configuration: JSON schema ``v1``, presets, canonical form.

A minimal config::

    {"schema": "v1", "bms": "kenya", "prior": "pi1", "base_model": "model1"}

Top-level keys (all optional except ``schema``):

``bms``
    Preset name (``kenya``, ``hongkong``, ``ireland``, ``brazil``) or an
    object ``{"levels", "start_level", "rule"}``.  An object may also carry
    ``"preset"``; its other keys then override the preset.
``count_model``
    ``"poisson"``, ``"zip"`` or ``{"type": "zip", "p": 0.2}``.
``lambda``
    Portfolio claim frequency, default 0.1474.
``prior``
    Structure function / per-level priors: ``"pi1"``, ``"pi2"`` or
    ``{"components": [{"weight", "shape", "rate"}, ...]}``.  Defaults to
    ``Gamma(2l - 1, s)`` with equal weights for an ``s``-level system.
``xi``
    Weight of the claim-count Bayes relativity in the optimal-linear fit.
``base_model``
    ``"model1"`` .. ``"model4"`` or ``{"components": [{"family": ...}],
    "stats": {...}}``, optionally with ``"preset"`` to override parts.
``base_prior``
    Prior of the claim-size parameter, same syntax as ``prior``; defaults
    to ``prior``.
``relativity``
    Method used by ``price``, default ``"optimal-linear"``.
``relativity_override``
    Explicit per-level relativities for ``efficiency``.
``sweep``
    ``{"start", "stop", "num"}`` or ``{"grid": [...]}``.
``output``
    ``{"dir": "out"}``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bms import PRESETS as BMS_PRESETS
from .bms import BonusMalusSystem, Explicit, JumpToTop, Step
from .distributions import ClaimCountModel, GammaComponent, GammaMixturePrior, Poisson, ZIPoisson
from .errors import BonusMalusError, ConfigError
from .mixture import FAMILIES, MODEL_PRESETS, MixtureClaimModel, SufficientStats
from .relativity import METHODS

__all__ = ["RunConfig", "parse_config", "load_config", "dump_config", "PRIOR_PRESETS"]

SCHEMA_VERSION = "v1"
DEFAULT_LAMBDA = 0.1474
DEFAULT_ZIP_P = 0.2
DEFAULT_SWEEP = {"start": 0.05, "stop": 1.0, "num": 100}

PRIOR_PRESETS = {
    "pi1": GammaMixturePrior.odd_shapes(7, 7.0),
    "pi2": GammaMixturePrior.odd_shapes(6, 6.0),
}

_TOP_KEYS = {
    "schema", "bms", "count_model", "lambda", "prior", "xi", "base_model", "base_prior",
    "relativity", "relativity_override", "sweep", "output",
}


@dataclass(frozen=True)
class BaseModelSpec:
    """Claim-size mixture plus the sufficient statistics of the observed sample."""

    model: MixtureClaimModel
    stats: SufficientStats
    name: str = field(default="custom", compare=False)
    count: str | None = field(default=None, compare=False)


@dataclass(frozen=True)
class RunConfig:
    bms: BonusMalusSystem
    count_model: ClaimCountModel = Poisson()
    lam: float = DEFAULT_LAMBDA
    prior: GammaMixturePrior | None = None
    xi: float = 0.5
    base_model: BaseModelSpec | None = None
    base_prior: GammaMixturePrior | None = None
    relativity: str = "optimal-linear"
    relativity_override: tuple | None = None
    sweep: tuple = field(default_factory=lambda: _grid_from(DEFAULT_SWEEP))
    out_dir: str = "out"

    def __post_init__(self):
        # default priors: Gamma(1, s), Gamma(3, s), ..., one component per level
        if self.prior is None:
            s = self.bms.levels
            object.__setattr__(self, "prior", GammaMixturePrior.odd_shapes(s, float(s)))
        if self.base_prior is None:
            object.__setattr__(self, "base_prior", self.prior)

    def with_overrides(self, xi=None, lam=None, zip_p=None) -> "RunConfig":
        """Copy with command-line overrides applied (``zip_p`` selects a ZIP count model)."""
        kw = dict(self.__dict__)
        if xi is not None:
            kw["xi"] = _check_unit(xi, "xi", None)
        if lam is not None:
            kw["lam"] = _check_positive(lam, "lambda", None)
        if zip_p is not None:
            kw["count_model"] = ZIPoisson(_check_unit(zip_p, "count_model.p", None))
        return RunConfig(**kw)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class _Ctx:
    """Maps a field path to a 1-based line of the source text (best effort)."""

    def __init__(self, text: str):
        self.text = text

    def line(self, path: str):
        pos, found = 0, False
        for part in path.split("."):
            if part.isdigit() or not part:
                continue
            m = re.compile(r'"%s"\s*:' % re.escape(part)).search(self.text, pos)
            if m is None:
                break
            pos, found = m.start(), True
        return self.text.count("\n", 0, pos) + 1 if found else None

    def error(self, message, path):
        return ConfigError(message, field=path, line=self.line(path))


def _check_positive(v, path, ctx):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0) or not math.isfinite(v):
        msg = f"{path} must be a positive finite number, got {v!r}"
        raise ctx.error(msg, path) if ctx else ConfigError(msg, field=path)
    return float(v)


def _check_unit(v, path, ctx):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (0.0 <= v <= 1.0):
        msg = f"{path} must lie in [0, 1], got {v!r}"
        raise ctx.error(msg, path) if ctx else ConfigError(msg, field=path)
    return float(v)


def _check_int(v, path, ctx, lo=None):
    if isinstance(v, bool) or not isinstance(v, int) or (lo is not None and v < lo):
        bound = f" >= {lo}" if lo is not None else ""
        raise ctx.error(f"{path} must be an integer{bound}, got {v!r}", path)
    return v


def _expect(obj, kind, path, ctx):
    if not isinstance(obj, kind):
        name = {dict: "an object", list: "a list", str: "a string"}.get(kind, str(kind))
        raise ctx.error(f"{path} must be {name}", path)
    return obj


def _no_extra(obj, allowed, path, ctx):
    for k in obj:
        if k not in allowed:
            sub = f"{path}.{k}" if path else k
            raise ctx.error(f"unknown field {sub!r}", sub)


def _parse_rule(obj, path, ctx):
    _expect(obj, dict, path, ctx)
    kind = obj.get("type")
    if kind == "step":
        _no_extra(obj, {"type", "bonus_step", "malus_step"}, path, ctx)
        return Step(
            _check_int(obj.get("bonus_step", 1), f"{path}.bonus_step", ctx, 1),
            _check_int(obj.get("malus_step", 1), f"{path}.malus_step", ctx, 1),
        )
    if kind == "jump_to_top":
        _no_extra(obj, {"type", "bonus_step"}, path, ctx)
        return JumpToTop(_check_int(obj.get("bonus_step", 1), f"{path}.bonus_step", ctx, 1))
    if kind == "explicit":
        _no_extra(obj, {"type", "saturation", "targets"}, path, ctx)
        sat = _check_int(obj.get("saturation"), f"{path}.saturation", ctx, 0)
        rows = _expect(obj.get("targets"), list, f"{path}.targets", ctx)
        targets = {}
        for i, row in enumerate(rows):
            rp = f"{path}.targets.{i}"
            if not (isinstance(row, list) and len(row) == 3):
                raise ctx.error("each explicit target is [level, claims, target]", rp)
            l, n, t = (_check_int(v, rp, ctx) for v in row)
            targets[(l, n)] = t
        return Explicit(targets, sat)
    raise ctx.error(f"unknown rule type {kind!r}", f"{path}.type")


def _parse_bms(obj, ctx):
    path = "bms"
    if isinstance(obj, str):
        if obj.lower() not in BMS_PRESETS:
            raise ctx.error(f"unknown BMS preset {obj!r}; known: {sorted(BMS_PRESETS)}", path)
        return BMS_PRESETS[obj.lower()]
    _expect(obj, dict, path, ctx)
    _no_extra(obj, {"preset", "name", "levels", "start_level", "rule"}, path, ctx)
    if "preset" in obj:
        name = _expect(obj["preset"], str, "bms.preset", ctx)
        if name.lower() not in BMS_PRESETS:
            raise ctx.error(f"unknown BMS preset {name!r}", "bms.preset")
        base = BMS_PRESETS[name.lower()]
    else:
        missing = [k for k in ("levels", "start_level", "rule") if k not in obj]
        if missing:
            raise ctx.error(
                f"explicit BMS needs {', '.join(missing)} (or a preset to override)",
                f"bms.{missing[0]}",
            )
        base = None
    levels = _check_int(obj["levels"], "bms.levels", ctx, 2) if "levels" in obj else base.levels
    start = (
        _check_int(obj["start_level"], "bms.start_level", ctx, 1)
        if "start_level" in obj else base.start_level
    )
    if not 1 <= start <= levels:
        raise ctx.error(f"start level {start} outside [1, {levels}]", "bms.start_level")
    rule = _parse_rule(obj["rule"], "bms.rule", ctx) if "rule" in obj else base.rule
    name = obj.get("name", base.name if base else "custom")
    try:
        return BonusMalusSystem(levels, start, rule, name=name)
    except BonusMalusError as e:
        raise ctx.error(str(e), "bms.rule") from e


def _parse_count(obj, ctx):
    path = "count_model"
    if isinstance(obj, str):
        obj = {"type": obj}
    _expect(obj, dict, path, ctx)
    _no_extra(obj, {"type", "p"}, path, ctx)
    kind = obj.get("type")
    if kind == "poisson":
        if "p" in obj:
            raise ctx.error("a Poisson count model takes no p", "count_model.p")
        return Poisson()
    if kind == "zip":
        return ZIPoisson(_check_unit(obj.get("p", DEFAULT_ZIP_P), "count_model.p", ctx))
    raise ctx.error(f"unknown count model {kind!r}", "count_model.type")


def _parse_prior(obj, path, ctx):
    if isinstance(obj, str):
        if obj not in PRIOR_PRESETS:
            raise ctx.error(f"unknown prior preset {obj!r}; known: {sorted(PRIOR_PRESETS)}", path)
        return PRIOR_PRESETS[obj]
    _expect(obj, dict, path, ctx)
    _no_extra(obj, {"preset", "components"}, path, ctx)
    if "components" not in obj:
        if "preset" in obj:
            return _parse_prior(obj["preset"], f"{path}.preset", ctx)
        raise ctx.error("prior needs a preset or a component list", f"{path}.components")
    comps = _expect(obj["components"], list, f"{path}.components", ctx)
    if not comps:
        raise ctx.error("prior component list is empty", f"{path}.components")
    weights, gammas = [], []
    for i, c in enumerate(comps):
        cp = f"{path}.components.{i}"
        _expect(c, dict, cp, ctx)
        _no_extra(c, {"weight", "shape", "rate"}, cp, ctx)
        for key in ("weight", "shape", "rate"):
            if key not in c:
                raise ctx.error(f"missing {key}", f"{cp}.{key}")
        weights.append(_check_unit(c["weight"], f"{cp}.weight", ctx))
        gammas.append(GammaComponent(
            _check_positive(c["shape"], f"{cp}.shape", ctx),
            _check_positive(c["rate"], f"{cp}.rate", ctx),
        ))
    total = math.fsum(weights)
    if abs(total - 1.0) > 1e-12:
        raise ctx.error(f"prior weights sum to {total!r}, not 1", f"{path}.components")
    return GammaMixturePrior(tuple(weights), tuple(gammas))


def _parse_family(obj, path, ctx):
    _expect(obj, dict, path, ctx)
    kind = obj.get("family")
    if kind not in FAMILIES:
        raise ctx.error(f"unknown family {kind!r}; known: {sorted(FAMILIES)}", f"{path}.family")
    extra = {k: v for k, v in obj.items() if k != "family"}
    try:
        return FAMILIES[kind](**extra)
    except TypeError:
        raise ctx.error(f"bad parameters for family {kind!r}: {sorted(extra)}", path) from None
    except BonusMalusError as e:
        raise ctx.error(str(e), path) from e


def _parse_stats(obj, path, ctx):
    _expect(obj, dict, path, ctx)
    _no_extra(obj, {"n", "T1", "T2", "T3", "T4", "x_min", "sample"}, path, ctx)
    try:
        if "sample" in obj:
            if len(obj) > 1:
                raise ctx.error("give either a sample or its statistics, not both", path)
            return SufficientStats.from_sample(_expect(obj["sample"], list, f"{path}.sample", ctx))
        n = _check_int(obj.get("n"), f"{path}.n", ctx, 0)
        vals = {}
        for k in ("T1", "T2", "T3", "T4", "x_min"):
            if k in obj:
                v = obj[k]
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ctx.error(f"{k} must be a number", f"{path}.{k}")
                vals[k] = float(v)
        return SufficientStats(n=n, **vals)
    except ConfigError:
        raise
    except BonusMalusError as e:
        raise ctx.error(str(e), path) from e


def _parse_base_model(obj, ctx):
    path = "base_model"
    if isinstance(obj, str):
        if obj not in MODEL_PRESETS:
            raise ctx.error(f"unknown base model {obj!r}; known: {sorted(MODEL_PRESETS)}", path)
        model, stats, count = MODEL_PRESETS[obj]
        return BaseModelSpec(model, stats, obj, count)
    _expect(obj, dict, path, ctx)
    _no_extra(obj, {"preset", "components", "stats"}, path, ctx)
    if "preset" in obj:
        base = _parse_base_model(_expect(obj["preset"], str, "base_model.preset", ctx), ctx)
    else:
        missing = [k for k in ("components", "stats") if k not in obj]
        if missing:
            raise ctx.error(f"explicit base model needs {', '.join(missing)}", f"{path}.{missing[0]}")
        base = None
    if "components" in obj:
        comps = _expect(obj["components"], list, f"{path}.components", ctx)
        if not comps:
            raise ctx.error("component list is empty", f"{path}.components")
        model = MixtureClaimModel(tuple(
            _parse_family(c, f"{path}.components.{i}", ctx) for i, c in enumerate(comps)
        ))
    else:
        model = base.model
    stats = _parse_stats(obj["stats"], f"{path}.stats", ctx) if "stats" in obj else base.stats
    if base is not None and "components" not in obj and "stats" not in obj:
        return base
    name = base.name + "+override" if base else "custom"
    return BaseModelSpec(model, stats, name, base.count if base else None)


def _grid_from(obj):
    return tuple(float(x) for x in np.linspace(obj["start"], obj["stop"], obj["num"]))


def _parse_sweep(obj, ctx):
    path = "sweep"
    _expect(obj, dict, path, ctx)
    if "grid" in obj:
        _no_extra(obj, {"grid"}, path, ctx)
        grid = _expect(obj["grid"], list, "sweep.grid", ctx)
        vals = tuple(_check_positive(v, "sweep.grid", ctx) for v in grid)
    else:
        _no_extra(obj, {"start", "stop", "num"}, path, ctx)
        spec = {**DEFAULT_SWEEP, **obj}
        _check_positive(spec["start"], "sweep.start", ctx)
        _check_positive(spec["stop"], "sweep.stop", ctx)
        _check_int(spec["num"], "sweep.num", ctx, 1)
        vals = _grid_from(spec)
    if not vals or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ctx.error("sweep grid must be non-empty and strictly increasing", path)
    return vals


def parse_config(source) -> RunConfig:
    """Parse a ``v1`` config from a path or from inline JSON text."""
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
    else:
        text = source
    ctx = _Ctx(text)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e
    _expect(raw, dict, "<root>", ctx)
    _no_extra(raw, _TOP_KEYS, "", ctx)
    if raw.get("schema") != SCHEMA_VERSION:
        raise ctx.error(f"schema must be {SCHEMA_VERSION!r}, got {raw.get('schema')!r}", "schema")
    if "bms" not in raw:
        raise ConfigError("missing required field", field="bms")

    kw = {"bms": _parse_bms(raw["bms"], ctx)}
    if "base_model" in raw:
        kw["base_model"] = _parse_base_model(raw["base_model"], ctx)
    if "count_model" in raw:
        kw["count_model"] = _parse_count(raw["count_model"], ctx)
    elif kw.get("base_model") is not None and kw["base_model"].count == "zip":
        kw["count_model"] = ZIPoisson(DEFAULT_ZIP_P)
    if "lambda" in raw:
        kw["lam"] = _check_positive(raw["lambda"], "lambda", ctx)
    if "prior" in raw:
        kw["prior"] = _parse_prior(raw["prior"], "prior", ctx)
    if "base_prior" in raw:
        kw["base_prior"] = _parse_prior(raw["base_prior"], "base_prior", ctx)
    if "xi" in raw:
        kw["xi"] = _check_unit(raw["xi"], "xi", ctx)
    if "relativity" in raw:
        if raw["relativity"] not in METHODS:
            raise ctx.error(f"unknown relativity method {raw['relativity']!r}", "relativity")
        kw["relativity"] = raw["relativity"]
    if "relativity_override" in raw:
        vals = _expect(raw["relativity_override"], list, "relativity_override", ctx)
        if len(vals) != kw["bms"].levels:
            raise ctx.error(
                f"need {kw['bms'].levels} relativities, got {len(vals)}", "relativity_override"
            )
        kw["relativity_override"] = tuple(
            _check_positive(v, "relativity_override", ctx) for v in vals
        )
    if "sweep" in raw:
        kw["sweep"] = _parse_sweep(raw["sweep"], ctx)
    if "output" in raw:
        out = _expect(raw["output"], dict, "output", ctx)
        _no_extra(out, {"dir"}, "output", ctx)
        kw["out_dir"] = _expect(out.get("dir", "out"), str, "output.dir", ctx)
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    return parse_config(Path(path))


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------


def _prior_dict(prior):
    return {"components": prior.to_dict()["components"]}


def canonical_dict(cfg: RunConfig) -> dict:
    """Fully expanded ``v1`` document; re-parsing it gives an equal config."""
    out = {
        "schema": SCHEMA_VERSION,
        "bms": {
            "name": cfg.bms.name,
            "levels": cfg.bms.levels,
            "start_level": cfg.bms.start_level,
            "rule": cfg.bms.rule.to_dict(),
        },
        "count_model": cfg.count_model.to_dict(),
        "lambda": cfg.lam,
        "prior": _prior_dict(cfg.prior),
        "xi": cfg.xi,
        "base_prior": _prior_dict(cfg.base_prior),
        "relativity": cfg.relativity,
        "sweep": {"grid": list(cfg.sweep)},
        "output": {"dir": cfg.out_dir},
    }
    if cfg.base_model is not None:
        out["base_model"] = {
            "components": [c.to_dict() for c in cfg.base_model.model.components],
            "stats": cfg.base_model.stats.to_dict(),
        }
    if cfg.relativity_override is not None:
        out["relativity_override"] = list(cfg.relativity_override)
    return out


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(canonical_dict(cfg), indent=2, sort_keys=True) + "\n"
