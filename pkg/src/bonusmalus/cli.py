"""``bml`` command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .bms import level_distribution
from .config import RunConfig, load_config
from .distributions import weight_fraction
from .errors import BonusMalusError, ConfigError
from .mixture import MixtureClaimModel, approx_bayes_base_premium
from .relativity import METHODS, efficiency_sweep, relativity_tables
from .report import Column, PricingReport, Table, efficiency_svg, fmt3, fmt6, write_csv, write_meta

__all__ = ["main", "run_command", "COMMANDS"]

COMMANDS = ("steady-state", "relativities", "efficiency", "base-premium", "price")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _metadata(cfg: RunConfig, command: str, **extra) -> dict:
    meta = {
        "command": command,
        "tool_version": __version__,
        "bms": cfg.bms.name,
        "count_model": cfg.count_model.to_dict(),
        "lambda": cfg.lam,
        "xi": cfg.xi,
        "prior": [f"{weight_fraction(w)} {c}" for w, c in zip(cfg.prior.weights, cfg.prior.components)],
    }
    meta.update(extra)
    return meta


def _base_premium(cfg: RunConfig):
    if cfg.base_model is None:
        raise ConfigError("this command needs a base_model", field="base_model")
    return approx_bayes_base_premium(cfg.base_model.model, cfg.base_model.stats, cfg.base_prior)


def _cmd_steady_state(cfg, out, raw):
    P = level_distribution(cfg.bms, cfg.count_model, cfg.lam, cfg.prior)
    levels = tuple(range(1, cfg.bms.levels + 1))
    path = write_csv(out / "steady_state.csv", Table([Column("level", levels), Column("P", tuple(P), fmt3)]), raw)
    return [path, write_meta(out / "steady_state_meta.json", _metadata(cfg, "steady-state"))]


def _cmd_relativities(cfg, out, raw):
    res = relativity_tables(cfg.bms, cfg.count_model, cfg.lam, cfg.prior, cfg.xi)
    levels = tuple(range(1, cfg.bms.levels + 1))
    cols = [Column("level", levels), Column("P", res.P, fmt3)]
    cols += [Column(m, res[m].values, fmt3) for m in METHODS]
    lines = {
        m: {"alpha": res[m].alpha, "beta": res[m].beta} for m in ("ordinary-linear", "optimal-linear")
    }
    return [
        write_csv(out / "relativities.csv", Table(cols), raw),
        write_meta(out / "relativities_meta.json", _metadata(cfg, "relativities", lines=lines)),
    ]


def _cmd_efficiency(cfg, out, raw):
    if cfg.relativity_override is not None:
        tables = {"override": cfg.relativity_override}
    else:
        res = relativity_tables(cfg.bms, cfg.count_model, cfg.lam, cfg.prior, cfg.xi)
        tables = {m: res[m] for m in METHODS}
    sweep = efficiency_sweep(tables, cfg.bms, cfg.count_model, cfg.sweep)
    cols = [Column("frequency", sweep.grid, fmt6)]
    cols += [Column(m, sweep.curves[m], fmt6) for m in sweep.methods]
    svg = out / "efficiency.svg"
    svg.write_bytes(efficiency_svg(sweep.grid, dict(sweep.curves)).encode("utf-8"))
    return [
        write_csv(out / "efficiency.csv", Table(cols), raw),
        svg,
        write_meta(out / "efficiency_meta.json", _metadata(cfg, "efficiency")),
    ]


def _cmd_base_premium(cfg, out, raw):
    res = _base_premium(cfg)
    model: MixtureClaimModel = cfg.base_model.model
    main = Table([
        Column("model", (cfg.base_model.name,)),
        Column("n", (cfg.base_model.stats.n,)),
        Column("base", (res.estimate,), fmt3),
    ])
    rows = [
        (i + 1, model.components[i].name, l + 1, res.rho[i][l], res.delta[i][l])
        for i in range(model.k) for l in range(len(cfg.base_prior))
    ]
    weights = Table([
        Column("component", tuple(r[0] for r in rows)),
        Column("family", tuple(r[1] for r in rows)),
        Column("prior_component", tuple(r[2] for r in rows)),
        Column("rho", tuple(r[3] for r in rows), repr),
        Column("delta", tuple(r[4] for r in rows), repr),
    ])
    return [
        write_csv(out / "base_premium.csv", main, raw),
        write_csv(out / "base_premium_weights.csv", weights, False),
        write_meta(out / "base_premium_meta.json", _metadata(
            cfg, "base-premium", base_model=cfg.base_model.name, base_premium=res.estimate)),
    ]


def _cmd_price(cfg, out, raw):
    res = relativity_tables(cfg.bms, cfg.count_model, cfg.lam, cfg.prior, cfg.xi)
    base = _base_premium(cfg).estimate
    report = PricingReport(
        levels=tuple(range(1, cfg.bms.levels + 1)),
        P=res.P,
        relativities={m: res[m].values for m in METHODS},
        chosen=cfg.relativity,
        base=base,
        metadata=_metadata(cfg, "price", base_model=cfg.base_model.name,
                           relativity=cfg.relativity, base_premium=base),
    )
    return [
        write_csv(out / "price.csv", report.table(), raw),
        write_meta(out / "price_meta.json", report.metadata),
    ]


_HANDLERS = {
    "steady-state": _cmd_steady_state,
    "relativities": _cmd_relativities,
    "efficiency": _cmd_efficiency,
    "base-premium": _cmd_base_premium,
    "price": _cmd_price,
}


def run_command(cfg: RunConfig, command: str, out_dir=None, raw: bool = False) -> list[Path]:
    """Run one command and return the paths written."""
    if command not in _HANDLERS:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory: {e}", field="output.dir") from e
    return _HANDLERS[command](cfg, out, raw)


def _parser():
    p = argparse.ArgumentParser(prog="bml", description="Bonus-Malus pricing.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON config (schema v1)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--xi", type=float, help="optimal-linear weight on the claim-count Bayes target")
    p.add_argument("--lambda", dest="lam", type=float, help="portfolio claim frequency")
    p.add_argument("--zip-p", dest="zip_p", type=float, help="use ZIP claim counts with this p")
    p.add_argument("--raw", action="store_true", help="add full-precision *_raw columns")
    p.add_argument("--version", action="version", version=f"bml {__version__}")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(xi=args.xi, lam=args.lam, zip_p=args.zip_p)
        paths = run_command(cfg, args.command, args.out, args.raw)
    except ConfigError as e:
        print(f"bml {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (BonusMalusError, ArithmeticError, ValueError) as e:
        print(f"bml {args.command}: numeric error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
