"""Command-line interface.

Every subcommand prints one JSON object (or CSV for ``sweep``).  Exit codes:
0 on success, 2 for invalid arguments, 3 for numeric failures.  Errors are
reported as ``{"error": ..., "detail": ...}`` on stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, field

import numpy as np

from . import adversary, bayes, closedform, transform
from .errors import ArgumentError, NumericError
from .model import (
    AffineShare,
    ConstantShare,
    Kinked,
    Linear,
    Tabulated,
    TabulatedConvex,
    check_sigma,
)
from .numerics import GridSpec, default_grid
from .svgplot import Series, document, line_chart

EXIT_OK, EXIT_ARGUMENT, EXIT_NUMERIC = 0, 2, 3
SWEEP_HEADER = ("sigma", "z_star", "B", "B_hat", "sigma_ratio", "joint_lb")


class CliArgumentError(ArgumentError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliArgumentError(message)


@dataclass
class RunConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    grid_n: int | None = None
    out: str | None = None
    fmt: str = "json"

    def __post_init__(self):
        if self.fmt == "svg" and self.subcommand != "sweep":
            raise CliArgumentError("svg output is only available for sweep")

    def grid(self) -> GridSpec:
        base = default_grid()
        if self.grid_n is None:
            return base
        return GridSpec(base.lo, base.hi, self.grid_n, base.spacing)


# --------------------------------------------------------------------------
# Argument mini-languages
# --------------------------------------------------------------------------

def read_table(path: str) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``q,value`` CSV file."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            if header != ["q", "value"]:
                raise CliArgumentError(f"table header must be 'q,value' in {path}")
            rows = [(float(a), float(b)) for a, b in reader if a.strip()]
    except OSError as exc:
        raise CliArgumentError(f"cannot read {path}: {exc}") from exc
    except (StopIteration, ValueError) as exc:
        raise CliArgumentError(f"malformed table in {path} ({exc})") from exc
    arr = np.array(rows, dtype=float)
    return arr[:, 0], arr[:, 1]


def _numbers(spec: str, parts: list[str], count: int) -> list[float]:
    if len(parts) != count:
        raise CliArgumentError(f"malformed spec {spec!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise CliArgumentError(f"malformed number in {spec!r}") from exc


def parse_mechanism(spec: str):
    kind, _, rest = spec.partition(":")
    try:
        if kind == "share":
            (z,) = _numbers(spec, rest.split(":"), 1)
            return ConstantShare(z)
        if kind == "affine":
            z, k = _numbers(spec, rest.split(":"), 2)
            return AffineShare(z, k)
        if kind == "table":
            return Tabulated(*read_table(rest))
    except CliArgumentError:
        raise
    except ValueError as exc:
        raise CliArgumentError(f"invalid mechanism {spec!r}: {exc}") from exc
    raise CliArgumentError(f"unknown mechanism {spec!r}; use share:Z, affine:Z:I or table:PATH")


def parse_cost(spec: str):
    kind, _, rest = spec.partition(":")
    try:
        if kind == "linear":
            (c,) = _numbers(spec, rest.split(":"), 1)
            return Linear(c)
        if kind == "kinked":
            q, g = _numbers(spec, rest.split(":"), 2)
            return Kinked(q, g)
        if kind == "table":
            return TabulatedConvex(*read_table(rest))
    except CliArgumentError:
        raise
    except ValueError as exc:
        raise CliArgumentError(f"invalid cost {spec!r}: {exc}") from exc
    raise CliArgumentError(f"unknown cost {spec!r}; use linear:C, kinked:Q:G or table:PATH")


def parse_utility(spec: str):
    kind, _, rest = spec.partition(":")
    try:
        if kind == "power":
            (s,) = _numbers(spec, rest.split(":"), 1)
            return transform.PowerUtility(s)
        if kind == "log1p" and not rest:
            return transform.Log1pUtility()
        if kind == "table":
            return transform.TabulatedUtility(*read_table(rest))
    except CliArgumentError:
        raise
    except ValueError as exc:
        raise CliArgumentError(f"invalid utility {spec!r}: {exc}") from exc
    raise CliArgumentError(f"unknown utility {spec!r}; use power:S, log1p or table:PATH")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def sweep_rows(sigma_min: float, sigma_max: float, steps: int) -> list[tuple]:
    rows = []
    for s in np.linspace(sigma_min, sigma_max, steps):
        s = float(s)
        z, B = closedform.optimal_share(s)
        rows.append((s, z, B, closedform.b_hat(s), closedform.sigma_ratio(s),
                     closedform.joint_surplus_bound(s)))
    return rows


def format_sweep_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(SWEEP_HEADER) + "\n")
    for row in rows:
        buf.write(",".join(f"{v:.7g}" for v in row) + "\n")
    return buf.getvalue()


def render_sweep_svg(rows) -> str:
    sig = tuple(r[0] for r in rows)
    share = line_chart([Series("z*", sig, tuple(r[1] for r in rows))],
                       "Optimal surplus share", "sigma", "z*", y_range=(0.0, 1.0))
    bounds = line_chart([Series("B (deterministic)", sig, tuple(r[2] for r in rows)),
                         Series("B_hat (randomized)", sig, tuple(r[3] for r in rows))],
                        "Surplus share guarantee", "sigma", "ratio", x0=480, y_range=(0.0, 1.0))
    return document([share, bounds], 960, 320)


def cmd_share(cfg: RunConfig) -> dict:
    s = check_sigma(cfg.params["sigma"])
    z, B = closedform.optimal_share(s, cfg.params["alpha"])
    return {"z_star": z, "bound": B}


def cmd_sweep(cfg: RunConfig) -> str:
    p = cfg.params
    lo, hi = check_sigma(p["sigma_min"]), check_sigma(p["sigma_max"])
    if not lo <= hi:
        raise CliArgumentError("sigma-min must not exceed sigma-max")
    if p["steps"] < 1 or (p["steps"] == 1 and lo != hi):
        raise CliArgumentError("steps must be at least 2 for a range")
    rows = sweep_rows(lo, hi, p["steps"])
    if p.get("svg"):
        with open(p["svg"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_sweep_svg(rows))
    if cfg.fmt == "svg":
        return render_sweep_svg(rows)
    if cfg.fmt == "json":
        return json.dumps([dict(zip(SWEEP_HEADER, r)) for r in rows], indent=2) + "\n"
    return format_sweep_csv(rows)


def cmd_adversary(cfg: RunConfig) -> dict:
    p = cfg.params
    s = check_sigma(p["sigma"])
    m = parse_mechanism(p["mechanism"])
    cert = adversary.worst_case_ratio(s, m, alpha=p["alpha"], grid=cfg.grid())
    return cert.to_dict()


def cmd_bayes(cfg: RunConfig) -> dict:
    p = cfg.params
    s = check_sigma(p["sigma"])
    m = closedform.bayes_transfer(s, p["alpha_exp"], p["c_bar"])
    prior = bayes.PowerPrior(p["alpha_exp"], p["c_bar"])
    ratio = bayes.expected_linear_ratio(s, prior, m, p["nodes"])
    return {"z": m.z, "intercept": m.intercept, "expected_ratio": ratio,
            "limit": closedform.sigma_ratio(s)}


def cmd_saddle(cfg: RunConfig) -> dict:
    s = check_sigma(cfg.params["sigma"])
    return bayes.saddle_verify(s, cfg.params["nodes"]).to_dict()


def cmd_benchmark(cfg: RunConfig) -> dict:
    s = check_sigma(cfg.params["sigma"])
    return bayes.bayes_benchmark_check(s, cfg.params["nodes"]).to_dict()


def cmd_markup(cfg: RunConfig) -> dict:
    s = check_sigma(cfg.params["sigma"], "pricing")
    markup, guarantee = closedform.markup_rule(s)
    return {"markup": markup, "guarantee": guarantee}


def cmd_transform(cfg: RunConfig) -> dict:
    p = cfg.params
    u = parse_utility(p["utility"])
    costs = [parse_cost(c) for c in p["cost"]]
    if not costs:
        raise CliArgumentError("give at least one --cost")
    if not 0 < p["q_lo"] < p["q_hi"]:
        raise CliArgumentError("need 0 < q-lo < q-hi")
    grid = GridSpec(p["q_lo"], p["q_hi"], p["points"], "log")
    samples = costs if p["verify"] else None
    return transform.general_guarantee(u, costs, grid, samples).to_dict()


COMMANDS = {
    "share": cmd_share,
    "sweep": cmd_sweep,
    "adversary": cmd_adversary,
    "bayes": cmd_bayes,
    "saddle": cmd_saddle,
    "benchmark": cmd_benchmark,
    "markup": cmd_markup,
    "transform": cmd_transform,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robustprocure", description="Robust procurement computations.")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--out", help="write output to this file instead of stdout")
        return sp

    sp = add("share", "optimal constant share and its guarantee")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--alpha", type=float, default=0.0, help="weight on seller profit")

    sp = add("sweep", "table of shares and guarantees over a sigma grid")
    sp.add_argument("--sigma-min", type=float, default=0.01)
    sp.add_argument("--sigma-max", type=float, default=0.99)
    sp.add_argument("--steps", type=int, default=99)
    sp.add_argument("--format", dest="fmt", choices=("csv", "json", "svg"), default="csv")
    sp.add_argument("--svg", help="also write the two charts to this SVG file")

    sp = add("adversary", "worst-case cost search against a mechanism")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--mechanism", required=True, help="share:Z | affine:Z:I | table:PATH")
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--grid-n", type=int, help="seller search grid size")

    sp = add("bayes", "expected ratio of the optimal tariff under a power prior")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--alpha-exp", type=float, required=True)
    sp.add_argument("--c-bar", type=float, required=True)
    sp.add_argument("--nodes", type=int, default=200)

    for name, text in (("saddle", "verify the randomized-share saddle point"),
                       ("benchmark", "constant shares against the Bayes-optimal tariff")):
        sp = add(name, text)
        sp.add_argument("--sigma", type=float, required=True)
        sp.add_argument("--nodes", type=int, default=200)

    sp = add("markup", "constant-markup pricing rule")
    sp.add_argument("--sigma", type=float, required=True)

    sp = add("transform", "guarantee for a general utility")
    sp.add_argument("--utility", required=True, help="power:S | log1p | table:PATH")
    sp.add_argument("--cost", action="append", default=[],
                    help="linear:C | kinked:Q:G | table:PATH (repeatable)")
    sp.add_argument("--q-lo", type=float, default=1e-3)
    sp.add_argument("--q-hi", type=float, default=1e3)
    sp.add_argument("--points", type=int, default=401)
    sp.add_argument("--verify", action="store_true",
                    help="check the guarantee on the given costs")
    return parser


def config_from_args(argv) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    name = args.pop("subcommand")
    out = args.pop("out", None)
    grid_n = args.pop("grid_n", None)
    fmt = args.pop("fmt", "csv" if name == "sweep" else "json")
    return RunConfig(name, args, grid_n, out, fmt)


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _error_payload(exc: Exception) -> str:
    detail = str(exc) or type(exc).__name__
    short = re.split(r"\s*[\[(:]", detail, maxsplit=1)[0].strip() or detail
    return json.dumps({"error": short, "detail": f"{type(exc).__name__}: {detail}"}) + "\n"


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        result = COMMANDS[cfg.subcommand](cfg)
    except NumericError as exc:
        sys.stdout.write(_error_payload(exc))
        return EXIT_NUMERIC
    except (ValueError, ZeroDivisionError) as exc:
        sys.stdout.write(_error_payload(exc))
        return EXIT_ARGUMENT
    text = result if isinstance(result, str) else json.dumps(_json_safe(result), indent=2) + "\n"
    _emit(text, cfg.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
