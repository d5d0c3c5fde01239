"""Command-line front end: ``hslab <subcommand> [flags]``.

Every subcommand accepts the parameter flags (-d -k -p -q -a -b --gamma),
the global flags and an optional ``--config`` TOML file whose flat keys
match the long flag names (``max-iters`` or ``max_iters``).  Flags win over
the file.  Data goes to ``--out`` or standard output; diagnostics go to
standard error.

Exit codes: 0 success, 2 validation error, 3 solver diverged, 4 optimal
constant not positive.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from . import families, functionals, mesh, minimizer, scanner
from .mesh import Grading, ProfileGrid
from .minimizer import Diverged, MeshSpec, NotPositive, SolverConfig
from .params import InadmissibleBase, OutOfRange, ParamError, ParamSet, classify

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_NOT_POSITIVE = 0, 2, 3, 4
MIN_NODES, MAX_NODES = 8, 4096


class ParseError(ValueError):
    pass


class Command(str, Enum):
    CLASSIFY = "classify"
    CONSTANT = "constant"
    MAZYA = "mazya"
    RADIAL = "radial"
    FAMILY = "family"
    VERIFY_TB = "verify-tb"
    SWEEP_GAMMA = "sweep-gamma"
    SWEEP_B = "sweep-b"
    TABLE = "table"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"
    MARKDOWN = "markdown"


@dataclass
class RunConfig:
    command: Command
    params: ParamSet | None
    solver: SolverConfig
    mesh: MeshSpec
    output_path: str | None = None
    format: OutputFormat = OutputFormat.JSON
    options: dict = field(default_factory=dict)


PARAM_KEYS = ("d", "k", "p", "q", "a", "b", "gamma")
# keys that take lists; the flags accept comma-separated values
LIST_KEYS = ("gammas", "bs", "values")


def _add_shared(parser: argparse.ArgumentParser):
    grp = parser.add_argument_group("parameters")
    grp.add_argument("-d", dest="d", type=str)
    grp.add_argument("-k", dest="k", type=str)
    grp.add_argument("-p", dest="p", type=str)
    grp.add_argument("-q", dest="q", type=str, help="number, 'pstar' or 'pstar_eff'")
    grp.add_argument("-a", dest="a", type=str)
    grp.add_argument("-b", dest="b", type=str)
    grp.add_argument("--gamma", dest="gamma", type=str)
    glob = parser.add_argument_group("global")
    glob.add_argument("--config", help="TOML file with flat keys named like the long flags")
    glob.add_argument("--out", help="output file (default: standard output)")
    glob.add_argument("--format", choices=[f.value for f in OutputFormat])
    glob.add_argument("--seed", type=str)
    glob.add_argument("--nr", type=str)
    glob.add_argument("--ns", type=str)
    glob.add_argument("--rmax", type=str)
    glob.add_argument("--grading", choices=[g.value for g in Grading])
    glob.add_argument("--max-iters", dest="max_iters", type=str)
    glob.add_argument("--tol", type=str)
    glob.add_argument("--init", choices=[i.value for i in minimizer.InitProfile])
    glob.add_argument("--trace", help="also write the descent trace CSV here")
    glob.add_argument("--workers", type=str, help="parallel sweep workers")
    glob.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hslab", description="Cylindrical Hardy-Sobolev constants")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        Command.CLASSIFY: "regime and attainability verdict",
        Command.CONSTANT: "estimate S_{a,b,gamma}(q) by descent",
        Command.MAZYA: "estimate the Maz'ya constant M_a(q)",
        Command.RADIAL: "minimise over radial profiles on a 1D grid",
        Command.FAMILY: "evaluate a competitor family over a list of parameters",
        Command.VERIFY_TB: "residual of the T_b integration-by-parts identity",
        Command.SWEEP_GAMMA: "sweep gamma",
        Command.SWEEP_B: "bottom-case sweep over b (p = 2)",
        Command.TABLE: "regime table for a list of parameter sets",
    }
    subs = {}
    for cmd, text in helps.items():
        subs[cmd] = sub.add_parser(cmd.value, help=text)
        _add_shared(subs[cmd])
    fam = subs[Command.FAMILY]
    fam.add_argument("--kind", choices=[k.value for k in families.FamilyKind])
    fam.add_argument("--values", help="comma-separated h, t or epsilon values")
    fam.add_argument("--base", help="'bump', 'talenti' or a profile CSV path")
    fam.add_argument("--radius", type=str, help="bump radius or Talenti scale")
    fam.add_argument("--radii", help="cutoff radii 'lo,hi' for RadialPower")
    subs[Command.VERIFY_TB].add_argument("--profile", help="profile CSV (default: Talenti bubble)")
    subs[Command.SWEEP_GAMMA].add_argument("--gammas", help="comma-separated gamma values")
    subs[Command.SWEEP_B].add_argument("--bs", help="comma-separated b values")
    subs[Command.TABLE].add_argument("--rows", help="';'-separated 'd,k,p,q,a,b,gamma' tuples")
    return parser


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ParseError(f"config file {path!r} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return {key.replace("-", "_"): val for key, val in data.items()}


def _number(value, key: str, kind=float):
    try:
        out = kind(value)
    except (TypeError, ValueError):
        raise ParseError(f"{key}: expected a number, got {value!r}") from None
    if kind is int and float(value) != out:
        raise ParseError(f"{key}: expected an integer, got {value!r}")
    return out


def _int(value, key: str) -> int:
    if isinstance(value, str):
        value = value.strip()
        try:
            return int(value)
        except ValueError:
            raise ParseError(f"{key}: expected an integer, got {value!r}") from None
    return _number(value, key, int)


def _float_list(value, key: str) -> list[float]:
    if isinstance(value, str):
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        raise ParseError(f"{key}: expected a list of numbers")
    return [_number(v, key) for v in value]


def _merged(args: argparse.Namespace) -> dict:
    values = _load_toml(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("command", "config") or val is None or val is False:
            continue
        values[key] = val
    return values


def _params(values: dict) -> ParamSet:
    for key in ("d", "k", "p", "q"):
        if key not in values:
            raise ParseError(f"missing parameter {key!r} (flag -{key} or config key {key!r})")
    data = {"d": _int(values["d"], "d"), "k": _int(values["k"], "k"), "p": _number(values["p"], "p"),
            "q": values["q"] if isinstance(values["q"], str) else _number(values["q"], "q")}
    for key in ("a", "b", "gamma"):
        if key in values:
            data[key] = _number(values[key], key)
    return ParamSet.from_dict(data)


def parse_config(argv=None) -> RunConfig:
    """Parse flags (and the optional TOML file they name) into a validated RunConfig."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        raise ParseError("invalid command line") if exc.code else exc
    command = Command(args.command)
    values = _merged(args)
    params = None if command is Command.TABLE else _params(values)

    cfg_kw = {}
    if "max_iters" in values:
        cfg_kw["max_iters"] = _int(values["max_iters"], "max-iters")
    if "tol" in values:
        cfg_kw["tol_rel"] = _number(values["tol"], "tol")
    if "seed" in values:
        cfg_kw["seed"] = _int(values["seed"], "seed")
    solver = SolverConfig(**cfg_kw)

    nr = _int(values.get("nr", 128), "nr")
    ns = _int(values.get("ns", nr), "ns")
    for key, n in (("nr", nr), ("ns", ns)):
        if not MIN_NODES <= n <= MAX_NODES:
            raise ParseError(f"{key}={n} outside [{MIN_NODES}, {MAX_NODES}]")
    rmax = _number(values.get("rmax", 20.0), "rmax")
    if not rmax > 0:
        raise ParseError(f"rmax must be positive, got {rmax}")
    grading = Grading.parse(values.get("grading", Grading.LOG_GRADED.value))
    mesh_spec = MeshSpec(nr, ns, rmax, grading)

    default_fmt = {Command.TABLE: OutputFormat.MARKDOWN, Command.CLASSIFY: OutputFormat.JSON}
    fmt = OutputFormat(values.get("format", default_fmt.get(command, OutputFormat.CSV).value))
    if fmt is OutputFormat.MARKDOWN and command is not Command.TABLE:
        raise ParseError("--format markdown is only available for the table command")

    options = {}
    for key in LIST_KEYS:
        if key in values:
            options[key] = _float_list(values[key], key)
    for key in ("kind", "base", "profile", "init", "trace"):
        if key in values:
            options[key] = str(values[key])
    if "radius" in values:
        options["radius"] = _number(values["radius"], "radius")
    if "radii" in values:
        radii = _float_list(values["radii"], "radii")
        if len(radii) != 2:
            raise ParseError("radii: expected two numbers 'lo,hi'")
        options["radii"] = tuple(radii)
    if "workers" in values:
        options["workers"] = _int(values["workers"], "workers")
    if "rows" in values:
        options["rows"] = _table_rows(values["rows"])
    if values.get("verbose"):
        options["verbose"] = True
    return RunConfig(command, params, solver, mesh_spec, values.get("out"), fmt, options)


def _table_rows(raw) -> list[ParamSet]:
    if isinstance(raw, str):
        raw = [chunk.split(",") for chunk in raw.split(";") if chunk.strip()]
    rows = []
    for n, entry in enumerate(raw, 1):
        if isinstance(entry, dict):
            rows.append(_params(entry))
            continue
        if len(entry) != 7:
            raise ParseError(f"rows entry {n}: expected d,k,p,q,a,b,gamma, got {len(entry)} values")
        rows.append(_params(dict(zip(PARAM_KEYS, entry))))
    return rows


# output helpers

def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(val) -> str:
    if isinstance(val, bool):
        return str(val).lower()
    if isinstance(val, float):
        return f"{val:.17g}"
    return str(val)


def _record(fields: dict, fmt: OutputFormat) -> str:
    if fmt is OutputFormat.JSON:
        return json.dumps(fields, indent=2) + "\n"
    return _csv(list(fields), [[_fmt(v) for v in fields.values()]])


def _emit(config: RunConfig, text: str):
    if config.output_path:
        Path(config.output_path).write_text(text)
    else:
        sys.stdout.write(text)


def _result_fields(res: minimizer.MinimizeResult, ps: ParamSet) -> dict:
    return {
        "estimate": res.constant_estimate,
        "iterations": res.iterations,
        "converged": res.converged,
        "concentration_flag": res.concentration_flag.value,
        "caveat": functionals.SYMMETRIC_CLASS,
        **{key: getattr(ps, key) for key in PARAM_KEYS},
    }


def _base_profile(config: RunConfig) -> ProfileGrid:
    ps = config.params
    source = config.options.get("base", "bump")
    grid = config.mesh.build(ps.d, ps.k)
    if source == "bump":
        return families.compact_bump(grid, config.options.get("radius", grid.R_max / 4))
    if source == "talenti":
        return families.talenti_profile(grid, config.options.get("radius", grid.R_max / 20), ps.p)
    return ProfileGrid.from_csv(source, ps.d, ps.k)


def _run_minimize(config: RunConfig, func) -> str:
    init = config.options.get("init", minimizer.InitProfile.GAUSSIAN_BUMP.value)
    res = func(config.params, config.solver, init, config.mesh)
    if "trace" in config.options:
        res.trace_csv(config.options["trace"])
    return _record(_result_fields(res, config.params), config.format)


def _run_sweep(config: RunConfig, result: scanner.SweepResult) -> str:
    if config.format is OutputFormat.JSON:
        data = result.sidecar()
        data["points"] = [{"param": pt.param, "estimate": pt.estimate, "converged": pt.converged,
                           "flag": pt.flag} for pt in result.points]
        return json.dumps(data, indent=2, default=float) + "\n"
    if config.output_path:
        Path(config.output_path + ".json").write_text(result.to_json())
    return result.to_csv()


def run(config: RunConfig) -> int:
    """Execute one command and write its report; returns the exit status."""
    cmd, ps = config.command, config.params
    opts = config.options
    if cmd is Command.CLASSIFY:
        verdict = classify(ps)
        fields = {**{key: getattr(ps, key) for key in PARAM_KEYS}, **verdict.to_dict()}
        if config.format is OutputFormat.CSV:
            fields["citations"] = "; ".join(verdict.citations)
        text = _record(fields, config.format)
    elif cmd is Command.CONSTANT:
        text = _run_minimize(config, minimizer.minimize_quotient)
    elif cmd is Command.MAZYA:
        text = _run_minimize(config, minimizer.estimate_mazya)
    elif cmd is Command.RADIAL:
        res = minimizer.minimize_radial(ps, config.solver)
        fields = _result_fields(res, ps)
        fields["closed_form"] = minimizer.radial_closed_form(ps)
        text = _record(fields, config.format)
    elif cmd is Command.FAMILY:
        kind = families.FamilyKind(opts.get("kind", families.FamilyKind.TRANSLATE_ALONG_SIGMA0.value))
        values = opts.get("values")
        if not values:
            raise ParseError("family needs --values")
        if kind is families.FamilyKind.RADIAL_POWER:
            base = opts.get("radii", (1e-4, 1e4))
        elif kind is families.FamilyKind.TALENTI_BUBBLE:
            base = config.mesh.build(ps.d, ps.k)
        else:
            base = _base_profile(config)
        rows = families.family_sweep(ps, kind, base, values)
        if config.format is OutputFormat.JSON:
            text = json.dumps([{"kind": r.kind.value, "h": r.parameter, "quotient": r.quotient,
                                "quad_error": r.quad_error} for r in rows], indent=2) + "\n"
        else:
            text = families.rows_to_csv(rows)
    elif cmd is Command.VERIFY_TB:
        grid = config.mesh.build(ps.d, ps.k)
        profile = (ProfileGrid.from_csv(opts["profile"], ps.d, ps.k) if "profile" in opts
                   else families.talenti_profile(grid, grid.R_max / 20, 2.0))
        residual = functionals.verify_tb_identity(ps, profile)
        text = _record({"residual": residual, **{key: getattr(ps, key) for key in PARAM_KEYS}}, config.format)
    elif cmd is Command.SWEEP_GAMMA:
        gammas = opts.get("gammas")
        if gammas is None:
            raise ParseError("sweep-gamma needs --gammas")
        result = scanner.sweep_gamma(ps, gammas, config.solver, mesh_spec=config.mesh,
                                     workers=opts.get("workers", 1))
        text = _run_sweep(config, result)
    elif cmd is Command.SWEEP_B:
        bs = opts.get("bs")
        if bs is None:
            raise ParseError("sweep-b needs --bs")
        if ps.p != 2:
            raise ParamError(f"sweep-b needs p = 2, got p={ps.p:g}")
        limit = 2 * ps.h_of(ps.a)
        for b in bs:
            if not b < limit:
                raise InadmissibleBase(f"b={b:g} violates b < 2H_a = {limit:g}")
        result = scanner.sweep_bottom_b(ps, bs, config.solver, mesh_spec=config.mesh,
                                        workers=opts.get("workers", 1))
        text = _run_sweep(config, result)
    else:
        rows = opts.get("rows", [])
        fmt = "csv" if config.format is OutputFormat.CSV else "markdown"
        text = scanner.regime_table(rows, fmt)
    _emit(config, text)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")
    try:
        config = parse_config(argv)
        if config.options.get("verbose"):
            logging.getLogger().setLevel(logging.INFO)
        return run(config)
    except NotPositive as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_POSITIVE
    except Diverged as exc:
        print(f"error: solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ParseError, ParamError, InadmissibleBase, OutOfRange, mesh.BadResolution,
            families.BadRadii, families.SupportOverlap, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
