"""Command-line driver: config parsing, experiment orchestration and output.

Config files are line oriented, ``key = value`` under ``[section]`` headers::

    [potential]
    segment = 0 1 50        # r_lo r_hi value, repeated
    r1 = 1
    lambda_plus = 50

    [experiment]
    densities = 1e-3 1e-4   # values of a^3 rho
    N = 64
    seeds = 0 1 2

    [constants]
    t = 1
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import io
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from dilute_bose import __version__
from dilute_bose.lower_bound import assemble_lemma1, default_c_constants
from dilute_bose.potentials import RadialPotential
from dilute_bose.scattering import (
    ScatteringError,
    check_corollary2_narrowness,
    check_theorem2,
    scattering_length,
    solve_zero_energy,
)
from dilute_bose.trial_state import TrialStateError
from dilute_bose.vmc import estimate_upper_bound

WORKERS_ENV = "DILUTE_BOSE_WORKERS"
SUBCOMMANDS = ("scatter", "check", "upper", "lower", "sweep")
SCATTER_ROWS = 1000


class ConfigViolation(Exception):
    def __init__(self, line: int | None, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line else message)


class UnknownKey(ConfigViolation):
    pass


class MissingRequired(ConfigViolation):
    pass


class InvariantViolation(ConfigViolation):
    pass


class ConfigError(ValueError):
    """All violations found in a config, in line order."""

    def __init__(self, violations: list[ConfigViolation]):
        self.violations = violations
        super().__init__("\n".join(str(v) for v in violations))


@dataclass(frozen=True)
class ExperimentConfig:
    segments: tuple[tuple[float, float, float], ...]
    densities: tuple[float, ...]
    N: int
    seeds: tuple[int, ...]
    n_samples: int = 10_000
    n_burn_in: int = 500
    R0: float | None = None
    r1: float = 0.0
    lambda_plus: float = 0.0
    lambda_minus: float | None = None
    a: float | None = None
    step: float | None = None
    t: float = 1.0
    c1: float | None = None
    c2: float | None = None
    const_C: float = 1.0
    const: float = 1.0
    r_max: float | None = None
    n_steps: int = 100_000
    output_path: str | None = None

    def potential(self) -> RadialPotential:
        R0 = self.R0 if self.R0 is not None else (self.segments[-1][1] if self.segments else 0.0)
        return RadialPotential(self.segments, R0=R0, r1=self.r1, lambda_plus=self.lambda_plus,
                               lambda_minus=self.lambda_minus)


# section -> key -> (field, kind); kinds: float, int, ofloat (optional), floats, ints, str
_SCHEMA = {
    "potential": {
        "R0": ("R0", "ofloat"), "r1": ("r1", "float"),
        "lambda_plus": ("lambda_plus", "float"), "lambda_minus": ("lambda_minus", "ofloat"),
    },
    "experiment": {
        "densities": ("densities", "floats"), "N": ("N", "int"), "seeds": ("seeds", "ints"),
        "n_samples": ("n_samples", "int"), "n_burn_in": ("n_burn_in", "int"),
        "a": ("a", "ofloat"), "step": ("step", "ofloat"), "output_path": ("output_path", "str"),
    },
    "constants": {
        "t": ("t", "float"), "c1": ("c1", "ofloat"), "c2": ("c2", "ofloat"),
        "const_C": ("const_C", "float"), "const": ("const", "float"),
    },
    "scattering": {"r_max": ("r_max", "ofloat"), "n_steps": ("n_steps", "int")},
}
_REQUIRED = (("experiment", "densities"), ("experiment", "N"), ("experiment", "seeds"))


def _convert(kind: str, raw: str):
    items = raw.replace(",", " ").split()
    if kind in ("float", "ofloat"):
        (item,) = items
        return float(item)
    if kind == "int":
        (item,) = items
        return int(item)
    if kind == "floats":
        return tuple(float(x) for x in items)
    if kind == "ints":
        return tuple(int(x) for x in items)
    return raw.strip()


def _strip_comment(line: str) -> str:
    for mark in ("#", ";"):
        pos = line.find(mark)
        if pos >= 0:
            line = line[:pos]
    return line.strip()


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every violation found."""
    errors: list[ConfigViolation] = []
    values: dict = {}
    seen: dict[tuple[str, str], int] = {}
    segments: list[tuple[int, tuple[float, float, float]]] = []
    section = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        line = _strip_comment(line)
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                errors.append(UnknownKey(lineno, f"unknown section [{section}]"))
            continue
        key, sep, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if not sep:
            errors.append(InvariantViolation(lineno, f"expected 'key = value', got {line!r}"))
            continue
        if section is None:
            errors.append(UnknownKey(lineno, f"key {key!r} outside any section"))
            continue
        if section not in _SCHEMA:
            continue
        if section == "potential" and key == "segment":
            try:
                lo, hi, val = (float(x) for x in raw.replace(",", " ").split())
            except ValueError:
                errors.append(InvariantViolation(lineno, f"segment needs 'r_lo r_hi value', got {raw!r}"))
                continue
            segments.append((lineno, (lo, hi, val)))
            continue
        if key not in _SCHEMA[section]:
            errors.append(UnknownKey(lineno, f"unknown key {key!r} in [{section}]"))
            continue
        if (section, key) in seen:
            errors.append(UnknownKey(lineno, f"duplicate key {key!r} in [{section}]: lines {seen[section, key]} and {lineno}"))
            continue
        seen[section, key] = lineno
        name, kind = _SCHEMA[section][key]
        try:
            values[name] = _convert(kind, raw)
        except ValueError:
            errors.append(InvariantViolation(lineno, f"cannot read {key!r} from {raw!r}"))

    for sec, key in _REQUIRED:
        if (sec, key) not in seen:
            errors.append(MissingRequired(None, f"missing required key {key!r} in [{sec}]"))
    if not segments:
        errors.append(MissingRequired(None, "missing required key 'segment' in [potential]"))

    def line_of(sec, key):
        return seen.get((sec, key))

    for d in values.get("densities", ()):
        if not 0 < d < 1:
            errors.append(InvariantViolation(line_of("experiment", "densities"), f"density {d} must lie in (0, 1)"))
    if "densities" in values and not values["densities"]:
        errors.append(InvariantViolation(line_of("experiment", "densities"), "densities is empty"))
    if "N" in values and values["N"] < 2:
        errors.append(InvariantViolation(line_of("experiment", "N"), f"N={values['N']} must be at least 2"))
    if "seeds" in values and not values["seeds"]:
        errors.append(InvariantViolation(line_of("experiment", "seeds"), "at least one seed is required"))
    for key in ("n_samples", "n_burn_in"):
        if key in values and values[key] < (1 if key == "n_samples" else 0):
            errors.append(InvariantViolation(line_of("experiment", key), f"{key}={values[key]} is out of range"))
    for key in ("t", "a", "step"):
        sec = "constants" if key == "t" else "experiment"
        if values.get(key) is not None and not values[key] > 0:
            errors.append(InvariantViolation(line_of(sec, key), f"{key} must be positive"))
    for key in ("c1", "c2"):
        if values.get(key) is not None and values[key] < 1:
            errors.append(InvariantViolation(line_of("constants", key), f"{key} must be at least 1"))

    config = None
    if not errors:
        config = ExperimentConfig(segments=tuple(s for _, s in segments), **values)
        try:
            config.potential()
        except ValueError as exc:
            errors.append(InvariantViolation(segments[0][0], f"invalid potential: {exc}"))
    if errors:
        errors.sort(key=lambda e: e.line or 0)
        raise ConfigError(errors)
    return config


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def format_config(config: ExperimentConfig) -> str:
    """Render a config so that ``parse_config(format_config(c)) == c``."""
    out = ["[potential]"]
    out += [f"segment = {_fmt(lo)} {_fmt(hi)} {_fmt(val)}" for lo, hi, val in config.segments]
    for section, keys in _SCHEMA.items():
        if section != "potential":
            out += ["", f"[{section}]"]
        for key, (name, kind) in keys.items():
            val = getattr(config, name)
            if val is None:
                continue
            if kind in ("floats", "ints"):
                val = " ".join(_fmt(x) for x in val)
            out.append(f"{key} = {_fmt(val)}")
    return "\n".join(out) + "\n"


def config_digest(config: ExperimentConfig) -> str:
    return hashlib.sha256(format_config(config).encode()).hexdigest()


def header(config: ExperimentConfig, subcommand: str) -> str:
    seeds = ",".join(str(s) for s in config.seeds)
    return f"# dilute_bose {__version__} {subcommand} config_sha256={config_digest(config)} seeds={seeds}\n"


def g(x: float) -> str:
    return format(float(x), ".17g")


def _physical_a(config: ExperimentConfig) -> float:
    return config.a if config.a is not None else scattering_length(config.potential())


def _upper_task(args):
    config, a3rho, seed = args
    a = _physical_a(config)
    est = estimate_upper_bound(config.potential(), config.a, a3rho / a**3, config.N, seed=seed,
                               n_samples=config.n_samples, n_burn_in=config.n_burn_in, step=config.step)
    return a3rho, est


def _run_upper(config: ExperimentConfig, workers: int):
    tasks = [(config, d, s) for d in config.densities for s in config.seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_upper_task, tasks))
    return [_upper_task(t) for t in tasks]


UPPER_COLUMNS = "a3rho,N,L,mean,stderr,ratio,Y_up,acceptance_rate,seed"


def _upper_row(a3rho, e) -> str:
    return ",".join([g(a3rho), str(e.N), g(e.L), g(e.mean), g(e.stderr), g(e.ratio_to_bogoliubov),
                     g(e.Y_up), g(e.acceptance_rate), str(e.seed)])


def _lower_report(config: ExperimentConfig, a3rho: float):
    a = _physical_a(config)
    return assemble_lemma1(config.potential(), config.a, a3rho / a**3, const_C=config.const_C,
                           t=config.t, const=config.const)


def _condition_report(config: ExperimentConfig):
    v = config.potential()
    c1, c2 = config.c1, config.c2
    if c1 is None or c2 is None:
        if v.r1 > 0:
            d1, d2 = default_c_constants(v.R0 / v.r1)
        elif v.lambda_minus == 0:
            # without a negative part the covering constants play no role
            d1, d2 = 1.0, 1.0
        else:
            raise ValueError("declare r1 > 0 or give c1 and c2 in [constants]")
        c1 = d1 if c1 is None else c1
        c2 = d2 if c2 is None else c2
    return check_theorem2(v, config.t, c1, c2)


def run(config: ExperimentConfig, subcommand: str, out=None, workers: int = 1) -> int:
    """Execute ``subcommand``; output goes to ``out`` (a text stream) and the exit code is returned."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    out = sys.stdout if out is None else out
    buf = io.StringIO()
    buf.write(header(config, subcommand))
    status = 0

    if subcommand == "scatter":
        sol = solve_zero_energy(config.potential(), r_max=config.r_max, n_steps=config.n_steps)
        buf.write(f"# a={g(sol.a)}\n")
        buf.write("r,u,f\n")
        stride = max(1, (len(sol.grid) - 1) // SCATTER_ROWS)
        f = sol.f
        for i in range(0, len(sol.grid), stride):
            buf.write(f"{g(sol.grid[i])},{g(sol.u[i])},{g(f[i])}\n")
    elif subcommand == "check":
        rep = _condition_report(config)
        buf.write(rep.as_text())
        buf.write(f"negative_part_l1={g(check_corollary2_narrowness(config.potential()))}\n")
        status = 0 if rep.passed else 1
    elif subcommand == "upper":
        buf.write(UPPER_COLUMNS + "\n")
        for a3rho, est in _run_upper(config, workers):
            buf.write(_upper_row(a3rho, est) + "\n")
    elif subcommand == "lower":
        for a3rho in config.densities:
            rep = _lower_report(config, a3rho)
            buf.write(f"# density a3rho={g(a3rho)}\n")
            buf.write(rep.as_text())
            buf.write(rep.table_csv())
    else:
        floors = {d: _lower_report(config, d) for d in config.densities}
        buf.write(UPPER_COLUMNS + ",Y_low,floor_per_particle,floor_ratio,epsilon_admissible\n")
        for a3rho, est in _run_upper(config, workers):
            rep = floors[a3rho]
            bog = 4.0 * math.pi * rep.a * rep.rho
            buf.write(_upper_row(a3rho, est) + f",{g(rep.Y_low)},{g(rep.floor_per_particle)},"
                      f"{g(rep.floor_per_particle / bog)},{str(rep.epsilon_admissible).lower()}\n")

    out.write(buf.getvalue())
    return status


def _default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dilute-bose", description="Dilute Bose gas energy bounds.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--out", help="output file (default: output_path from config, else stdout)")
        if name == "check":
            sp.add_argument("--t", type=float, help="override t")
        if name in ("upper", "sweep"):
            sp.add_argument("--seeds", type=lambda s: tuple(int(x) for x in s.split(",")),
                            help="comma-separated seeds")
            sp.add_argument("--n-samples", type=int)
            sp.add_argument("--n-burn-in", type=int)
            sp.add_argument("--workers", type=int, default=None,
                            help=f"parallel chains (default ${WORKERS_ENV} or 1)")
        if name == "scatter":
            sp.add_argument("--n-steps", type=int)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
    except ConfigError as exc:
        print(f"error: invalid config {args.config}:\n{exc}", file=sys.stderr)
        return 2

    overrides = {}
    for flag, name in (("t", "t"), ("seeds", "seeds"), ("n_samples", "n_samples"),
                       ("n_burn_in", "n_burn_in"), ("n_steps", "n_steps")):
        val = getattr(args, flag, None)
        if val is not None:
            overrides[name] = val
    if overrides:
        config = dataclasses.replace(config, **overrides)
    workers = getattr(args, "workers", None) or _default_workers()
    out_path = args.out or config.output_path

    buf = io.StringIO()
    try:
        status = run(config, args.subcommand, out=buf, workers=workers)
    except (ScatteringError, TrialStateError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if out_path:
        try:
            with open(out_path, "w") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            print(f"error: cannot write {out_path}: {exc.strerror}", file=sys.stderr)
            return 2
        if args.subcommand == "scatter":
            # the scattering length also goes to the terminal
            line = next(ln for ln in buf.getvalue().splitlines() if ln.startswith("# a="))
            print(line[2:])
    else:
        sys.stdout.write(buf.getvalue())
    return status


if __name__ == "__main__":
    sys.exit(main())
