"""Command-line interface: ``gpfewshot {bound,figure,simulate,validate}``.

Exit codes: 0 success, 1 internal error, 2 domain or configuration error,
3 resource budget exceeded, 4 validation failure.  Errors are reported on
stderr as one JSON object.
"""

import json
import math
import os
import sys

import click

from . import bounds, figures, output
from .errors import (
    ConfigError,
    ContractError,
    DomainError,
    ExhaustedError,
    GPFewShotError,
    InconsistentObservationError,
    NumericalError,
    ResourceError,
)

EXIT_OK, EXIT_INTERNAL, EXIT_DOMAIN, EXIT_RESOURCE, EXIT_VALIDATION = 0, 1, 2, 3, 4

BOUND_KINDS = ("thm1", "cor1", "lower-iid", "lower-pi", "thm2", "grunewalder", "required-t")

CONFIG_SCHEMA = {
    "instance": None,  # validated by SimConfig against the source kind
    "policy": {"kind": True, "tie_break": False},
    "simulation": {"episodes": True, "master_seed": False, "threads": False},
    "output": {"report": False, "trajectories": False, "trajectories_per_file": False},
}


class CliFailure(Exception):
    def __init__(self, code, kind, message, **extra):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.extra = extra


def _fail_from(exc):
    if isinstance(exc, CliFailure):
        return exc
    key = getattr(exc, "key_path", None)
    extra = {"key_path": key} if key else {}
    if isinstance(exc, ResourceError):
        return CliFailure(EXIT_RESOURCE, "resource", str(exc), **extra)
    if isinstance(exc, (DomainError, ConfigError, ContractError, ExhaustedError, InconsistentObservationError)):
        return CliFailure(EXIT_DOMAIN, type(exc).__name__, str(exc), **extra)
    if isinstance(exc, NumericalError):
        return CliFailure(EXIT_INTERNAL, "numerical", str(exc))
    if isinstance(exc, GPFewShotError):
        cause = getattr(exc, "cause", None)
        if cause is not None and not isinstance(cause, GPFewShotError):
            return CliFailure(EXIT_INTERNAL, type(exc).__name__, str(exc))
        inner = _fail_from(cause) if cause is not None else None
        code = inner.code if inner else EXIT_INTERNAL
        return CliFailure(code, type(exc).__name__, str(exc), **extra)
    return CliFailure(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}")


def _emit_error(fail):
    payload = {"error": fail.kind, "message": str(fail), "exit_code": fail.code}
    payload.update(fail.extra)
    click.echo(json.dumps(payload, sort_keys=True, ensure_ascii=False), err=True)


# ---------------------------------------------------------------------------
# shared options


def _settings(ctx, seed=None, threads=None, out=None):
    """Merge global and per-command options; the command-level value wins."""
    obj = ctx.find_root().obj or {}
    return {
        "seed": seed if seed is not None else obj.get("seed"),
        "threads": threads if threads is not None else obj.get("threads"),
        "out": out if out is not None else obj.get("out"),
    }


def common_options(f):
    f = click.option("--out", type=click.Path(dir_okay=True), default=None,
                     help="Output file (or directory for figures and dumps).")(f)
    f = click.option("--threads", type=int, default=None,
                     help="Worker processes; GPFEWSHOT_THREADS overrides.")(f)
    f = click.option("--seed", type=int, default=None, help="Master seed.")(f)
    return f


def _threads(value):
    from .sim_harness import resolve_threads

    return resolve_threads(value)


def _number(text, name):
    """Parse ``1e20``-style numbers, keeping integral values exact."""
    if text is None:
        raise CliFailure(EXIT_DOMAIN, "DomainError", f"--{name} is required for this kind")
    try:
        if any(c in text for c in ".eEnN"):
            x = float(text)
            if math.isfinite(x) and x == math.floor(x) and abs(x) < 2**1023:
                return int(x)
            return x
        return int(text)
    except ValueError:
        raise CliFailure(EXIT_DOMAIN, "DomainError", f"--{name}: not a number: {text!r}") from None


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@common_options
@click.pass_context
def main_group(ctx, seed, threads, out):
    """Regret bounds and simulations for few-evaluation GP optimisation."""
    ctx.obj = {"seed": seed, "threads": threads, "out": out}


# ---------------------------------------------------------------------------
# bound


def evaluate_bound(kind, n=None, t=None, d=None, lk=None, sigma=None, target=None):
    """Return ``(inputs, value, extra)`` for a CLI bound kind."""
    if kind in ("thm1", "cor1", "lower-iid", "lower-pi"):
        inputs = {"N": _number(n, "n"), "T": _number(t, "t")}
        fn = {
            "thm1": bounds.thm1_regret_bound,
            "cor1": bounds.cor1_normreg_bound,
            "lower-iid": bounds.lower_bound_iid,
            "lower-pi": bounds.lower_bound_prior_independent,
        }[kind]
        return inputs, fn(inputs["N"], inputs["T"]), {}
    if kind == "thm2":
        inputs = {"D": _number(d, "d"), "T": _number(t, "t"), "L_k": _number(lk, "lk"),
                  "sigma": _number(sigma if sigma is not None else "1", "sigma")}
        value = bounds.thm2_continuous_bound(inputs["D"], inputs["T"], inputs["L_k"], inputs["sigma"])
        return inputs, value, {"grid_sides": bounds.thm2_grid_sides(inputs["D"], inputs["T"], inputs["L_k"])}
    if kind == "grunewalder":
        inputs = {"D": _number(d, "d"), "T": _number(t, "t"), "L_k": _number(lk, "lk")}
        return inputs, bounds.grunewalder_bound(inputs["D"], inputs["T"], inputs["L_k"]), {}
    inputs = {"N": _number(n, "n"), "target_normreg": float(_number(target, "target-normreg"))}
    value = bounds.required_T_bisection(inputs["N"], inputs["target_normreg"])
    return inputs, value, {"envelope": bounds.required_T_upper(inputs["N"], inputs["target_normreg"])}


@main_group.command("bound")
@click.option("--kind", required=True, type=click.Choice(BOUND_KINDS))
@click.option("--n", "n", default=None, help="Domain size N.")
@click.option("--t", "t", default=None, help="Horizon T.")
@click.option("--d", "d", default=None, help="Dimension D.")
@click.option("--lk", default=None, help="Lipschitz constant L_k.")
@click.option("--sigma", default=None, help="Standard deviation cap (default 1).")
@click.option("--target-normreg", "target", default=None, help="Target normreg for required-t.")
@common_options
@click.pass_context
def bound_cmd(ctx, kind, n, t, d, lk, sigma, target, seed, threads, out):
    """Evaluate one closed-form bound and print it as JSON."""
    opts = _settings(ctx, seed, threads, out)
    inputs, value, extra = evaluate_bound(kind, n, t, d, lk, sigma, target)
    doc = {"schema_version": output.SCHEMA_VERSION, "kind": kind, "inputs": inputs, "value": value}
    doc.update(extra)
    text = output.to_json(doc)
    click.echo(text, nl=False)
    if opts["out"]:
        output.write_atomic(opts["out"], text)


# ---------------------------------------------------------------------------
# figure


@main_group.command("figure")
@click.option("--figure", "figure", required=True, type=str, help="1, 2 or 3.")
@common_options
@click.pass_context
def figure_cmd(ctx, figure, seed, threads, out):
    """Write the data of figure 1, 2 or 3 as CSV.

    ``--out`` names a directory (created if needed) that receives
    ``figure1.csv``, ``figure2.csv`` or ``figure3_D.csv`` and
    ``figure3_T.csv``.  A path ending in ``.csv`` is used as the file name
    for figures 1 and 2.  Without ``--out`` the CSV goes to stdout.
    """
    opts = _settings(ctx, seed, threads, out)
    tables = figures.figure_tables(figure)
    path = opts["out"]
    if path is None:
        for header, rows in tables.values():
            click.echo(output.csv_text(header, rows), nl=False)
        return
    if path.endswith(".csv") and len(tables) == 1:
        targets = {name: path for name in tables}
    else:
        os.makedirs(path, exist_ok=True)
        targets = {name: os.path.join(path, f"{name}.csv") for name in tables}
    for name, (header, rows) in tables.items():
        output.write_atomic(targets[name], output.csv_text(header, rows))
        click.echo(targets[name])


# ---------------------------------------------------------------------------
# simulate


def load_config(path):
    """Read a TOML or JSON run configuration into a dict."""
    with open(path, "rb") as fh:
        raw = fh.read()
    ext = os.path.splitext(path)[1].lower()
    if ext == ".json":
        loaders = ("json",)
    elif ext == ".toml":
        loaders = ("toml",)
    else:
        loaders = ("json", "toml")
    err = None
    for kind in loaders:
        try:
            if kind == "json":
                return json.loads(raw.decode("utf-8"))
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            return tomllib.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            err = exc
    raise ConfigError(f"cannot parse {path}: {err}")


def parse_config(doc):
    """Validate a config document; return ``(SimConfig, threads, output_section)``."""
    from .sim_harness import SimConfig

    if not isinstance(doc, dict):
        raise ConfigError("top level must be a table/object")
    for key in doc:
        if key not in CONFIG_SCHEMA:
            raise ConfigError("unknown section", key)
    for section, keys in CONFIG_SCHEMA.items():
        body = doc.get(section, {})
        if section in ("instance", "policy", "simulation") and section not in doc:
            raise ConfigError("missing required section", section)
        if not isinstance(body, dict):
            raise ConfigError("must be a table/object", section)
        if keys is None:
            continue
        for key in body:
            if key not in keys:
                raise ConfigError("unknown key", f"{section}.{key}")
        for key, required in keys.items():
            if required and key not in body:
                raise ConfigError("missing required key", f"{section}.{key}")
    pol, sim = doc["policy"], doc["simulation"]
    config = SimConfig(
        source=dict(doc["instance"]),
        policy=pol["kind"],
        episodes=sim["episodes"],
        master_seed=sim.get("master_seed", 0),
        tie_break=pol.get("tie_break", "lowest"),
    )
    return config, sim.get("threads"), dict(doc.get("output", {}))


def trajectory_csvs(trajectories, per_file):
    """Yield ``(file_index, csv_text)`` with ``per_file`` episodes per file."""
    header = ("episode", "step", "action", "observation", "running_max", "running_min")
    for start in range(0, len(trajectories), per_file):
        rows = []
        for ep in range(start, min(start + per_file, len(trajectories))):
            traj = trajectories[ep]
            hi = lo = None
            for step, (a, y) in enumerate(zip(traj.actions, traj.observations)):
                hi = y if hi is None else max(hi, y)
                lo = y if lo is None else min(lo, y)
                rows.append((ep, step, a, y, hi, lo))
        yield start // per_file, output.csv_text(header, rows)


@main_group.command("simulate")
@click.argument("config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--dump-trajectories", "dump", type=click.Path(file_okay=False), default=None,
              help="Directory for per-step trajectory CSV files.")
@common_options
@click.pass_context
def simulate_cmd(ctx, config_path, dump, seed, threads, out):
    """Run a Monte Carlo experiment described by a TOML or JSON file."""
    import dataclasses

    from .sim_harness import run_experiment

    opts = _settings(ctx, seed, threads, out)
    config, cfg_threads, out_section = parse_config(load_config(config_path))
    if opts["seed"] is not None:
        config = dataclasses.replace(config, master_seed=opts["seed"])
    n_threads = _threads(opts["threads"] if opts["threads"] is not None else cfg_threads)
    dump = dump or out_section.get("trajectories")
    result = run_experiment(config, threads=n_threads, keep_trajectories=bool(dump))
    report, trajs = result if dump else (result, None)
    doc = {"schema_version": output.SCHEMA_VERSION, **report.to_dict()}
    text = output.to_json(doc)
    path = opts["out"] or out_section.get("report")
    if path:
        output.write_atomic(path, text)
    else:
        click.echo(text, nl=False)
    if dump:
        per_file = int(out_section.get("trajectories_per_file", 1000))
        if per_file < 1:
            raise ConfigError("must be >= 1", "output.trajectories_per_file")
        for idx, csv in trajectory_csvs(trajs, per_file):
            output.write_atomic(os.path.join(dump, f"trajectories_{idx:05d}.csv"), csv)


# ---------------------------------------------------------------------------
# validate


@main_group.command("validate")
@click.option("--quick", is_flag=True, help="Reduced episode counts.")
@click.option("--json", "as_json", is_flag=True, help="Print the JSON report instead of the table.")
@common_options
@click.pass_context
def validate_cmd(ctx, quick, as_json, seed, threads, out):
    """Run the acceptance matrix and print a pass/fail table."""
    from .validation import DEFAULT_SEED, run_validation

    opts = _settings(ctx, seed, threads, out)
    master = DEFAULT_SEED if opts["seed"] is None else opts["seed"]

    def progress(res):
        if not as_json:
            mark = "PASS" if res.passed else "FAIL"
            click.echo(f"[{mark}] {res.cid:>2}  {res.name}  ({res.runtime:.1f} s)")

    results, text = run_validation(master, quick=quick, threads=_threads(opts["threads"]), progress=progress)
    if opts["out"]:
        output.write_atomic(opts["out"], text)
    if as_json:
        click.echo(text, nl=False)
    failed = [r.cid for r in results if not r.passed]
    if failed:
        click.echo(json.dumps({"error": "validation", "failed_criteria": failed}), err=True)
        ctx.exit(EXIT_VALIDATION)


# ---------------------------------------------------------------------------
# entry point


def main(argv=None):
    """Console entry point; maps every failure onto the documented exit codes."""
    try:
        # without standalone mode click returns the code passed to ctx.exit
        code = main_group.main(args=argv, prog_name="gpfewshot", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_DOMAIN
    except click.exceptions.Abort:
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - every failure gets an exit code
        fail = _fail_from(exc)
        _emit_error(fail)
        return fail.code
    return code if isinstance(code, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
