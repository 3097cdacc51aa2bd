"""Command-line interface: account lifecycle, design curves, validation."""

from __future__ import annotations

import json
import os
import random
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .kdf import (
    KdfParams,
    create_account,
    load_client_record,
    load_server_record,
    reproduce,
    save_client_record,
    save_server_record,
    verify,
)
from .mechanism import (
    BudgetTooSmallError,
    exponential_distribution,
    fit_k,
    info_leak_bits,
)
from .optimizer import (
    NoFeasibleKError,
    gain_curve,
    optimal_mechanism,
    stationary_onset,
    write_curve_csv,
)
from .outcomes import build_outcome_space
from .simulate import MatrixCell, matrix_report, run_matrix, save_results, standard_matrix

EXIT_REJECT = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _read_password(confirm: bool = False) -> str:
    env = os.environ.get("CASH_PASSWORD")
    if env is not None:
        return env
    return click.prompt(
        "Master password", hide_input=True, confirmation_prompt=confirm
    )


def _parse_moduli(n: int, moduli: str | None) -> tuple[int, ...]:
    if moduli is None:
        return (n,) * (n - 1)
    values = tuple(int(v) for v in moduli.split(",") if v.strip())
    if len(values) != n - 1:
        raise click.UsageError(f"need {n - 1} moduli for n={n}")
    return values


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Randomized halting-predicate key stretching toolkit."""


@main.command()
@click.argument("user")
@click.argument("account")
@click.option("--epsilon", default=1.609, show_default=True, help="Privacy budget.")
@click.option("--n", "rounds", default=3, show_default=True, help="Maximum hash rounds.")
@click.option("--moduli", default=None, help="Comma-separated predicate moduli.")
@click.option("--k-target", default=100_000, show_default=True,
              help="Per-round iterations the cost budget is sized for.")
@click.option("--cost-ratio", default=None, type=float,
              help="Explicit cost budget (overrides --k-target).")
@click.option("--mech", type=click.Choice(["exp", "opt"]), default="exp",
              show_default=True)
@click.option("--budget", default=None, type=float,
              help="Assumed attacker hash budget (opt mechanism).")
@click.option("--pwd-space", default=1e12, show_default=True, type=float,
              help="Assumed password-space size (opt mechanism).")
@click.option("--hash-id", default="sha256", show_default=True)
@click.option("--out-dir", default=".", show_default=True)
@click.option("--seed", default=None, type=int, help="Deterministic RNG seed.")
def create(user, account, epsilon, rounds, moduli, k_target, cost_ratio, mech,
           budget, pwd_space, hash_id, out_dir, seed):
    """Create an account: write client and server record files."""
    if epsilon < 0 or rounds < 2 or k_target < 1:
        _fail(EXIT_USAGE, "epsilon must be >= 0, n >= 2, k-target >= 1")
    try:
        space = build_outcome_space(_parse_moduli(rounds, moduli))
    except ValueError as exc:
        _fail(EXIT_USAGE, str(exc))
    try:
        if mech == "exp":
            dist = exponential_distribution(epsilon, space)
            ratio = cost_ratio if cost_ratio is not None else k_target * dist.expected_rounds
            k = fit_k(dist, ratio)
        else:
            if budget is None:
                _fail(EXIT_USAGE, "--mech opt needs --budget")
            dist0 = exponential_distribution(epsilon, space)
            ratio = cost_ratio if cost_ratio is not None else k_target * dist0.expected_rounds
            design = optimal_mechanism(epsilon, space, ratio, budget, pwd_space)
            dist, k = design.dist, design.k
    except (BudgetTooSmallError, NoFeasibleKError) as exc:
        _fail(EXIT_USAGE, str(exc))

    params = KdfParams(k=k, rounds=rounds, hash_id=hash_id)
    rng = random.Random(seed) if seed is not None else random.SystemRandom()
    pwd = _read_password(confirm=True)
    client, server = create_account(user, account, pwd, dist, params, rng)

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{user}_{account}"
        save_client_record(client, out / f"{stem}.client.json")
        save_server_record(server, out / f"{stem}.server.json")
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"k={k} expected_rounds={dist.expected_rounds:.6f} "
               f"leak_bits={info_leak_bits(epsilon):.3f}")
    click.echo(f"wrote {out / (stem + '.client.json')} and "
               f"{out / (stem + '.server.json')}")


@main.command()
@click.argument("record_path", type=click.Path(exists=False))
def derive(record_path):
    """Re-derive the account digest and print it as hex."""
    try:
        record = load_client_record(record_path)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    except (ValueError, KeyError) as exc:
        _fail(EXIT_USAGE, f"bad record: {exc}")
    pwd = _read_password()
    click.echo(reproduce(record, pwd).hex())


@main.command("verify")
@click.argument("record_path")
@click.argument("server_path")
def verify_cmd(record_path, server_path):
    """Derive from the master password and compare with the server record."""
    try:
        record = load_client_record(record_path)
        server = load_server_record(server_path)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    except (ValueError, KeyError) as exc:
        _fail(EXIT_USAGE, f"bad record: {exc}")
    pwd = _read_password()
    if verify(server, reproduce(record, pwd)):
        click.echo("accept")
        sys.exit(0)
    click.echo("reject")
    sys.exit(EXIT_REJECT)


@main.command()
@click.option("--mech", type=click.Choice(["exp", "opt"]), default="exp",
              show_default=True)
@click.option("--epsilon-list", default="0.223,0.511,0.916,1.609,2.303",
              show_default=True)
@click.option("--n", "rounds", default=3, show_default=True)
@click.option("--moduli", default=None)
@click.option("--cost-ratio", default=1000.0, show_default=True, type=float)
@click.option("--pwd-space", default=1e6, show_default=True, type=float)
@click.option("--budget-points", default=200, show_default=True)
@click.option("--budget-max", default=2.0, show_default=True, type=float)
@click.option("--out", default="curves", show_default=True,
              type=click.Path(file_okay=False))
def curve(mech, epsilon_list, rounds, moduli, cost_ratio, pwd_space,
          budget_points, budget_max, out):
    """Export gain-curve CSV files, one per (mechanism, epsilon)."""
    try:
        eps_values = [float(v) for v in epsilon_list.split(",") if v.strip()]
        space = build_outcome_space(_parse_moduli(rounds, moduli))
    except ValueError as exc:
        _fail(EXIT_USAGE, str(exc))
    if budget_points < 2 or budget_max <= 0:
        _fail(EXIT_USAGE, "need budget-points >= 2 and budget-max > 0")
    grid = np.linspace(budget_max / budget_points, budget_max, budget_points)
    kind = "exponential" if mech == "exp" else "optimal"
    out_dir = Path(out)
    curves = {}
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for eps in eps_values:
            points = gain_curve(kind, eps, space, cost_ratio, pwd_space, grid)
            curves[eps] = points
            path = out_dir / f"curve_{mech}_n{rounds}_eps{eps:g}.csv"
            write_curve_csv(points, path)
            click.echo(f"wrote {path} (max gain {max(p.gain for p in points):.4f})")
    except (BudgetTooSmallError, NoFeasibleKError) as exc:
        _fail(EXIT_USAGE, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    onset = stationary_onset(curves)
    if onset is not None:
        click.echo(f"gain curves stationary from epsilon={onset:g} on this grid")


@main.command()
@click.option("--config", "config_path", default=None, type=click.Path())
@click.option("--trials", default=10_000, show_default=True)
@click.option("--pwd-space", default=10_000, show_default=True, type=int)
@click.option("--k", default=4, show_default=True)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Optional JSON results path.")
def simulate(config_path, trials, pwd_space, k, seed, out):
    """Run the Monte Carlo validation matrix; exit 1 on any 3-sigma miss."""
    cells = None
    offset = 0.0
    if config_path is not None:
        try:
            raw = json.loads(Path(config_path).read_text())
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
        except ValueError as exc:
            _fail(EXIT_USAGE, f"bad config: {exc}")
        trials = int(raw.get("trials", trials))
        pwd_space = int(raw.get("pwd_space", pwd_space))
        k = int(raw.get("k", k))
        seed = int(raw.get("seed", seed))
        offset = float(raw.get("analytic_offset", 0.0))
        if "cells" in raw:
            cells = [
                MatrixCell(
                    moduli=tuple(int(m) for m in c["moduli"]),
                    epsilon=float(c["epsilon"]),
                    beta=float(c["beta"]),
                )
                for c in raw["cells"]
            ]
    if cells is None:
        cells = standard_matrix()
    results = run_matrix(
        cells=cells, trials=trials, pwd_space_size=pwd_space, k=k, seed=seed,
        analytic_offset=offset,
    )
    click.echo(matrix_report(results))
    if out is not None:
        try:
            save_results(results, out)
        except OSError as exc:
            _fail(EXIT_IO, str(exc))
    if not all(r.ok for r in results):
        sys.exit(EXIT_REJECT)


if __name__ == "__main__":
    main()
