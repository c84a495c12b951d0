"""stablelab CLI.

Batch front door for the laboratory. Every subcommand writes UTF-8 CSV tables
and a `manifest.json` (config hash, resolved seed and its source, output
checksums) into `--out`:

    stablelab stable-table --alpha 1 --p 0.5 --c 1 --rho -0.5 --out tables/
    stablelab simulate --config ensemble.cfg --replicas 100000 --threads 8 --out run/
    stablelab rate --config rate.cfg --out rate/
    stablelab llt --config llt.cfg --out llt/
    stablelab selftest

Exit codes: 0 success, 2 usage or configuration error, 3 invariant failure.
Underpowered rate runs still exit 0 and carry `underpowered: true` in the manifest.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
from dotenv import load_dotenv
from pydantic import ValidationError

from stablelab.config import build_config, load_raw, raw_alpha
from stablelab.ensemble import check_conditions
from stablelab.errors import ConditionViolation, ExcludedCaseError, UsageError
from stablelab.executors import BatchExecutionError, executor_for_threads
from stablelab.executors._common import derive_seed, file_sha256
from stablelab.output import RunManifest, write_csv
from stablelab.runtime import CheckResult, resolve_seed, run_all_checks
from stablelab.session import ExperimentSession
from stablelab.stable_law import (
    StableLawParams,
    b_rho_branch,
    char_fn,
    corr_A_rho,
    corr_B_rho,
    correction_profile,
    stable_cdf_with_error,
    stable_density_with_error,
)
from stablelab.verification import (
    ExperimentConfig,
    RateBranch,
    ensemble_for,
    joint_cf_gap,
    ks_to_stable,
    llt_check,
    rate_profile,
    require_llt_alpha,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVARIANT = 3


class _ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage errors as UsageError instead of exiting."""

    def error(self, message: str) -> None:
        raise UsageError(message)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    """Render an aligned plain-text table; columns whose cells are all numbers are right-aligned."""
    widths = [max([len(h), *(len(row[i]) for row in rows)]) for i, h in enumerate(headers)]
    numeric = [bool(rows) and all(_is_number(row[i]) for row in rows) for i in range(len(headers))]

    def line(cells: list[str]) -> str:
        return "  ".join(c.rjust(w) if num else c.ljust(w) for c, w, num in zip(cells, widths, numeric)).rstrip()

    return "\n".join([line(headers), "  ".join("-" * w for w in widths), *(line(row) for row in rows)])


def _print_check_results(results: list[CheckResult]) -> None:
    headers = ["CHECK", "MODULE", "STATUS", "DETAIL"]
    rows = [[r.name, r.module, r.status, r.detail] for r in results]
    print(_format_table(headers, rows))
    passed = sum(1 for r in results if r.status == "pass")
    print(f"\n{len(results)} check(s): {passed} passed, {len(results) - passed} failed")


# --- Experiment plumbing -------------------------------------------------------


def _load_experiment(args: argparse.Namespace) -> tuple[ExperimentConfig, RunManifest]:
    """Config file plus CLI overrides, and a manifest recording where the seed came from."""
    raw = load_raw(Path(args.config))
    if args.command == "llt":
        require_llt_alpha(raw_alpha(raw))
    config = build_config(raw)
    seed, source = resolve_seed(args.seed, config.seed if "seed" in raw else None)
    updates: dict = {"seed": seed}
    if args.replicas is not None:
        updates["replicas"] = args.replicas
    try:
        config = ExperimentConfig.model_validate(dict(config) | updates)
    except ValidationError as e:
        raise UsageError(f"invalid override: {e}") from None
    manifest = RunManifest(
        command=args.command,
        config_path=str(args.config),
        config_sha256=file_sha256(Path(args.config)),
        seed=seed,
        seed_source=source,
        threads=args.threads,
        replicas=config.replicas,
        n_list=list(config.n_list),
    )
    return config, manifest


def _finish(manifest: RunManifest, out_dir: Path, paths: list[Path], started: float) -> None:
    for path in paths:
        manifest.add_output(path)
    manifest.wall_seconds = round(time.monotonic() - started, 3)
    manifest_path = manifest.write(out_dir)
    print(f"Wrote {len(paths)} file(s) and {manifest_path}")


def cmd_stable_table(args: argparse.Namespace) -> int:
    started = time.monotonic()
    try:
        params = StableLawParams(alpha=args.alpha, p=args.p, c=args.c, rho=args.rho)
    except ValidationError as e:
        raise UsageError("; ".join(err["msg"] for err in e.errors())) from None
    out = Path(args.out)
    s_grid = [float(s) for s in np.linspace(args.s_min, args.s_max, args.s_points)]
    t_grid = [float(t) for t in np.linspace(-args.t_max, args.t_max, args.t_points)]
    paths = []

    h = [complex(char_fn(params, t)) for t in t_grid]
    corrections = [[t, hv.real, hv.imag, float(corr_A_rho(params, t))] for t, hv in zip(t_grid, h)]
    header = ["t", "h_re", "h_im", "A_rho"]
    if b_rho_branch(params.alpha, params.rho) is not None:
        header.append("B_rho")
        for row, t in zip(corrections, t_grid):
            row.append(float(corr_B_rho(params, t)))
    paths.append(write_csv(out / "char_fn.csv", header, corrections))

    rows = []
    for s in s_grid:
        density, err_p = stable_density_with_error(params, s)
        cdf, err_H = stable_cdf_with_error(params, s)
        rows.append([s, density, err_p, cdf, err_H])
    paths.append(write_csv(out / "distribution.csv", ["s", "p", "err_p", "H", "err_H"], rows))

    # M needs J, which exists for rho < -alpha or inside a B_rho branch.
    if params.rho < -params.alpha or b_rho_branch(params.alpha, params.rho) is not None:
        profile = correction_profile(params, s_grid, with_N=params.rho < -params.alpha)
        paths.append(profile.to_csv(out / "corrections.csv"))
    else:
        logger.warning(f"No M/N table: J is undefined at alpha={params.alpha}, rho={params.rho}")

    manifest = RunManifest(
        command="stable-table",
        seed=0,
        seed_source="default",
        results={"alpha": params.alpha, "p": params.p, "c": params.c, "rho": params.rho},
    )
    _finish(manifest, out, paths, started)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config, manifest = _load_experiment(args)
    out = Path(args.out)
    paths = []
    with ExperimentSession(executor=executor_for_threads(args.threads)) as session:
        e = ensemble_for(config)
        manifest.flags["oracle_mode"] = e.dim == 1
        report = check_conditions(e, 100_000, derive_seed(config.seed, "conditions"))
        batch = session.walks(e, config.start, config.n_list, config.replicas, config.seed)
        paths.append(batch.to_csv(out / "trajectories.csv"))
        gap = joint_cf_gap(config)
        paths.append(gap.to_csv(out / "cf_gap.csv"))
        paths.extend(gap.write_plot_data(out))
        ks = ks_to_stable(config)
        paths.append(ks.to_csv(out / "ks.csv"))
        paths.append(ks.write_plot_data(out / "ks.plot.csv"))

    manifest.flags["condition_flags"] = report.flags
    manifest.results = {
        "ks": {str(r.n): r.statistic for r in ks.rows},
        "ks_decreasing": ks.trend().ok,
        "cf_gap_decreasing": all(t.ok for t in gap.trends().values()),
        "direction_drift": e.direction_drift,
    }
    _finish(manifest, out, paths, started)
    print(_format_table(["N", "KS", "STDERR"], [[str(r.n), f"{r.statistic:.4g}", f"{r.stderr:.2g}"] for r in ks.rows]))
    return EXIT_OK


def _infer_branch(config: ExperimentConfig) -> RateBranch:
    radial = config.ensemble.radial
    if radial.rho == -radial.alpha:
        raise ExcludedCaseError("rho = -alpha", "the first-order rate excludes the case rho == -alpha")
    return "rho_gt" if radial.rho > -radial.alpha else "rho_lt"


def cmd_rate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config, manifest = _load_experiment(args)
    branch = args.branch or _infer_branch(config)
    out = Path(args.out)
    with ExperimentSession(executor=executor_for_threads(args.threads)):
        profile = rate_profile(config, branch)
    paths = [profile.to_csv(out / "rate_profile.csv"), *profile.write_plot_data(out)]
    manifest.flags["underpowered"] = profile.underpowered
    manifest.flags["budget_exceeded"] = profile.budget_exceeded
    manifest.results = {
        "branch": branch,
        "shape_correlation": profile.shape_correlation,
        "required_replicas": profile.required_replicas,
        "nu_f": profile.nu_f,
        "delta_f": profile.delta_f,
    }
    _finish(manifest, out, paths, started)
    if profile.underpowered:
        print(f"underpowered: R={profile.replicas}, required R >= {profile.required_replicas}")
    print(f"shape correlation {profile.shape_correlation:.3f}")
    return EXIT_OK


def cmd_llt(args: argparse.Namespace) -> int:
    started = time.monotonic()
    config, manifest = _load_experiment(args)
    out = Path(args.out)
    with ExperimentSession(executor=executor_for_threads(args.threads)):
        table = llt_check(config)
    paths = [table.to_csv(out / "llt.csv"), table.write_plot_data(out / "llt.plot.csv")]
    manifest.results = {str(n): table.relative_error(n) for n in config.n_list}
    _finish(manifest, out, paths, started)
    return EXIT_OK


def cmd_selftest(args: argparse.Namespace) -> int:
    import stablelab.checks  # noqa: F401  (registers every check)

    results = run_all_checks(set(args.module) if args.module else None)
    _print_check_results(results)
    return EXIT_OK if all(r.status == "pass" for r in results) else EXIT_INVARIANT


def _add_run_flags(parser: argparse.ArgumentParser, *, config: bool = True) -> None:
    if config:
        parser.add_argument("--config", required=True, help="Experiment file (key = value lines).")
        parser.add_argument("--replicas", type=int, default=None, help="Override the replica count R.")
        parser.add_argument(
            "--seed",
            default=None,
            help="Unsigned 64-bit base seed. Overrides STABLELAB_SEED and the config's seed.",
        )
    parser.add_argument("--out", default=".", help="Output directory.")
    parser.add_argument("--threads", type=int, default=1, help="Worker threads (1 runs serially).")


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="stablelab",
        description="Numerical laboratory for stable limits of products of random positive matrices.",
    )
    parser.add_argument(
        "--env-file",
        default=None,
        help="Path to an env file to load (e.g. .env.local). Defaults to auto-detecting a .env file.",
    )
    parser.add_argument("--verbose", action="store_true", help="Log progress at INFO level.")
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    table = subparsers.add_parser("stable-table", help="Tabulate h, p, H, A_rho, B_rho, M, N.")
    table.add_argument("--alpha", type=float, required=True)
    table.add_argument("--p", type=float, default=0.5)
    table.add_argument("--c", type=float, default=1.0)
    table.add_argument("--rho", type=float, default=-1.0)
    table.add_argument("--s-min", type=float, default=-5.0)
    table.add_argument("--s-max", type=float, default=5.0)
    table.add_argument("--s-points", type=int, default=21)
    table.add_argument("--t-max", type=float, default=10.0)
    table.add_argument("--t-points", type=int, default=41)
    _add_run_flags(table, config=False)
    table.set_defaults(handler=cmd_stable_table)

    simulate = subparsers.add_parser("simulate", help="Simulate walks; joint CF gap and KS tables.")
    _add_run_flags(simulate)
    simulate.set_defaults(handler=cmd_simulate)

    rate = subparsers.add_parser("rate", help="Scaled-deviation rate profile against nu(f)M + delta(f)N.")
    _add_run_flags(rate)
    rate.add_argument("--branch", choices=["rho_gt", "rho_lt"], default=None, help="Defaults to the sign of rho + alpha.")
    rate.set_defaults(handler=cmd_rate)

    llt = subparsers.add_parser("llt", help="Kernel-smoothed local limit comparison.")
    _add_run_flags(llt)
    llt.set_defaults(handler=cmd_llt)

    selftest = subparsers.add_parser("selftest", help="Run every module's invariant suite.")
    selftest.add_argument("--module", action="append", default=None, help="Restrict to a module (repeatable).")
    selftest.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")

    if args.env_file:
        env_path = Path(args.env_file)
        if not env_path.exists():
            print(f"Error: env file not found: {env_path}", file=sys.stderr)
            return EXIT_USAGE
        load_dotenv(env_path)
    else:
        load_dotenv()

    if getattr(args, "threads", 1) < 1:
        print(f"Error: --threads must be >= 1, got {args.threads}", file=sys.stderr)
        return EXIT_USAGE

    try:
        return args.handler(args)
    except ConditionViolation as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ExcludedCaseError as e:
        print(f"Error: excluded case: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        # UsageError, pydantic ValidationError, and range checks in the numerics.
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as e:
        print(f"Invariant failure: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except BatchExecutionError as e:
        print(f"Invariant failure: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
