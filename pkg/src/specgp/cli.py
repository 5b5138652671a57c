"""CLI for building quadrature rules and running Fourier-feature GP regression."""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from .config import BenchConfig, BuildConfig, FitConfig, RegressConfig, ValidateConfig
from .data import generate_synthetic, read_csv, write_csv, write_predictions
from .errors import BuildError, DomainError, NufftError, NumericalError, RuleFormatError
from .fourier import l2_kernel_error
from .kernels import MaternParams
from .logger import get_logger, setup_logging
from .quadrature import build_rule, validate_rule
from .regression import Dataset, TrigSums, fit, fit_hyperparameters, predict
from .rule import EMBEDDED_L2_ERRORS, QuadratureRule, embedded_rule, resolve_rule
from .stages import BuildReport
from .store import RuleStore, rule_key

logger = get_logger()

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

DEFAULT_BOX = "-1,1,1.5,3.5,0.1,0.5"
TABLE_NUS = (1.5, 2.0, 2.5, 3.0, 3.5)
TABLE_RHOS = (0.1, 0.3, 0.5)
BENCH_SPREAD = 3.0
BENCH_REPEATS = 5
# near-linear scaling: ten times the data may cost at most fifteen times the time
BENCH_GROWTH = 1.5
BENCH_GROWTH_MIN_N = 100_000


def format_error(value: float) -> str:
    """``0.780e-04`` style: three-digit mantissa in ``[0.1, 1)``."""
    if value == 0 or not math.isfinite(value):
        return f"{value:.3e}"
    exponent = math.floor(math.log10(abs(value))) + 1
    return f"{value / 10**exponent:.3f}e{exponent:+03d}"


def load_rule(source: str, store_url: str | None = None) -> QuadratureRule:
    """``embedded``, a rule file path, or ``store:<key>`` with a store URL."""
    if source.startswith("store:"):
        if not store_url:
            raise DomainError("--rule store:<key> needs --store or SPECGP_RULE_STORE")
        store = RuleStore.from_url(store_url)
        try:
            rule = store.get(source.removeprefix("store:"))
        finally:
            store.close()
        if rule is None:
            raise DomainError(f"no rule {source!r} in {store_url}")
        return rule
    return resolve_rule(source)


def load_data(path: str | None, N: int, seed: int) -> Dataset:
    if path is not None:
        return read_csv(path)
    return generate_synthetic(N, 0.5, seed)


def cmd_build(config: BuildConfig) -> int:
    report = BuildReport()
    store = RuleStore.from_url(config.store) if config.store else None
    try:
        key = rule_key(config.box, config.epsilon, config.p, config.n)
        rule = store.get(key) if store else None
        if rule is not None:
            report.cache_hit = True
            logger.info(f"Rule {key} found in store")
        else:
            rule = build_rule(config.box, config.epsilon, config.p, config.n, report=report)
            if store:
                store.put(key, rule)
                logger.info(f"Rule stored as {key}")
    finally:
        if store:
            store.close()

    rule.save(config.out)
    print(f"rule      {config.out}")
    print(f"key       {key}")
    print(f"m         {rule.m}")
    if report.cache_hit:
        print("cache     hit")
    else:
        print(f"max error {report.max_error:.3e} at (d, nu, rho)={report.argmax}")
        print(f"residual  {report.residual:.3e}")
        for stage, seconds in report.timings.items():
            count = report.node_counts.get(stage, "")
            print(f"  {stage:<17} {seconds:8.3f}s {count}")
        print(f"total     {report.total_time:.3f}s")
    if rule.loose:
        print(f"certified loosely at 2*eps = {rule.certified_error:.1e}")
    for note in report.notes:
        print(f"note      {note}")
    return EXIT_OK


def cmd_validate(config: ValidateConfig, grid: tuple[int, int, int]) -> int:
    rule = load_rule(config.rule, config.store)
    nus = config.nus or TABLE_NUS
    rhos = config.rhos or TABLE_RHOS
    show_reference = config.rule == "embedded"

    print(f"{'nu':>5} {'rho':>5} {'L2 error':>12}" + (f" {'reference':>12}" if show_reference else ""))
    for nu in nus:
        for rho in rhos:
            value = l2_kernel_error(rule, MaternParams(nu, rho))
            line = f"{nu:5.2f} {rho:5.2f} {format_error(value):>12}"
            if show_reference:
                ref = EMBEDDED_L2_ERRORS.get((nu, rho))
                line += f" {format_error(ref) if ref is not None else '-':>12}"
            print(line)

    report = validate_rule(rule, rule.box, grid)
    d, nu, rho = report.argmax
    print(f"max pointwise error {report.max_error:.3e} at d={d:.4f}, nu={nu:.4f}, rho={rho:.4f}")
    return EXIT_OK


def cmd_regress(config: RegressConfig) -> int:
    rule = load_rule(config.rule, config.store)
    data = load_data(config.data, config.N, config.seed)
    params = config.params

    start = time.perf_counter()
    result = fit(rule, params, data, config.sigma2, force_fast=config.force_fast)
    grid = np.linspace(rule.box.a, rule.box.b, config.grid_size)
    mean, variance = predict(result, grid)
    total = time.perf_counter() - start

    if config.out:
        write_predictions(config.out, grid, mean, variance)
        logger.info(f"Predictions written to {config.out}")

    ref = EMBEDDED_L2_ERRORS.get((params.nu, params.rho)) if config.rule == "embedded" else None
    l2 = format_error(ref) if ref is not None else "-"
    print(
        f"{'N':>10} {'nu':>5} {'rho':>5} {'sigma2':>7} {'L2 error':>11} "
        f"{'FFT time (s)':>13} {'solve time (s)':>15} {'total time (s)':>15}"
    )
    print(
        f"{data.N:>10} {params.nu:5.2f} {params.rho:5.2f} {config.sigma2:7.3g} {l2:>11} "
        f"{result.fft_seconds:13.3f} {result.solve_seconds:15.4f} {total:15.3f}"
    )
    return EXIT_OK


def cmd_fit(config: FitConfig) -> int:
    rule = load_rule(config.rule, config.store)
    data = load_data(config.data, config.N, config.seed)
    trajectory = fit_hyperparameters(
        rule,
        data,
        MaternParams(config.nu, config.rho),
        config.sigma2,
        steps=config.steps,
        force_fast=config.force_fast,
    )
    print(f"{'step':>4} {'nu':>8} {'rho':>8} {'sigma2':>10} {'log lik':>16} {'|grad|':>10}")
    for step in trajectory:
        print(
            f"{step.step:>4} {step.nu:8.4f} {step.rho:8.4f} {step.sigma2:10.4g} "
            f"{step.log_likelihood:16.6f} {step.gradient_norm:10.3e}"
        )
    return EXIT_OK


def _solve_time(
    rule: QuadratureRule, params: MaternParams, data: Dataset, sigma2: float, sums: TrigSums
) -> float:
    """Best of a few eigendecomposition solves on cached sums."""
    return min(
        fit(rule, params, data, sigma2, sums=sums).solve_seconds
        for _ in range(BENCH_REPEATS)
    )


def cmd_bench(config: BenchConfig) -> int:
    rule = load_rule(config.rule, config.store)
    params = MaternParams(config.nu, config.rho)
    grid = np.linspace(rule.box.a, rule.box.b, 200)

    print(f"{'N':>10} {'FFT time (s)':>13} {'solve time (s)':>15} {'total time (s)':>15}")
    rows: list[tuple[int, float, float]] = []
    for N in config.sizes:
        data = generate_synthetic(N, config.sigma2, config.seed)
        start = time.perf_counter()
        result = fit(rule, params, data, config.sigma2, force_fast=True)
        predict(result, grid)
        total = time.perf_counter() - start
        assert result.system is not None
        solve = _solve_time(rule, params, data, config.sigma2, result.system.sums)
        rows.append((N, solve, total))
        print(f"{N:>10} {result.fft_seconds:13.3f} {solve:15.4f} {total:15.3f}")

    solves = [solve for _, solve, _ in rows]
    if solves and max(solves) >= BENCH_SPREAD * min(solves):
        raise NumericalError(
            f"solve time varies {max(solves) / min(solves):.1f}x across N"
        )
    ordered = sorted(rows)
    for (n1, _, t1), (n2, _, t2) in zip(ordered, ordered[1:]):
        if n1 >= BENCH_GROWTH_MIN_N and n2 > n1 and t2 > BENCH_GROWTH * (n2 / n1) * t1:
            raise NumericalError(
                f"total time grows {t2 / t1:.1f}x from N={n1} to N={n2}"
            )
    return EXIT_OK


def cmd_export(out: str | None) -> int:
    text = embedded_rule().to_text()
    if out:
        Path(out).write_text(text, encoding="ascii")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(N: int, noise_variance: float, seed: int, out: str | None) -> int:
    data = generate_synthetic(N, noise_variance, seed)
    write_csv(out if out else sys.stdout, data)
    return EXIT_OK


def _parse_grid(text: str) -> tuple[int, int, int]:
    try:
        n_d, n_nu, n_rho = (int(v) for v in text.split(","))
    except ValueError as e:
        raise DomainError(f"--grid must be 'nd,nnu,nrho', got {text!r}") from e
    if min(n_d, n_nu, n_rho) < 1:
        raise DomainError("--grid counts must be positive")
    return n_d, n_nu, n_rho


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level",
        type=str,
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Set logging level (default: INFO)",
    )

    rule_args = argparse.ArgumentParser(add_help=False)
    rule_args.add_argument(
        "--rule", default="embedded", help="Rule file, 'embedded' or 'store:<key>'"
    )
    rule_args.add_argument("--store", help="Rule store URL (memory://, file://, redis://)")

    data_args = argparse.ArgumentParser(add_help=False)
    data_args.add_argument("--data", help="CSV with header 'x,y' (default: synthetic)")
    data_args.add_argument("--N", type=int, default=100_000, help="Synthetic data size")
    data_args.add_argument("--seed", type=int, default=0)
    data_args.add_argument("--force-fast-path", action="store_true")

    parser = argparse.ArgumentParser(
        prog="specgp",
        description="Hyperparameter-robust Fourier features for 1-D Matérn GPs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Examples:\n"
            "  specgp build --eps 1e-5 --out rule.txt\n"
            "  specgp validate --rule embedded\n"
            "  specgp regress --N 100000 --nu 3.0 --rho 0.1 --sigma2 0.5\n\n"
            "Synthetic data is y = cos(3 e^x) + noise with noise VARIANCE --sigma2\n"
            "(0.5 by default, standard deviation sqrt(0.5)).\n"
            "SPECGP_THREADS caps parallelism."
        ),
    )
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    build = subparsers.add_parser("build", parents=[common], help="Build a quadrature rule")
    build.add_argument("--box", default=DEFAULT_BOX, help="a,b,nu0,nu1,rho0,rho1")
    build.add_argument("--eps", type=float, default=1e-5)
    build.add_argument("--p", type=int, default=100, help="Chebyshev order per hyperparameter")
    build.add_argument("--n", type=int, default=200, help="Chebyshev order in the lag")
    build.add_argument("--out", default="rule.txt")
    build.add_argument("--store", help="Rule store URL to consult and fill")

    validate = subparsers.add_parser(
        "validate", parents=[common, rule_args], help="Tabulate L2 kernel errors of a rule"
    )
    validate.add_argument("--nu", type=float, action="append", help="Repeatable")
    validate.add_argument("--rho", type=float, action="append", help="Repeatable")
    validate.add_argument("--grid", default="50,20,20", help="Pointwise grid nd,nnu,nrho")

    regress = subparsers.add_parser(
        "regress", parents=[common, rule_args, data_args], help="Fit and predict"
    )
    regress.add_argument("--nu", type=float, default=3.0)
    regress.add_argument("--rho", type=float, default=0.1)
    regress.add_argument("--sigma2", type=float, default=0.5)
    regress.add_argument("--out", help="Write x,mean,variance CSV here")
    regress.add_argument("--grid-size", type=int, default=200)

    fit_cmd = subparsers.add_parser(
        "fit", parents=[common, rule_args, data_args], help="Fit hyperparameters"
    )
    fit_cmd.add_argument("--nu", type=float, default=2.0)
    fit_cmd.add_argument("--rho", type=float, default=0.2)
    fit_cmd.add_argument("--sigma2", type=float, default=1.0)
    fit_cmd.add_argument("--steps", type=int, default=50)

    bench = subparsers.add_parser(
        "bench", parents=[common, rule_args], help="Time regression across N"
    )
    bench.add_argument(
        "--N", type=int, nargs="*", default=[10_000, 100_000, 1_000_000], help="Data sizes"
    )
    bench.add_argument("--nu", type=float, default=3.0)
    bench.add_argument("--rho", type=float, default=0.1)
    bench.add_argument("--sigma2", type=float, default=0.5)
    bench.add_argument("--seed", type=int, default=0)

    export = subparsers.add_parser(
        "export-embedded-rule", parents=[common], help="Write the shipped 86-node rule"
    )
    export.add_argument("--out", help="Output path (default: stdout)")

    synth = subparsers.add_parser("synth", parents=[common], help="Write synthetic x,y CSV")
    synth.add_argument("--N", type=int, default=1000)
    synth.add_argument("--sigma2", type=float, default=0.5, help="Noise variance")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", help="Output path (default: stdout)")

    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "build":
        config = BuildConfig.from_args(args)
        config.validate()
        return cmd_build(config)
    if args.command == "validate":
        config = ValidateConfig.from_args(args)
        config.validate()
        return cmd_validate(config, _parse_grid(args.grid))
    if args.command == "regress":
        config = RegressConfig.from_args(args)
        config.validate()
        return cmd_regress(config)
    if args.command == "fit":
        config = FitConfig.from_args(args)
        config.validate()
        return cmd_fit(config)
    if args.command == "bench":
        config = BenchConfig.from_args(args)
        config.validate()
        return cmd_bench(config)
    if args.command == "export-embedded-rule":
        return cmd_export(args.out)
    if args.command == "synth":
        if args.N < 2 or args.sigma2 < 0:
            raise DomainError("synth needs --N >= 2 and --sigma2 >= 0")
        return cmd_synth(args.N, args.sigma2, args.seed, args.out)
    raise AssertionError(args.command)


def main(argv: list[str] | None = None) -> int:
    """Run a specgp command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(level=getattr(args, "log_level", "INFO"))

    if args.command is None:
        parser.print_help()
        return EXIT_USAGE

    try:
        return _dispatch(args)
    except (DomainError, RuleFormatError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_USAGE
    except (BuildError, NufftError, NumericalError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
