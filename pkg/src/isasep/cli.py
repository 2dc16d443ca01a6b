"""Command-line entry point: ``isasep generate|separate|verify|scan``.

Exit status: 0 success, 1 verification checks failed, 2 invalid
configuration or input, 3 numerical failure, 4 ICA non-convergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, read_config
from .entropy import entropy_1d
from .errors import ConfigError, IsaSepError
from .io import atomic_write, read_grouping, read_matrix, write_grouping, write_manifest, write_matrix, write_table
from .linalg import derive_seed
from .model import Grouping, make_instance
from .pipeline import StageError, score_transfer, separate
from .sources import Elliptical, IidMarginal, LpSpherical, Rot90, Spherical
from .verify import (
    InequalityReport,
    check_entropy_combination,
    check_projection_invariance,
    check_proposition_sum,
    check_rot90_symmetry,
    check_w_epi,
    sample_directions,
    scan_argmin,
    scan_entropy_on_circle,
    scan_range,
    sheared_uniform,
    uniform_square,
    verification_instance,
)

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NONCONVERGED = 0, 1, 2, 3, 4
SHEAR = 0.5


class _Timer:
    def __init__(self):
        self.times: dict[str, float] = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.times[name] = time.perf_counter() - self.t0

        return _Ctx()


def _manifest_head(command: str, cfg: ExperimentConfig) -> dict:
    items = {"command": command, "version": __version__, "seed": cfg.seed}
    if cfg.raw is not None:
        for key, value in cfg.raw.echo():
            items[f"config.{key}"] = value
    return items


def _finish_manifest(out: Path, items: dict, files: list[str], timer: _Timer) -> None:
    items["files"] = ", ".join(files)
    for name, t in timer.times.items():
        items[f"time.{name}_s"] = f"{t:.3f}"
    write_manifest(out / "manifest.txt", items)


def _ica_config(cfg: ExperimentConfig):
    if cfg.ica_seed_given:
        return cfg.ica
    return dataclasses.replace(cfg.ica, seed=derive_seed(cfg.seed, "ica"))


def _instance(cfg: ExperimentConfig):
    return make_instance(cfg.sources, cfg.n, cfg.seed, cfg.mixing)


def _block_slices(cfg: ExperimentConfig):
    start = 0
    for spec in cfg.sources:
        yield spec, slice(start, start + spec.d)
        start += spec.d


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: ExperimentConfig, out: Path) -> int:
    timer = _Timer()
    with timer("generate"):
        inst = _instance(cfg)
    files = ["S.csv", "A.csv", "Z.csv", "grouping.txt"]
    with timer("write"):
        write_matrix(out / "S.csv", inst.S)
        write_matrix(out / "A.csv", inst.A)
        write_matrix(out / "Z.csv", inst.Z)
        write_grouping(out / "grouping.txt", inst.grouping)
    items = _manifest_head("generate", cfg)
    items.update({"n": inst.n, "D": inst.D, "M": inst.M, "dims": ",".join(map(str, inst.dims)), "mixing": inst.mixing})
    _finish_manifest(out, items, files, timer)
    return EXIT_OK


def _load_input(path: str):
    """Z plus optional ground truth (A, grouping) from a generate directory."""
    p = Path(path)
    if p.is_dir():
        Z = read_matrix(p / "Z.csv")
        if (p / "A.csv").exists() and (p / "grouping.txt").exists():
            return Z, read_matrix(p / "A.csv"), read_grouping(p / "grouping.txt")
        return Z, None, None
    return read_matrix(p), None, None


def cmd_separate(cfg: ExperimentConfig, out: Path) -> int:
    timer = _Timer()
    dims = cfg.block_dims
    with timer("input"):
        if cfg.input:
            try:
                Z, A, truth = _load_input(cfg.input)
            except OSError as exc:
                raise ConfigError(f"cannot read input {cfg.input!r}: {exc.strerror}") from None
            if Z.shape[1] != sum(dims):
                raise ConfigError(f"input has {Z.shape[1]} columns, block sizes sum to {sum(dims)}")
        else:
            inst = _instance(cfg)
            Z, A, truth = inst.Z, inst.A, inst.grouping
    with timer("separate"):
        result = separate(
            Z, dims, _ica_config(cfg), cfg.strategy, rescore=cfg.rescore, k=cfg.k, seed=cfg.seed
        )
    files = ["W_isa.csv", "whitening.csv", "whitening_mean.csv", "dependence.csv", "grouping.txt", "Y.csv"]
    with timer("write"):
        write_matrix(out / "W_isa.csv", result.W_isa)
        write_matrix(out / "whitening.csv", result.whitening.transform)
        write_matrix(out / "whitening_mean.csv", result.whitening.mean[None, :])
        write_matrix(out / "dependence.csv", result.dependence)
        write_grouping(out / "grouping.txt", result.grouping)
        write_matrix(out / "Y.csv", result.Y)
    items = _manifest_head("separate", cfg)
    items.update(
        {
            "dims": ",".join(map(str, dims)),
            "ica.converged": str(result.ica.converged).lower(),
            "ica.iterations": result.ica.iterations,
            "ica.restart": result.ica.restart,
            "ica.final_delta": f"{result.ica.final_delta:.6g}",
            "ica.gaussian_components": result.ica.gaussian_components,
            "grouping.score": f"{result.score:.17g}",
            "cost.marginal_entropy_sum": f"{_marginal_cost(result.Y):.17g}",
        }
    )
    if A is not None:
        metrics = score_transfer(result, A, truth)
        items["metric.amari_index"] = f"{metrics['amari_index']:.17g}"
        items["metric.grouping_accuracy"] = f"{metrics['grouping_accuracy']:.17g}"
    _finish_manifest(out, items, files, timer)
    problem = ica_problem(result.ica, dims)
    if problem:
        print(f"ICA non-convergence: {problem}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def ica_problem(ica, dims) -> str | None:
    """Why the ICA stage cannot support an ISA solution, or None.

    A Gaussian subspace of ICA outputs is harmless when it fits inside one
    block (the block is then recovered as a whole, its inner rotation being
    an ISA ambiguity anyway). A larger Gaussian subspace, or a fixed point
    that failed without one, leaves the separation undetermined.
    """
    if ica.gaussian_components > max(dims):
        return (
            f"{ica.gaussian_components} output components are indistinguishable from Gaussian, "
            f"more than the largest block ({max(dims)}); the mixing is not identifiable"
        )
    if not ica.fixed_point_converged and ica.gaussian_components < 2:
        return f"no attempt reached the tolerance (final delta {ica.final_delta:.3g})"
    return None


def _marginal_cost(Y: np.ndarray) -> float:
    return sum(entropy_1d(Y[:, i], n_boot=0).value for i in range(Y.shape[1]))


def applicable(check: str, spec) -> bool:
    """Whether a block check has a theoretical expectation for ``spec``."""
    spherical = isinstance(spec, (Spherical, Elliptical))
    if check in ("w_epi", "entropy_combination"):
        return spherical or isinstance(spec, IidMarginal)
    if check == "projection_invariance":
        return spherical
    if check == "rot90_symmetry":
        if spec.d != 2:
            return False
        if isinstance(spec, IidMarginal):
            return spec.marginal in ("uniform", "laplace")
        return spherical or isinstance(spec, (Rot90, LpSpherical))
    return False


_BLOCK_CHECKS = {
    "w_epi": check_w_epi,
    "entropy_combination": check_entropy_combination,
    "projection_invariance": check_projection_invariance,
    "rot90_symmetry": check_rot90_symmetry,
}


def _report_rows(report: InequalityReport):
    rows = []
    for r in report.records:
        row = list(r.direction) + [r.lhs, r.rhs, r.margin, r.stderr, r.tolerance, "1" if r.violated else "0"]
        if r.ks is not None:
            row += [r.ks, r.ks_critical]
        rows.append(row)
    return rows


def _write_report(path: Path, report: InequalityReport) -> None:
    dim = len(report.records[0].direction) if report.records else 0
    header = [f"w{i + 1}" for i in range(dim)] + ["lhs", "rhs", "margin", "stderr", "tolerance", "violated"]
    if report.records and report.records[0].ks is not None:
        header += ["ks", "ks_critical"]
    write_table(path, header, _report_rows(report))


def _regime(report: InequalityReport) -> str:
    if not report.passed:
        return "violated"
    if all(abs(r.margin) <= r.tolerance for r in report.records):
        return "equality within tolerance"
    return "inequality holds"


def cmd_verify(cfg: ExperimentConfig, out: Path) -> int:
    if not cfg.checks and not cfg.controls:
        raise ConfigError("[verify] names no checks or controls")
    timer = _Timer()
    # Checks run on unwhitened exact-law blocks; see verification_instance.
    with timer("generate"):
        inst = verification_instance(cfg.sources, cfg.n, cfg.seed)
    lines, files = [], []
    all_pass = True
    ks = cfg.k_sigma
    for check in cfg.checks:
        with timer(check):
            if check == "proposition_sum":
                report = check_proposition_sum(inst, cfg.num_w, derive_seed(cfg.seed, "verify", check), ks)
                targets = [("instance", report)]
            else:
                targets = []
                for m, (spec, cols) in enumerate(_block_slices(cfg), start=1):
                    label = f"source{m}"
                    if not applicable(check, spec):
                        lines.append(f"SKIP {label} {check}: not applicable to {type(spec).__name__}")
                        continue
                    dirs = sample_directions(spec.d, cfg.directions, derive_seed(cfg.seed, "verify", "dirs", m),
                                             cfg.include_canonical)
                    fn = _BLOCK_CHECKS[check]
                    targets.append((label, fn(inst.S[:, cols], dirs, derive_seed(cfg.seed, "verify", check, m), ks)))
        for label, report in targets:
            name = f"verify_{label}_{check}.csv"
            _write_report(out / name, report)
            files.append(name)
            status = "PASS" if report.passed else "FAIL"
            all_pass &= report.passed
            lines.append(f"{status} {label} {report.summary()}; {_regime(report)}")
    for control in cfg.controls:
        with timer(f"control_{control}"):
            seed = derive_seed(cfg.seed, "control", control)
            dirs = sample_directions(2, cfg.directions, derive_seed(seed, "dirs"), cfg.include_canonical)
            if control == "sheared":
                report = check_rot90_symmetry(sheared_uniform(cfg.n, SHEAR, seed), dirs, seed, ks)
            else:
                report = check_projection_invariance(uniform_square(cfg.n, seed), dirs, seed, ks)
        name = f"verify_control_{control}_{report.check}.csv"
        _write_report(out / name, report)
        files.append(name)
        observed = "observed fail" if not report.passed else "observed pass (control not detected)"
        lines.append(f"CONTROL {control} {report.summary()}; expected-fail: {observed}")
    lines.append(f"OVERALL {'PASS' if all_pass else 'FAIL'}")
    atomic_write(out / "summary.txt", "\n".join(lines) + "\n")
    files.append("summary.txt")
    items = _manifest_head("verify", cfg)
    items["verify.passed"] = str(all_pass).lower()
    _finish_manifest(out, items, files, timer)
    print("\n".join(lines))
    return EXIT_OK if all_pass else EXIT_CHECKS


def cmd_scan(cfg: ExperimentConfig, out: Path) -> int:
    spec, cols = list(_block_slices(cfg))[cfg.scan_source - 1]
    if spec.d != 2:
        line = cfg.raw.sections.get("scan", {}).get("source") if cfg.raw else None
        raise ConfigError(
            f"[scan] source {cfg.scan_source} is {spec.d}-dimensional; scans need a 2-D block",
            line.line if line else None,
            cfg.raw.path if cfg.raw else None,
        )
    timer = _Timer()
    with timer("generate"):
        inst = verification_instance(cfg.sources, cfg.n, cfg.seed)
    with timer("scan"):
        scan = scan_entropy_on_circle(inst.S[:, cols], cfg.resolution, derive_seed(cfg.seed, "scan"))
    write_table(out / "scan.csv", ["angle", "entropy", "stderr"], [(a, e.value, e.stderr) for a, e in scan])
    spread, sd = scan_range(scan)
    items = _manifest_head("scan", cfg)
    items.update(
        {
            "scan.source": cfg.scan_source,
            "scan.resolution": cfg.resolution,
            "scan.argmin_angle": f"{scan[scan_argmin(scan)][0]:.17g}",
            "scan.range": f"{spread:.17g}",
            "scan.range_stderr": f"{sd:.17g}",
        }
    )
    _finish_manifest(out, items, ["scan.csv"], timer)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "separate": cmd_separate, "verify": cmd_verify, "scan": cmd_scan}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isasep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment configuration file")
        p.add_argument("--out", help="output directory (overrides [run] out)")
        p.add_argument("--seed", type=_u64, help="master seed (overrides [run] seed)")
        if name == "scan":
            p.add_argument("--resolution", type=int, help="number of angles (overrides [scan] resolution)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = read_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if getattr(args, "resolution", None) is not None:
            if args.resolution < 8:
                raise ConfigError("--resolution must be >= 8")
            cfg = dataclasses.replace(cfg, resolution=args.resolution)
        out = Path(args.out or cfg.out or ".")
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IsaSepError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
