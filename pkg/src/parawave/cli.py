"""Command-line workbench for the wave-propagation pipeline.

Subcommands cover the full loop: synthesize media, generate datasets, train
the correction network, propagate pulses, run parallel-in-time studies, and
emit dispersion/evaluation tables. Every command writes a JSON manifest
echoing its fully resolved configuration next to the primary output, so a
run can be reproduced from the manifest alone.

Exit codes: 0 success, 2 usage (argparse), 3 configuration or file-format
problems, 4 numeric aborts (instability, blow-up, failed factorization).

Thread count comes from --threads or the PARAWAVE_THREADS environment
variable; the flag wins.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .dataset import (
    DESK_N_MEDIA,
    DESK_N_STEPS,
    VARIANTS,
    build_training_set,
    write_dataset,
)
from .dispersion import (
    dispersion_error,
    dispersion_error_rel,
    omega_exact,
    omega_semidiscrete,
)
from .errors import ConfigError, FormatError, NumericError, ParawaveError, StabilityError
from .fileio import read_field_file, write_field_file
from .grid import GridSpec, ScalarField, WaveField
from .jnet import (
    JNetConfig,
    enhanced_step,
    eval_step_error,
    load_net,
    phantom_energy,
    save_net,
    zero_kernel_net,
)
from .media import (
    MediumSource,
    PulseSpec,
    constant_medium,
    crop_medium,
    gaussian_pulse,
    synth_inclusion,
    synth_waveguide,
)
from .parareal import coarse_tilde, parareal_enhanced, parareal_plain, parareal_procrustes
from .solver import Medium, fine_propagate
from .training import TrainConfig, train

THREADS_ENV_VAR = "PARAWAVE_THREADS"
MANIFEST_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


# ---------------------------------------------------------------------------
# shared plumbing


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        if value < 1:
            raise ConfigError("thread count must be at least 1")
        return value
    env = os.environ.get(THREADS_ENV_VAR)
    if env is not None:
        try:
            parsed = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV_VAR}={env!r} is not an integer") from None
        if parsed < 1:
            raise ConfigError(f"{THREADS_ENV_VAR} must be at least 1")
        return parsed
    return 1


def manifest_path(out: str | Path) -> Path:
    return Path(str(out) + ".manifest.json")


def _write_manifest(out: str | Path, command: str, config: dict) -> None:
    payload = {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "config": config,
    }
    with open(manifest_path(out), "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_csv(path: str | Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _load_medium_file(path: str) -> Medium:
    values = read_field_file(path)
    if values.shape[0] != 1 or values.ndim != 3 or values.shape[1] != values.shape[2]:
        raise FormatError(f"medium file must hold one square channel, got {values.shape}")
    grid = GridSpec(values.shape[1])
    return Medium.from_fine(ScalarField(grid, values[0]))


def _medium_from_args(args) -> Medium:
    if getattr(args, "medium", None):
        return _load_medium_file(args.medium)
    kind = getattr(args, "kind", None)
    if kind == "waveguide":
        return synth_waveguide()
    if kind == "inclusion":
        return synth_inclusion()
    if kind == "constant":
        return constant_medium(args.value)
    raise ConfigError("specify --medium FILE or --kind {waveguide,inclusion,constant}")


def _parse_center(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"center must be 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _pulse_from_args(args, grid: GridSpec) -> WaveField:
    spec = PulseSpec(center=_parse_center(args.center), inv_sigma_sq=args.inv_sigma_sq)
    return gaussian_pulse(grid, spec)


def _parse_schedule(text: str) -> tuple[tuple[int, float], ...]:
    """'0:1e-3,1000:5e-4' -> ((0, 1e-3), (1000, 5e-4))."""
    entries = []
    for part in text.split(","):
        epoch_s, _, lr_s = part.partition(":")
        if not lr_s:
            raise ConfigError(f"schedule entry {part!r} is not 'epoch:lr'")
        entries.append((int(epoch_s), float(lr_s)))
    return tuple(entries)


def _add_medium_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--medium", help="PWF2 medium file (overrides --kind)")
    p.add_argument("--kind", choices=["waveguide", "inclusion", "constant"])
    p.add_argument("--value", type=float, default=1.0, help="speed for --kind constant")


def _add_pulse_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--center", default="0.0,0.0", help="pulse center 'x,y'")
    p.add_argument("--inv-sigma-sq", type=float, default=250.0)


# ---------------------------------------------------------------------------
# subcommands


def cmd_medium(args) -> int:
    if args.kind == "crop":
        if not args.source:
            raise ConfigError("--kind crop requires --source RASTER_FILE")
        raster = read_field_file(args.source)
        if raster.shape[0] != 1:
            raise FormatError("crop source must hold exactly one channel")
        src = MediumSource("raster", raster=raster[0])
        m = crop_medium(src, rng=np.random.default_rng(args.seed))
    elif args.kind == "waveguide":
        m = synth_waveguide()
    elif args.kind == "inclusion":
        m = synth_inclusion()
    else:
        m = constant_medium(args.value)
    write_field_file(args.out, m.c.values)
    _write_manifest(
        args.out,
        "medium",
        {
            "kind": args.kind,
            "value": args.value,
            "source": args.source,
            "seed": args.seed,
            "out": str(args.out),
            "n": m.c.grid.n,
        },
    )
    return EXIT_OK


def cmd_dataset(args) -> int:
    threads = _resolve_threads(args.threads)
    ds = build_training_set(
        n_media=args.n_media,
        pulses_per_medium=args.pulses_per_medium,
        n_steps=args.n_steps,
        dt_star=args.dt_star,
        variant=args.variant,
        seed=args.seed,
        k_max=args.k_max,
        workers=threads,
    )
    tmp = str(args.out) + ".tmp"
    try:
        write_dataset(tmp, ds)
        os.replace(tmp, args.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    _write_manifest(
        args.out,
        "dataset",
        {
            "dt_star": args.dt_star,
            "n_media": args.n_media,
            "pulses_per_medium": args.pulses_per_medium,
            "n_steps": args.n_steps,
            "variant": args.variant,
            "k_max": args.k_max,
            "seed": args.seed,
            "threads": threads,
            "out": str(args.out),
            "records": len(ds),
        },
    )
    return EXIT_OK


def cmd_train(args) -> int:
    from .dataset import read_dataset  # heavy import path kept local

    threads = _resolve_threads(args.threads)
    ds = read_dataset(args.dataset)
    log_path = args.log if args.log else str(args.out) + ".log.csv"
    net_cfg = JNetConfig(
        levels=args.levels,
        base_channels=args.base_channels,
        kernel=args.kernel,
        activation="identity" if args.linear else "relu",
        use_bias=not args.linear,
        use_batchnorm=not args.linear,
        skip_mode=args.skip_mode,
        input_n=ds.x.shape[2],
        in_channels=ds.x.shape[1],
        out_channels=ds.y.shape[1],
    )
    train_cfg = TrainConfig(
        batch_size=args.batch_size,
        lr_schedule=_parse_schedule(args.lr),
        momentum=args.momentum,
        epochs=args.epochs,
        seed=args.seed,
        test_fraction=args.test_fraction,
        workers=threads,
        checkpoint_every=args.checkpoint_every,
        checkpoint_dir=args.checkpoint_dir,
        log_path=log_path,
    )
    net, report = train(ds.x, ds.y, net_cfg, train_cfg, dt_star=ds.dt_star)
    save_net(net, args.out)
    _write_manifest(
        args.out,
        "train",
        {
            "dataset": str(args.dataset),
            "out": str(args.out),
            "log": str(log_path),
            "epochs": args.epochs,
            "batch_size": args.batch_size,
            "lr": args.lr,
            "momentum": args.momentum,
            "seed": args.seed,
            "test_fraction": args.test_fraction,
            "threads": threads,
            "levels": args.levels,
            "base_channels": args.base_channels,
            "kernel": args.kernel,
            "skip_mode": args.skip_mode,
            "linear": args.linear,
            "checkpoint_every": args.checkpoint_every,
            "checkpoint_dir": args.checkpoint_dir,
            "dt_star": ds.dt_star,
            "final_train_loss": report.final_train_loss,
            "test_loss": report.test_loss,
            "wall_time_s": report.wall_time_s,
            "aborted": report.aborted,
        },
    )
    if report.aborted:
        print(f"training aborted at epoch {report.abort_epoch}; saved last stable net",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_propagate(args) -> int:
    m = _medium_from_args(args)
    net = load_net(args.net) if args.net else None
    if args.solver == "enhanced" and net is None:
        raise ConfigError("--solver enhanced requires --net")
    w = _pulse_from_args(args, m.c.grid)
    for n in range(args.windows):
        if args.solver == "fine":
            w = fine_propagate(w, m, args.dt_star)
        elif args.solver == "coarse":
            w = coarse_tilde(w, m, args.dt_star)
        else:
            w = enhanced_step(w, m, net, args.dt_star)
        if args.snapshots:
            stack = np.stack((w.u.values, w.v.values))
            write_field_file(f"{args.snapshots}-{n + 1:03d}.pwf2", stack)
    write_field_file(args.out, np.stack((w.u.values, w.v.values)))
    _write_manifest(
        args.out,
        "propagate",
        {
            "medium": args.medium,
            "kind": args.kind,
            "value": args.value,
            "solver": args.solver,
            "net": args.net,
            "dt_star": args.dt_star,
            "windows": args.windows,
            "center": args.center,
            "inv_sigma_sq": args.inv_sigma_sq,
            "out": str(args.out),
            "snapshots": args.snapshots,
        },
    )
    return EXIT_OK


def cmd_parareal(args) -> int:
    threads = _resolve_threads(args.threads)
    m = _medium_from_args(args)
    w0 = _pulse_from_args(args, m.c.grid)
    if args.variant == "plain":
        run = parareal_plain(w0, m, args.windows, args.iterations, args.dt_star,
                             workers=threads)
    elif args.variant == "enhanced":
        if not args.net:
            raise ConfigError("--variant enhanced requires --net")
        net = load_net(args.net)
        run = parareal_enhanced(w0, m, args.windows, args.iterations, args.dt_star,
                                net, workers=threads)
    else:
        run = parareal_procrustes(w0, m, args.windows, args.iterations, args.dt_star,
                                  workers=threads)
    rows = [
        (k, n, run.errors[k, n])
        for k in range(run.errors.shape[0])
        for n in range(run.errors.shape[1])
    ]
    _write_csv(args.out, ["k", "n", "rel_energy_error"], rows)
    _write_manifest(
        args.out,
        "parareal",
        {
            "medium": args.medium,
            "kind": args.kind,
            "value": args.value,
            "variant": args.variant,
            "net": args.net,
            "windows": args.windows,
            "iterations": args.iterations,
            "dt_star": args.dt_star,
            "center": args.center,
            "inv_sigma_sq": args.inv_sigma_sq,
            "threads": threads,
            "out": str(args.out),
            "fine_apps_per_iteration": run.fine_apps_per_iteration,
            "unstable": run.unstable,
        },
    )
    if run.unstable:
        print("parareal iteration blew up; results written for inspection", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_dispersion(args) -> int:
    if args.n < 4 or args.n % 2:
        raise ConfigError("mode count must be an even integer >= 4")
    dx = 2.0 / args.n
    rows = []
    for mode in range(args.n // 2):
        k = np.pi * mode
        rows.append(
            (
                mode,
                k,
                omega_exact(args.c, k),
                omega_semidiscrete(args.c, k, dx),
                dispersion_error(args.c, k, dx),
                dispersion_error_rel(args.c, k, dx),
            )
        )
    _write_csv(
        args.out,
        ["mode", "k", "omega_exact", "omega_semidiscrete", "error_abs", "error_rel"],
        rows,
    )
    _write_manifest(args.out, "dispersion",
                    {"c": args.c, "n": args.n, "out": str(args.out)})
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.net:
        net = load_net(args.net)
        if net.dt_star is not None and abs(net.dt_star - args.dt_star) > 1e-12:
            raise ConfigError(
                f"network was trained for dt_star={net.dt_star}, asked for {args.dt_star}"
            )
    else:
        net = zero_kernel_net(dt_star=args.dt_star)
    c_values = np.linspace(args.c_min, args.c_max, args.c_count)
    if args.phantom:
        rows = [(c, phantom_energy(net, constant_medium(c))) for c in c_values]
        header = ["c", "phantom_energy"]
    else:
        inv_sigmas = np.linspace(args.inv_sigma_min, args.inv_sigma_max,
                                 args.inv_sigma_count)
        rows = []
        for inv_sigma in inv_sigmas:
            spec = PulseSpec(center=(0.0, 0.0), inv_sigma_sq=float(inv_sigma) ** 2)
            for c in c_values:
                m = constant_medium(c)
                # test field: the pulse developed over two windows
                w = gaussian_pulse(m.c.grid, spec)
                for _ in range(2):
                    w = fine_propagate(w, m, args.dt_star)
                rows.append((inv_sigma, c, eval_step_error(net, m, w, args.dt_star)))
        header = ["inv_sigma", "c", "error"]
    _write_csv(args.out, header, rows)
    _write_manifest(
        args.out,
        "eval",
        {
            "net": args.net,
            "dt_star": args.dt_star,
            "phantom": args.phantom,
            "c_min": args.c_min,
            "c_max": args.c_max,
            "c_count": args.c_count,
            "inv_sigma_min": args.inv_sigma_min,
            "inv_sigma_max": args.inv_sigma_max,
            "inv_sigma_count": args.inv_sigma_count,
            "out": str(args.out),
        },
    )
    return EXIT_OK


def cmd_columns(args) -> int:
    """Reformat a CSV into whitespace-separated gnuplot columns."""
    with open(args.csv, newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if not rows:
        raise FormatError(f"{args.csv} is empty")
    with open(args.out, "w") as f:
        f.write("# " + " ".join(rows[0]) + "\n")
        for row in rows[1:]:
            f.write(" ".join(row) + "\n")
    _write_manifest(args.out, "columns", {"csv": str(args.csv), "out": str(args.out)})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parawave",
        description="Workbench for coarse/fine wave propagation, learned "
        "corrections, and parallel-in-time studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("medium", help="synthesize or crop a wave-speed field")
    p.add_argument("--kind", required=True,
                   choices=["waveguide", "inclusion", "constant", "crop"])
    p.add_argument("--value", type=float, default=1.0)
    p.add_argument("--source", help="PWF2 raster for --kind crop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="medium.pwf2")
    p.set_defaults(func=cmd_medium)

    p = sub.add_parser("dataset", help="generate a training dataset")
    p.add_argument("--dt-star", type=float, default=0.2)
    p.add_argument("--n-media", type=int, default=DESK_N_MEDIA)
    p.add_argument("--pulses-per-medium", type=int, default=1)
    p.add_argument("--n-steps", type=int, default=DESK_N_STEPS)
    p.add_argument("--variant", choices=list(VARIANTS), default="t")
    p.add_argument("--k-max", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="dataset.pwds")
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser("train", help="train the correction network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="net.pwnn")
    p.add_argument("--log", default=None, help="CSV loss log (default OUT.log.csv)")
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", default="0:1e-3,1000:5e-4",
                   help="schedule 'epoch:lr,epoch:lr,...'")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--kernel", type=int, default=3)
    p.add_argument("--skip-mode", choices=["add", "concat"], default="add")
    p.add_argument("--linear", action="store_true",
                   help="identity activations, no bias, no batch norm")
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--checkpoint-dir", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("propagate", help="advance a pulse through a medium")
    _add_medium_flags(p)
    _add_pulse_flags(p)
    p.add_argument("--solver", choices=["fine", "coarse", "enhanced"], default="fine")
    p.add_argument("--net", help="network checkpoint for --solver enhanced")
    p.add_argument("--dt-star", type=float, default=0.2)
    p.add_argument("--windows", type=int, default=5)
    p.add_argument("--snapshots", help="prefix for per-window snapshot files")
    p.add_argument("--out", default="final.pwf2")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("parareal", help="run a parallel-in-time study")
    _add_medium_flags(p)
    _add_pulse_flags(p)
    p.add_argument("--variant", choices=["plain", "enhanced", "procrustes"],
                   default="plain")
    p.add_argument("--net", help="network checkpoint for --variant enhanced")
    p.add_argument("--windows", type=int, default=5)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--dt-star", type=float, default=0.2)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="parareal.csv")
    p.set_defaults(func=cmd_parareal)

    p = sub.add_parser("dispersion", help="tabulate semidiscrete dispersion errors")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--n", type=int, default=64, help="grid size (dx = 2/n)")
    p.add_argument("--out", default="dispersion.csv")
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("eval", help="sweep pulse widths and speeds, tabulate errors")
    p.add_argument("--net", help="network checkpoint (default: interpolation baseline)")
    p.add_argument("--dt-star", type=float, default=0.2)
    p.add_argument("--phantom", action="store_true",
                   help="tabulate energy fabricated from zero input instead")
    p.add_argument("--c-min", type=float, default=0.1)
    p.add_argument("--c-max", type=float, default=3.0)
    p.add_argument("--c-count", type=int, default=5)
    p.add_argument("--inv-sigma-min", type=float, default=5.0)
    p.add_argument("--inv-sigma-max", type=float, default=20.0)
    p.add_argument("--inv-sigma-count", type=int, default=4)
    p.add_argument("--out", default="eval.csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("columns", help="convert a CSV into gnuplot-ready columns")
    p.add_argument("csv")
    p.add_argument("--out", default="columns.dat")
    p.set_defaults(func=cmd_columns)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NumericError, StabilityError) as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ParawaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
