"""Command-line front door: calibration, accounting, statistical audits,
gradient checks, training and activation benchmarking.

Exit codes: 0 success, 1 internal or assertion failure (audits that do not
pass), 2 usage or configuration error. Every randomized command takes an
explicit --seed (default 0); nothing is seeded from the clock.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import statistics
import sys
import time
from dataclasses import replace

import numpy as np

from . import nn
from .accountant import (
    PrivacyLedger,
    calibrate_sigma,
    delta_of_epsilon,
    mc_privacy_loss_delta,
)
from .ctensor import Rng, circularity_report, sample_circular_gaussian
from .data import ComplexDataset, gen_complex_blobs, gen_fourier_signals, \
    gen_paired_prototypes, load_zdpc, save_zdpc, split_per_class
from .errors import DomainError, FormatError
from .trainer import NONPRIVATE_BOUND, TrainConfig, train
from .wirtinger import backward, forward, gradcheck, \
    r2_flat_gradient_square_magnitude


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Config parsing
# --------------------------------------------------------------------------

def _check_keys(section: dict, allowed: set[str], where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}")


def parse_architecture(section: dict) -> nn.Architecture:
    _check_keys(section, {"input_dim", "input_shape", "layers", "head",
                          "igaussian_width"}, "architecture")
    if "input_dim" in section:
        input_shape = (int(section["input_dim"]),)
    elif "input_shape" in section:
        input_shape = tuple(int(s) for s in section["input_shape"])
    else:
        raise ConfigError("architecture needs input_dim or input_shape")
    layers = []
    for i, spec in enumerate(section.get("layers", [])):
        _check_keys(spec, {"kind", "units", "out_channels", "kernel", "stride",
                           "activation"}, f"architecture.layers[{i}]")
        layers.append(nn.LayerSpec(
            kind=spec.get("kind", "dense"),
            units=int(spec.get("units", 0)),
            out_channels=int(spec.get("out_channels", 0)),
            kernel=int(spec.get("kernel", 0)),
            stride=int(spec.get("stride", 1)),
            activation=spec.get("activation"),
        ))
    if "head" not in section:
        raise ConfigError("architecture needs a head")
    try:
        return nn.Architecture(
            input_shape=input_shape, layers=tuple(layers), head=section["head"],
            igaussian_width=float(section.get("igaussian_width", 1.0)))
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def parse_train(section: dict, seed: int, dataset_size: int | None = None) -> TrainConfig:
    _check_keys(section, {"learning_rate", "noise_multiplier", "sampling_rate",
                          "clip_bound", "steps", "sampling_mode", "target_delta",
                          "lr_decay_factor", "lr_decay_every"}, "train")
    delta = section.get("target_delta", 1e-5)
    if delta == "n^-1.1":
        # the dataset-size convention delta = N^(-1.1)
        if not dataset_size:
            raise ConfigError("target_delta 'n^-1.1' needs a dataset")
        delta = float(dataset_size) ** -1.1
    try:
        return TrainConfig(
            learning_rate=float(section["learning_rate"]),
            noise_multiplier=float(section.get("noise_multiplier", 0.0)),
            sampling_rate=float(section["sampling_rate"]),
            clip_bound=float(section.get("clip_bound", NONPRIVATE_BOUND)),
            steps=int(section["steps"]),
            sampling_mode=section.get("sampling_mode", "poisson"),
            seed=seed,
            target_delta=float(delta),
            lr_decay_factor=section.get("lr_decay_factor"),
            lr_decay_every=section.get("lr_decay_every"),
        )
    except KeyError as exc:
        raise ConfigError(f"train section is missing {exc}") from exc
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


GENERATORS = {
    "complex_blobs": (
        gen_complex_blobs, {"classes", "dim", "separation"}),
    "paired_prototypes": (
        gen_paired_prototypes, {"noise_std", "dim"}),
    "fourier_signals": (
        gen_fourier_signals, {"length", "keep", "noise_amplitude"}),
}

_DATA_STREAM = 101


def parse_dataset(section: dict, seed: int) -> tuple[ComplexDataset, ComplexDataset | None]:
    _check_keys(section, {"generator", "params", "path", "test_path"}, "dataset")
    if "path" in section:
        train_set = load_zdpc(section["path"])
        test_set = load_zdpc(section["test_path"]) if "test_path" in section else None
        return train_set, test_set
    if "generator" not in section:
        raise ConfigError("dataset needs a generator or a path")
    name = section["generator"]
    if name not in GENERATORS:
        raise ConfigError(f"unknown generator {name!r}")
    fn, allowed = GENERATORS[name]
    params = dict(section.get("params", {}))
    _check_keys(params, allowed | {"train_per_class", "test_per_class"},
                f"dataset.params ({name})")
    n_train = int(params.pop("train_per_class"))
    n_test = int(params.pop("test_per_class", 0))
    # One corpus, split per class: train and test share the class structure
    # (blob means, prototypes, tones) and differ only in their draws.
    full = fn(n_per_class=n_train + n_test, rng=Rng(seed, _DATA_STREAM), **params)
    if n_test == 0:
        return full, None
    return split_per_class(full, n_train)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            config = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _check_keys(config, {"seed", "dataset", "architecture", "train", "outputs"},
                "config")
    for key in ("dataset", "architecture", "train"):
        if key not in config:
            raise ConfigError(f"config is missing the {key!r} section")
    _check_keys(config.get("outputs", {}),
                {"metrics_csv", "checkpoint", "ledger_csv"}, "outputs")
    return config


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

def save_checkpoint(basename: str, params: dict[str, np.ndarray], config: dict,
                    ledger: PrivacyLedger | None):
    """Parameters as one flat ZDPC tensor plus a JSON sidecar describing the
    per-parameter layout, the config and the recorded ledger."""
    layout = []
    chunks = []
    for name in sorted(params):
        arr = np.asarray(params[name])
        layout.append({"name": name, "shape": list(arr.shape),
                       "kind": "complex" if np.iscomplexobj(arr) else "real"})
        chunks.append(arr.astype(np.complex128).ravel())
    flat = np.concatenate(chunks) if chunks else np.zeros(1, dtype=np.complex128)
    save_zdpc(f"{basename}.zdpc", flat[None, :], [0], classes=2)
    sidecar = {"layout": layout, "config": config}
    if ledger is not None:
        sidecar["ledger"] = {
            "target_delta": ledger.target_delta,
            "groups": [{"sigma": g.sigma, "q": g.q, "steps": g.steps, "mode": g.mode}
                       for g in ledger.groups],
        }
    with open(f"{basename}.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def load_checkpoint(basename: str) -> dict[str, np.ndarray]:
    with open(f"{basename}.json") as fh:
        sidecar = json.load(fh)
    flat = load_zdpc(f"{basename}.zdpc").examples[0]
    params = {}
    offset = 0
    for entry in sidecar["layout"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = flat[offset:offset + size].reshape(entry["shape"])
        params[entry["name"]] = chunk if entry["kind"] == "complex" else chunk.real
        offset += size
    return params


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    if not 0 < args.delta < 1:
        raise ConfigError(f"delta out of range (0, 1): {args.delta}")
    sigma = calibrate_sigma(args.sensitivity, args.eps, args.delta)
    print(f"sigma={sigma:.12g}")
    return 0


def cmd_account(args) -> int:
    if args.profile is not None:
        # inverse view: report delta(eps) of a single release at this sigma
        delta = delta_of_epsilon(args.sensitivity, args.sigma, args.profile)
        print(f"delta={delta:.12g}")
        return 0
    if not 0 < args.delta < 1:
        raise ConfigError(f"delta out of range (0, 1): {args.delta}")
    ledger = PrivacyLedger(target_delta=args.delta)
    if args.steps > 0:
        ledger.record(args.sigma, args.sampling_rate, args.steps, args.mode)
    eps, alpha = ledger.epsilon()
    print(f"epsilon={eps:.12g} delta={args.delta:g} best_alpha={alpha:.6g} "
          f"steps={args.steps}")
    if args.mode == "uniform":
        print("note: approximate under uniform sampling (Poisson amplification bound)")
    return 0


def run_noise_audit(sigma: float, n: int, rng: Rng,
                    sampler=sample_circular_gaussian):
    """Draw n entries at total variance sigma^2 and audit circularity."""
    samples = sampler((int(n),), sigma * sigma, rng)
    return circularity_report(samples, sigma * sigma)


def cmd_audit_noise(args) -> int:
    report = run_noise_audit(args.sigma, args.n, Rng(args.seed))
    print(f"n={report.n} variance={report.variance:g}")
    print(f"var_re={report.var_re:.6f} var_im={report.var_im:.6f} "
          f"cov={report.cov:.2e} |pseudo|={abs(report.pseudo_mean):.2e} "
          f"mean|X|^2={report.mean_sq_magnitude:.6f}")
    for failure in report.failures:
        print(f"FAIL: {failure}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def cmd_audit_delta(args) -> int:
    analytic = delta_of_epsilon(args.sensitivity, args.sigma, args.eps)
    estimate, se = mc_privacy_loss_delta(
        args.sensitivity, args.sigma, args.eps, args.n, Rng(args.seed))
    gap = abs(estimate - analytic)
    ok = gap <= 3.0 * se + 1e-12
    print(f"delta_analytic={analytic:.6g} delta_mc={estimate:.6g} se={se:.3g} "
          f"gap={gap:.3g}")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


# Rejection margin around activation/head kinks: the truncation error of a
# central difference through the 1/r curvature of |z| grows like h^2/margin^2,
# so margin 0.02 keeps it near 2.5e-7 at the default h = 1e-5.
KINK_MARGIN = 2e-2
# Coordinates where adjoint and difference quotient are both below this are
# zeros at finite-difference resolution; see wirtinger.gradcheck.
GRAD_DEAD_BAND = 1e-6
GRADCHECK_TOL = 1e-5


def run_gradcheck_trial(arch: nn.Architecture, seed: int, max_resample: int = 200):
    """Gradcheck one random (params, input, label), resampling while the
    recorded computation passes too close to an activation kink."""
    loss_model = nn.loss_fn(arch)
    for attempt in range(max_resample):
        rng = Rng(seed, stream=attempt)
        params = nn.init_params(arch, rng.stream_at(1000 + attempt))
        x = np.asarray(sample_circular_gaussian(arch.input_shape, 1.0, rng))
        label = int(rng.uniform(1)[0] * arch.classes)

        def model(p, xv):
            return loss_model(p, xv, label)

        _, tape = forward(model, params, x)
        if nn.tape_kink_margin(tape) > KINK_MARGIN:
            return gradcheck(model, params, x, dead_band=GRAD_DEAD_BAND)
    raise DomainError(f"could not sample a kink-free point in {max_resample} tries")


def cmd_gradcheck(args) -> int:
    config = load_config(args.arch)
    arch = parse_architecture(config["architecture"])
    worst = 0.0
    for k in range(args.seeds):
        worst = max(worst, run_gradcheck_trial(arch, args.seed + k))
    # Pin the gradient convention: conjugate gradient of z*conj(z) has norm
    # |z| while the flattened R^2 gradient has norm 2|z|.
    z = 1.7 - 0.6j
    _, tape = forward(lambda p: p["z"] * p["z"].conj(), {"z": np.array(z)})
    wirt = float(np.abs(backward(tape).grads["z"]))
    flat = float(np.linalg.norm(r2_flat_gradient_square_magnitude(z)))
    print(f"max_relative_error={worst:.3g} over {args.seeds} seeds")
    print(f"flattened_to_wirtinger_norm_ratio={flat / wirt:.12f}")
    ok = worst <= GRADCHECK_TOL
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _format_eps(report) -> str:
    if report.epsilon is None:
        return "epsilon=inf"
    note = " (approximate under uniform sampling)" if report.approximate_under_uniform else ""
    return (f"epsilon={report.epsilon:.4f} delta={report.delta:g} "
            f"best_alpha={report.best_alpha:.4g}{note}")


def run_training(config: dict, seed: int, no_dp: bool, progress_writer=None,
                 workers: int = 1):
    train_set, test_set = parse_dataset(config["dataset"], seed)
    arch = parse_architecture(config["architecture"])
    tconf = parse_train(config["train"], seed, dataset_size=len(train_set))
    if no_dp:
        tconf = replace(tconf, noise_multiplier=0.0, clip_bound=NONPRIVATE_BOUND)
    report = train(train_set, arch, tconf, eval_set=test_set,
                   progress=progress_writer, workers=workers)
    return report, tconf


def cmd_train(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    outputs = config.get("outputs", {})

    progress_rows = []

    def progress(step, loss, lot_size, eps):
        progress_rows.append([step, f"{loss:.6f}", lot_size,
                              "" if eps is None else f"{eps:.6f}"])

    start = time.monotonic()
    report, tconf = run_training(config, seed, args.no_dp, progress,
                                 workers=args.workers)
    elapsed = time.monotonic() - start

    if "metrics_csv" in outputs:
        with open(outputs["metrics_csv"], "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "lot_size", "eps_so_far"])
            writer.writerows(progress_rows)
    if "checkpoint" in outputs:
        save_checkpoint(outputs["checkpoint"], report.params, config, report.ledger)
    if "ledger_csv" in outputs and report.ledger is not None:
        report.ledger.write_csv(outputs["ledger_csv"])

    final_losses = [l for l in report.losses if not math.isnan(l)]
    if final_losses:
        print(f"steps={len(report.losses)} final_loss={final_losses[-1]:.6f}")
    else:
        print(f"steps={len(report.losses)}")
    if report.accuracy is not None:
        print(f"accuracy={report.accuracy:.4f}")
    if report.auc is not None:
        print(f"roc_auc={report.auc:.4f}")
    print(_format_eps(report))
    if not args.deterministic_output:
        print(f"[time] {elapsed:.2f} s")
    return 0


def cmd_bench_activations(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    train_set, test_set = parse_dataset(config["dataset"], seed)
    if test_set is None:
        raise ConfigError("bench-activations needs a test split")
    arch = parse_architecture(config["architecture"])
    base = parse_train(config["train"], seed)
    metric_name = "roc_auc" if arch.head == "magnitude_sigmoid" else "accuracy"

    rows = []
    start = time.monotonic()
    for kind in sorted(nn.ACTIVATIONS):
        swapped = nn.Architecture(
            input_shape=arch.input_shape,
            layers=tuple(
                nn.LayerSpec(kind=l.kind, units=l.units, out_channels=l.out_channels,
                             kernel=l.kernel, stride=l.stride,
                             activation=kind if l.activation is not None else None)
                for l in arch.layers),
            head=arch.head, igaussian_width=arch.igaussian_width)
        values = []
        for rep in range(args.repeats):
            tconf = replace(base, seed=seed + rep)
            report = train(train_set, swapped, tconf, eval_set=test_set)
            values.append(report.auc if metric_name == "roc_auc" else report.accuracy)
        mean = statistics.fmean(values)
        std = statistics.pstdev(values) if len(values) > 1 else 0.0
        rows.append((mean, std, kind))
    elapsed = time.monotonic() - start

    rows.sort()
    print(f"activation {metric_name} over {args.repeats} repetitions (ascending)")
    for mean, std, kind in rows:
        print(f"{kind:32s} {mean:.4f} +/- {std:.4f}")
    if not args.deterministic_output:
        print(f"[time] {elapsed:.2f} s")
    return 0


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zetadp",
        description="Differentially private complex-valued learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="randomness seed (default 0 or the config's seed)")
        p.add_argument("--deterministic-output", action="store_true",
                       help="suppress timing lines so reruns match byte for byte")

    p = sub.add_parser("calibrate", help="smallest sigma for an (eps, delta) target")
    p.add_argument("--sensitivity", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    common(p)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("account", help="epsilon of a composed DP-SGD ledger")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--sampling-rate", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--delta", type=float, default=1e-5)
    p.add_argument("--mode", choices=("poisson", "uniform"), default="poisson")
    p.add_argument("--profile", type=float, default=None, metavar="EPS",
                   help="report delta(EPS) of one release at --sigma instead")
    p.add_argument("--sensitivity", type=float, default=1.0)
    common(p)
    p.set_defaults(fn=cmd_account)

    p = sub.add_parser("audit-noise", help="circularity audit of the noise sampler")
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_audit_noise)

    p = sub.add_parser("audit-delta", help="Monte-Carlo check of the delta profile")
    p.add_argument("--sensitivity", type=float, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    common(p)
    p.set_defaults(fn=cmd_audit_delta)

    p = sub.add_parser("gradcheck", help="finite-difference check of the autodiff engine")
    p.add_argument("--arch", required=True, help="config file providing the architecture")
    p.add_argument("--seeds", type=int, default=10)
    common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--no-dp", action="store_true",
                   help="disable clipping and noise (reports epsilon=inf)")
    p.add_argument("--workers", type=int, default=1,
                   help="per-sample worker pool cap (results are identical "
                        "for any value)")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("bench-activations",
                       help="train every activation kind under identical settings")
    p.add_argument("--config", required=True)
    p.add_argument("--repeats", type=int, default=5)
    common(p)
    p.set_defaults(fn=cmd_bench_activations)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None and args.command in (
            "calibrate", "account", "audit-noise", "audit-delta", "gradcheck"):
        args.seed = 0
    try:
        return args.fn(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
