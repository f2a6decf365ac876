"""Command-line front end.

Subcommands cover the two pipelines end to end:

* ``fit`` / ``infer`` / ``baseline`` -- per-channel tap-delay-line models,
  fused estimation, and joint-regression baselines over CSV time series;
* ``couple`` / ``score`` / ``sweep`` -- divergence-transition analysis of a
  discrete channel, unsupervised image scoring, and error-vs-noise curves.

Conventions: every command takes ``--seed`` and ``--out``; JSON outputs
embed the resolved configuration, package version and seed; identical
invocations produce byte-identical outputs.  Exit codes: 0 success, 1
computation or validation failure, 2 usage or I/O trouble.  ``sweep``
parallelism is capped by the ``CTDA_THREADS`` environment variable
(0 or unset = one worker per CPU).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .baselines import fit_bayes, fit_ols, linear_model_to_dict, predict_series
from .coupling import (
    build_dtm,
    local_mi_approx,
    perturb_distribution,
    score_table,
    solution_to_dict,
    solve_coupling,
)
from .dataio import (
    ALIGN_POLICIES,
    FileFormatError,
    align,
    format_timestamp,
    load_csv,
    load_images_csv,
)
from .equalizer import estimate_series, model_from_dict, model_to_dict, select_length
from .fusion import (
    FUSION_MODES,
    FusionModel,
    equal_gain_weights,
    fusion_to_dict,
    mrc_weights_inverse_mse,
    mrc_weights_lmmse,
    online_alpha_update,
    select_channels,
    selective_weights,
)
from .scoring import (
    build_image_scorer,
    error_vs_noise_curve,
    save_curve_csv,
    save_scores_csv,
    score_dataset,
    score_dataset_per_pixel,
    separation_error,
)
from .stats import (
    DiscreteDistribution,
    load_channel,
    load_distribution,
    parametric_channel,
    uniform_distribution,
)


def _dims(text: str):
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is not WIDTHxHEIGHT"
        ) from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return w, h


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a comma list of numbers") from None


def _grid(text: str):
    """Noise grid: 'start:stop:step' (stop inclusive), a comma list, or one value."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [start + k * step for k in range(count)]
        if "," in text:
            values = [float(v) for v in text.split(",") if v.strip()]
            if not values:
                raise ValueError
            return values
        return [float(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"{text!r} is not start:stop:step, a comma list, or a number"
        ) from None


def _config(args: argparse.Namespace) -> dict:
    return {
        k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command")
    }


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load_series_bundle(args):
    """Load input and target CSVs and put them on one clock.

    Returns ``(names, timestamps, xs, y, iso)`` where ``xs[m]`` is channel
    ``m``'s aligned values.
    """
    paths = [p for p in args.input.split(",") if p.strip()]
    if not paths:
        raise ValueError("no input series given")
    series = [load_csv(p, args.time_column, args.value_column) for p in paths]
    names = [s.name for s in series]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate series names among inputs: {names}")
    target = load_csv(args.target, args.time_column, args.value_column)
    timestamps, matrix = align(series + [target], args.align)
    return names, timestamps, matrix[:-1], matrix[-1], target.iso_dates


def _write_predictions_csv(path, timestamps, iso, y_true, y_hat) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "y_true", "y_hat", "abs_err"])
        for ts, yt, yh in zip(timestamps, y_true, y_hat):
            writer.writerow(
                [
                    format_timestamp(ts, iso),
                    repr(float(yt)),
                    repr(float(yh)),
                    repr(abs(float(yt) - float(yh))),
                ]
            )


def _load_channel_arg(args):
    if (args.channel is None) == (args.channel_e is None):
        raise ValueError("give exactly one of --channel or --channel-e")
    if args.channel is not None:
        return load_channel(args.channel)
    return parametric_channel(args.channel_e)


# --- fit ---------------------------------------------------------------------


def cmd_fit(args) -> None:
    names, _, xs, y, _ = _load_series_bundle(args)
    channels = []
    for name, x in zip(names, xs):
        model = select_length(x, y, args.max_length, args.select, args.mode)
        channels.append((name, model))
        print(
            f"{name}: length={model.length} training_mse={model.training_mse:.6g} "
            f"validation_mse={model.validation_mse:.6g}"
            + (" (degenerate fit)" if model.degenerate else "")
        )
    payload = {
        "config": _config(args),
        "version": __version__,
        "seed": args.seed,
        "channels": [
            {"name": name, "model": model_to_dict(model)} for name, model in channels
        ],
    }
    _write_json(args.out, payload)
    print(f"wrote {args.out}")


# --- infer -------------------------------------------------------------------


def _initial_alphas(mode, models, est, y_eval):
    if mode == "mrc_inverse_mse":
        return mrc_weights_inverse_mse([m.validation_mse for m in models]), False
    if mode == "mrc_lmmse":
        return mrc_weights_lmmse(est, y_eval)
    if mode == "equal_gain":
        return equal_gain_weights(len(models)), False
    return selective_weights([m.validation_mse for m in models]), False


def cmd_infer(args) -> None:
    with open(args.models, "r", encoding="utf-8") as fh:
        stored = json.load(fh)
    try:
        bank = {c["name"]: model_from_dict(c["model"]) for c in stored["channels"]}
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"{args.models}: malformed model file ({exc})") from exc

    names, timestamps, xs, y, iso = _load_series_bundle(args)
    missing = [n for n in bank if n not in names]
    if missing:
        raise ValueError(f"no input series for fitted channels {missing}")
    series_by_name = dict(zip(names, xs))
    channels = [(name, bank[name]) for name in sorted(bank)]

    forced = False
    if args.top_k and args.mse_threshold is not None:
        raise ValueError("give at most one of --top-k and --mse-threshold")
    if args.top_k:
        channels, forced = select_channels(channels, "top_k", k=args.top_k)
    elif args.mse_threshold is not None:
        channels, forced = select_channels(
            channels, "mse_threshold", threshold=args.mse_threshold
        )
    if forced:
        print("no channel met the MSE threshold; keeping the single best")

    models = [m for _, m in channels]
    inputs = [series_by_name[name] for name, _ in channels]
    offsets = [1 if m.mode == "predict" else 0 for m in models]
    start = max(m.length + off for m, off in zip(models, offsets))
    n = y.size
    if start >= n:
        raise ValueError("aligned series are too short to score a single sample")
    targets = np.arange(start, n)
    est = np.vstack(
        [
            estimate_series(m, x, targets - off)
            for m, x, off in zip(models, inputs, offsets)
        ]
    )
    y_eval = y[targets]

    alphas, degenerate = _initial_alphas(args.fusion, models, est, y_eval)
    fused_model = FusionModel(
        channels=tuple(channels), alphas=alphas, mode=args.fusion, degenerate=degenerate
    )

    if args.online_window:
        histories: list[list[float]] = [[] for _ in models]
        fused = np.zeros(targets.size)
        current = fused_model
        for i in range(targets.size):
            fused[i] = float(current.alphas @ est[:, i])
            for h, row in zip(histories, est):
                h.append(float((y_eval[i] - row[i]) ** 2))
            current = online_alpha_update(current, histories, args.online_window)
        fused_model = current
    else:
        fused = fused_model.alphas @ est

    for (name, model), alpha, row in zip(channels, fused_model.alphas, est):
        mse = float(np.mean((y_eval - row) ** 2))
        print(f"{name}: alpha={alpha:.6g} standalone_mse={mse:.6g}")
    fused_mse = float(np.mean((y_eval - fused) ** 2))
    print(f"fused_mse={fused_mse:.6g} over {targets.size} samples ({args.fusion})")

    _write_predictions_csv(args.out, timestamps[targets], iso, y_eval, fused)
    print(f"wrote {args.out}")
    if args.fusion_out:
        payload = {
            "config": _config(args),
            "version": __version__,
            "seed": args.seed,
        }
        payload.update(fusion_to_dict(fused_model))
        _write_json(args.fusion_out, payload)
        print(f"wrote {args.fusion_out}")


# --- baseline ------------------------------------------------------------------


def cmd_baseline(args) -> None:
    _, timestamps, xs, y, iso = _load_series_bundle(args)
    n = y.size
    if not 0 < args.train_frac <= 1:
        raise ValueError("--train-frac must be in (0, 1]")
    split = int(args.train_frac * n)
    if split <= args.lag + 1:
        raise ValueError("training block too short for the requested lag")
    if args.method == "ols":
        model = fit_ols(xs[:, :split], y[:split], args.lag)
    else:
        model = fit_bayes(
            xs[:, :split],
            y[:split],
            args.lag,
            prior_variance=args.prior_var,
            noise_variance=args.noise_var,
        )
    start = split if split < n else args.lag
    targets = np.arange(start, n)
    est = predict_series(model, xs, targets)
    y_eval = y[targets]
    mse = float(np.mean((y_eval - est) ** 2))
    scope = "test" if split < n else "training"
    print(
        f"{args.method}: lag={args.lag} residual_mse={model.residual_mse:.6g} "
        f"{scope}_mse={mse:.6g} over {targets.size} samples"
        + (" (degenerate fit)" if model.degenerate else "")
    )
    _write_predictions_csv(args.out, timestamps[targets], iso, y_eval, est)
    print(f"wrote {args.out}")
    if args.model_out:
        payload = {
            "config": _config(args),
            "version": __version__,
            "seed": args.seed,
        }
        payload.update(linear_model_to_dict(model))
        _write_json(args.model_out, payload)
        print(f"wrote {args.model_out}")


# --- couple --------------------------------------------------------------------


def cmd_couple(args) -> None:
    channel = _load_channel_arg(args)
    source = (
        load_distribution(args.source)
        if args.source
        else uniform_distribution(channel.n_inputs)
    )
    dtm = build_dtm(channel, source)
    solution = solve_coupling(dtm)
    table = score_table(solution, dtm)
    payload = {
        "config": _config(args),
        "version": __version__,
        "seed": args.seed,
    }
    payload.update(solution_to_dict(solution, table))
    if args.delta > 0:
        plus = perturb_distribution(dtm.p_x, solution.psi_x, args.delta, +1)
        minus = perturb_distribution(dtm.p_x, solution.psi_x, args.delta, -1)
        full_plus = np.zeros(dtm.input_alphabet)
        full_minus = np.zeros(dtm.input_alphabet)
        full_plus[dtm.input_symbols] = plus.probs
        full_minus[dtm.input_symbols] = minus.probs
        payload["perturbation"] = {
            "delta": args.delta,
            "p_x_plus": full_plus.tolist(),
            "p_x_minus": full_minus.tolist(),
            "local_mi": local_mi_approx(
                np.array([0.5, 0.5]),
                np.vstack([solution.psi_x, -solution.psi_x]),
                args.delta,
            ),
        }
    _write_json(args.out, payload)
    print(
        f"second_singular_value={solution.second_singular_value:.6g} "
        f"degenerate_subspace={str(solution.degenerate_subspace).lower()}"
    )
    print(f"wrote {args.out}")


# --- score ---------------------------------------------------------------------


def cmd_score(args) -> None:
    channel = _load_channel_arg(args)
    width = height = None
    if args.dims:
        width, height = args.dims
    dataset = load_images_csv(
        args.images, width=width, height=height, alphabet_size=channel.n_outputs
    )
    if args.mode == "pooled":
        table = build_image_scorer(dataset.images, channel, smooth=args.smooth)
        items = score_dataset(dataset, table)
    else:
        items = score_dataset_per_pixel(dataset, channel, smooth=True)
    save_scores_csv(items, args.out)
    print(f"scored {len(items)} images (mode={args.mode})")
    if dataset.labels is not None:
        try:
            err = separation_error(items)
        except ValueError as exc:
            print(f"separation error unavailable: {exc}")
        else:
            print(f"separation_error={err:.6g}")
    print(f"wrote {args.out}")


# --- sweep ---------------------------------------------------------------------


def cmd_sweep(args) -> None:
    width, height = args.dims
    dist_a = DiscreteDistribution(np.asarray(args.p_a))
    dist_b = DiscreteDistribution(np.asarray(args.p_b))
    points = error_vs_noise_curve(
        dist_a,
        dist_b,
        width,
        height,
        args.n,
        args.e_grid,
        args.seed,
        threads=args.threads,
    )
    for pt in points:
        print(
            f"e={pt.e:.4f} error_probability={pt.error_probability:.6g} "
            f"n_images={pt.n_images} seed={pt.seed}"
        )
    save_curve_csv(points, args.out)
    print(f"wrote {args.out}")


# --- parser ----------------------------------------------------------------------


def _add_series_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="comma-separated input series CSVs")
    p.add_argument("--target", required=True, help="target series CSV")
    p.add_argument("--align", choices=ALIGN_POLICIES, default="inner")
    p.add_argument("--time-column", default="date")
    p.add_argument("--value-column", default="value")


def _add_channel_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--channel", help="channel JSON file")
    group.add_argument(
        "--channel-e", type=float, help="noise level of the built-in 4-symbol channel"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctda",
        description="Equalize, fuse and benchmark time series; analyze and score "
        "noisy discrete observations.",
    )
    parser.add_argument("--version", action="version", version=f"ctda {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit one tap-delay-line model per input series")
    _add_series_flags(p)
    p.add_argument("--max-length", type=int, default=10)
    p.add_argument("--select", choices=("validation", "aic"), default="validation")
    p.add_argument("--mode", choices=("infer", "predict"), default="infer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model JSON to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("infer", help="fused estimates from fitted channel models")
    p.add_argument("--models", required=True, help="model JSON from 'fit'")
    _add_series_flags(p)
    p.add_argument("--fusion", choices=FUSION_MODES, default="mrc_inverse_mse")
    p.add_argument("--top-k", type=int, default=0, help="keep only the k best channels")
    p.add_argument(
        "--mse-threshold",
        type=float,
        default=None,
        help="keep channels with validation MSE at most this",
    )
    p.add_argument(
        "--online-window",
        type=int,
        default=0,
        help="trailing window for online weight refresh (mrc_inverse_mse only)",
    )
    p.add_argument("--fusion-out", default=None, help="also write the fusion JSON here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("baseline", help="joint linear regression over all inputs")
    _add_series_flags(p)
    p.add_argument("--method", choices=("ols", "bayes"), default="ols")
    p.add_argument("--lag", type=int, default=0)
    p.add_argument("--prior-var", type=float, default=1.0)
    p.add_argument("--noise-var", type=float, default=None)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--model-out", default=None, help="also write the model JSON here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("couple", help="divergence-transition analysis of a channel")
    _add_channel_flags(p)
    p.add_argument("--source", default=None, help="input distribution JSON (default uniform)")
    p.add_argument("--delta", type=float, default=0.0, help="perturbation size to report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="solution JSON to write")
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("score", help="score noisy images without labels")
    p.add_argument("--images", required=True, help="image dataset CSV")
    _add_channel_flags(p)
    p.add_argument("--mode", choices=("pooled", "per_pixel"), default="pooled")
    p.add_argument(
        "--smooth",
        action="store_true",
        help="smooth the pooled marginal (per_pixel always smooths)",
    )
    p.add_argument("--dims", type=_dims, default=None, help="image geometry WxH")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="scores CSV to write")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sweep", help="separation error across channel noise levels")
    p.add_argument("--e-grid", type=_grid, default="0:0.25:0.025")
    p.add_argument("--p-a", type=_float_list, default="0.7,0.1,0.1,0.1")
    p.add_argument("--p-b", type=_float_list, default="0.1,0.1,0.1,0.7")
    p.add_argument("--n", type=int, default=100, help="images per class")
    p.add_argument("--dims", type=_dims, default="19x19")
    p.add_argument("--threads", type=int, default=0, help="0 = CTDA_THREADS or CPUs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="curve CSV to write")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
