"""Command-line interface.

Every command writes its outputs and a ``result.json`` into ``--output-dir``.
The ``config`` block of that record fully determines the run, and
``stimd replay <result.json> --output-dir <dir>`` reproduces every
deterministic output byte for byte. Wall-clock timings go to a separate
``timing.json``.

Exit codes: 0 on success, 1 on usage, input or numerical errors, 2 when a
decomposition finishes with a mode flagged as not converged.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import fastica_factorize, suggest_guesses, svd_factorize
from .decomposition import StimdConfig, stimd_decompose
from .errors import StimdError
from .io import file_digest, read_json, read_matrix_csv, read_signal_csv, write_json, write_matrix_csv
from .nmp import NmpConfig, imf_from_phase
from .prediction import fit_phase_dynamics, predict
from .signals import SignalMatrix
from .spectrum import hilbert_spectrum, uniform_edges
from .synth import (
    EXAMPLES,
    align_and_score,
    generate_example,
    linear_guesses,
    noise_sweep,
    sensitivity_scan,
    source_signals,
    summed_error,
)
from .theta_space import ThetaSpaceConfig, normalize_phase

__all__ = ["main", "build_parser", "run_config"]

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2


class UsageError(Exception):
    """Invalid command-line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def parse_guesses(text: str) -> list:
    """Parse ``"f[:offset],..."`` into ``[[f, offset], ...]``."""
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        f, _, off = item.partition(":")
        try:
            out.append([float(f), float(off) if off else 0.0])
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"bad guess {item!r}; expected f_hz[:offset_rad]") from exc
    if not out:
        raise argparse.ArgumentTypeError("no guesses given")
    return out


def parse_range(text: str) -> list:
    """Parse ``"start:stop:step"`` (inclusive) into a list of floats."""
    parts = text.split(":")
    try:
        lo, hi, step = (float(p) for p in parts) if len(parts) == 3 else (float(parts[0]), float(parts[1]), 1.0)
    except (ValueError, IndexError) as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop[:step], got {text!r}") from exc
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError("range needs stop >= start and step > 0")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [float(np.round(lo + k * step, 12)) for k in range(count)]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stimd", description="Spatiotemporal intrinsic mode decomposition.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("decompose", help="decompose a multichannel signal")
    src = d.add_mutually_exclusive_group(required=True)
    src.add_argument("--example", choices=EXAMPLES)
    src.add_argument("--input", help="CSV with one channel per row")
    d.add_argument("--noise", type=float, default=0.0, help="noise std added to --example data")
    d.add_argument("--seed", type=int, default=0)
    g = d.add_mutually_exclusive_group()
    g.add_argument("--guesses", type=parse_guesses, help="f_hz[:offset_rad],... linear phase guesses")
    g.add_argument("--guess-file", help="CSV with one phase guess per row")
    g.add_argument("--auto-guess", action="store_true", help="derive guesses from ICA spectra")
    d.add_argument("--modes", type=int, help="number of modes (required with --auto-guess)")
    d.add_argument("--lambda-final", type=float)
    d.add_argument("--eta-step", type=float)
    d.add_argument("--inner-tol", type=float)
    d.add_argument("--max-inner-iters", type=int)
    d.add_argument("--noise-slack", type=float)
    d.add_argument("--resample-factor", type=float, help="theta-grid points per input sample")
    d.add_argument("--init", choices=("ica", "svd", "random"), default="ica")
    d.add_argument("--output-dir", required=True)

    pr = sub.add_parser("predict", help="continue decomposed modes in time")
    pr.add_argument("--result-dir", required=True, help="output directory of a decompose run")
    pr.add_argument("--horizon", type=float, required=True)
    pr.add_argument("--dt", type=float)
    pr.add_argument("--output-dir", required=True)

    sp = sub.add_parser("spectrum", help="Hilbert spectrum of decomposed modes")
    sp.add_argument("--result-dir", required=True)
    sp.add_argument("--t-bins", type=int, default=50)
    sp.add_argument("--f-bins", type=int, default=100)
    sp.add_argument("--f-max", type=float, help="upper frequency edge in Hz; Nyquist by default")
    sp.add_argument("--output-dir", required=True)

    b = sub.add_parser("bench", help="seeded benchmark sweeps")
    bsub = b.add_subparsers(dest="bench", required=True, parser_class=_Parser)
    bn = bsub.add_parser("noise")
    bn.add_argument("--example", choices=EXAMPLES, default="ex3d")
    bn.add_argument("--sigmas", type=_floats, default=[0.01, 0.1, 0.3, 1.0])
    bn.add_argument("--trials", type=int, default=20)
    bn.add_argument("--guesses", type=parse_guesses)
    bs = bsub.add_parser("sensitivity")
    bs.add_argument("--example", choices=EXAMPLES, default="sens_a")
    bs.add_argument("--range", type=parse_range, default=parse_range("1:25:1"), dest="f_range")
    bs.add_argument("--range2", type=parse_range, dest="f_range2", help="second-guess range; --range by default")
    bs.add_argument("--noise", type=float, default=0.0)
    bb = bsub.add_parser("baselines")
    bb.add_argument("--example", choices=EXAMPLES, default="ex2d")
    bb.add_argument("--noise", type=float, default=0.1)
    br = bsub.add_parser("runtime")
    br.add_argument("--samples", type=_ints, default=[500, 1000, 2000])
    br.add_argument("--channels", type=_ints, default=[2, 4, 8])
    for q in (bn, bs, bb, br):
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--output-dir", required=True)
        if q is not bb and q is not br:
            q.add_argument("--workers", type=int, help="worker processes, capped by STIMD_THREADS")

    r = sub.add_parser("replay", help="re-run a recorded configuration")
    r.add_argument("result", help="result.json of an earlier run")
    r.add_argument("--output-dir", required=True)
    return p


def _resolve(path) -> str:
    return str(Path(path).resolve())


def config_from_args(args) -> dict:
    """Translate parsed arguments into a JSON-serializable run configuration."""
    if args.command == "decompose":
        if args.example is None and args.noise:
            raise UsageError("--noise applies to --example data only")
        if args.noise < 0:
            raise UsageError("--noise must be non-negative")
        if not (args.guesses or args.guess_file or args.auto_guess):
            raise UsageError("supply --guesses, --guess-file or --auto-guess")
        if args.auto_guess and not args.modes:
            raise UsageError("--auto-guess needs --modes")
        if args.modes is not None and args.modes < 1:
            raise UsageError("--modes must be positive")
        if args.guesses and args.modes and args.modes != len(args.guesses):
            raise UsageError(f"--modes {args.modes} disagrees with {len(args.guesses)} guesses")
        if args.resample_factor is not None and args.resample_factor < 1:
            raise UsageError("--resample-factor must be at least 1")
        base = StimdConfig().nmp
        nmp = {"lambda_final": base.lambda_final, "eta_step": base.eta_step, "inner_tol": base.inner_tol,
               "max_inner_iters": base.max_inner_iters, "noise_slack": base.noise_slack}
        for key in nmp:
            v = getattr(args, key)
            if v is not None:
                nmp[key] = v
        try:
            NmpConfig(**nmp)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        cfg = {"command": "decompose", "example": args.example, "noise": float(args.noise), "seed": args.seed,
               "input": None, "input_sha256": None, "guesses": args.guesses, "guess_file": None,
               "guess_file_sha256": None, "auto_guess": bool(args.auto_guess),
               "modes": args.modes if args.modes else None, "nmp": nmp, "resample_factor": args.resample_factor,
               "init": args.init}
        if args.input:
            cfg["input"] = _resolve(args.input)
            cfg["input_sha256"] = file_digest(args.input)
        if args.guess_file:
            cfg["guess_file"] = _resolve(args.guess_file)
            cfg["guess_file_sha256"] = file_digest(args.guess_file)
        return cfg
    if args.command == "predict":
        if not args.horizon > 0:
            raise UsageError("--horizon must be positive")
        if args.dt is not None and not args.dt > 0:
            raise UsageError("--dt must be positive")
        return {"command": "predict", "result_dir": _resolve(args.result_dir), "horizon": args.horizon,
                "dt": args.dt}
    if args.command == "spectrum":
        if args.t_bins < 1 or args.f_bins < 1:
            raise UsageError("bin counts must be positive")
        return {"command": "spectrum", "result_dir": _resolve(args.result_dir), "t_bins": args.t_bins,
                "f_bins": args.f_bins, "f_max": args.f_max}
    if args.command == "bench":
        cfg = {"command": "bench", "bench": args.bench, "seed": args.seed}
        if args.bench == "noise":
            if args.trials < 1 or any(s < 0 for s in args.sigmas) or not args.sigmas:
                raise UsageError("need trials >= 1 and non-negative sigmas")
            cfg.update(example=args.example, sigmas=args.sigmas, trials=args.trials, guesses=args.guesses)
        elif args.bench == "sensitivity":
            cfg.update(example=args.example, f_range=args.f_range, f_range2=args.f_range2 or args.f_range,
                       noise=args.noise)
        elif args.bench == "baselines":
            cfg.update(example=args.example, noise=args.noise)
        else:
            if any(v < 4 for v in args.samples) or any(v < 1 for v in args.channels):
                raise UsageError("need at least 4 samples and 1 channel")
            cfg.update(samples=args.samples, channels=args.channels)
        return cfg
    raise UsageError(f"unknown command {args.command!r}")


# Commands. Each takes a config and an output directory and returns the
# result record plus an exit code.


def _stimd_config(cfg: dict, n: int) -> StimdConfig:
    pts = None if cfg["resample_factor"] is None else int(np.ceil(cfg["resample_factor"] * n))
    return StimdConfig(nmp=NmpConfig(theta=ThetaSpaceConfig(resample_points=pts), **cfg["nmp"]),
                       init=cfg["init"], seed=cfg["seed"])


def _load_input(cfg: dict):
    if cfg["example"]:
        ex = generate_example(cfg["example"], cfg["noise"], cfg["seed"])
        return ex.X, ex
    if file_digest(cfg["input"]) != cfg["input_sha256"]:
        raise ValueError(f"input {cfg['input']} changed since the run was recorded")
    return read_signal_csv(cfg["input"]), None


def _guesses(cfg: dict, X: SignalMatrix):
    if cfg["guesses"]:
        return linear_guesses([tuple(g) for g in cfg["guesses"]], X.t), None
    if cfg["guess_file"]:
        if file_digest(cfg["guess_file"]) != cfg["guess_file_sha256"]:
            raise ValueError(f"guess file {cfg['guess_file']} changed since the run was recorded")
        data, _ = read_matrix_csv(cfg["guess_file"])
        if cfg["modes"] and cfg["modes"] != data.shape[0]:
            raise ValueError(f"--modes {cfg['modes']} disagrees with {data.shape[0]} guess rows")
        return list(data), None
    sug = suggest_guesses(X, cfg["modes"], seed=cfg["seed"])
    info = {"frequencies": sug.frequencies.tolist(), "duplicates": [list(p) for p in sug.duplicates],
            "rank": sug.rank}
    return sug.phases, info


def cmd_decompose(cfg: dict, out: Path):
    X, ex = _load_input(cfg)
    scfg = _stimd_config(cfg, X.n)
    guesses, auto = _guesses(cfg, X)
    res = stimd_decompose(X, guesses, scfg)
    header = (X.t0, X.dt)
    write_matrix_csv(out / "B.csv", res.B)
    write_matrix_csv(out / "S.csv", res.S, header)
    write_matrix_csv(out / "residual.csv", res.residual.data, header)
    write_matrix_csv(out / "theta.csv", np.stack([m.theta.theta for m in res.modes]), header)
    write_matrix_csv(out / "amplitude.csv", np.stack([m.a for m in res.modes]), header)
    span = X.t[-1] - X.t[0]
    modes = []
    for i, (m, d, g) in enumerate(zip(res.modes, res.diagnostics, res.guesses_used)):
        modes.append({"index": i, "guess_frequency_hz": float((g[-1] - g[0]) / (2 * np.pi * span)),
                      "wave_count": float(m.theta.l_theta), "objective": d.objective,
                      "initial_objective": d.initial_objective, "alternations": d.alternations,
                      "converged": d.converged, "nmp_converged": d.nmp_converged,
                      "direction_converged": d.direction_converged, "no_descent": d.no_descent, "init": d.init})
    # Residual left after the first k modes, in extraction order.
    partial = X.data.copy()
    after = []
    for i, m in enumerate(res.modes):
        partial = partial - np.outer(res.B[:, i], m.s)
        after.append(float(np.linalg.norm(partial) / res.x_norm) if res.x_norm > 0 else 0.0)
    record = {"shape": [X.m, X.n], "grid": {"t0": X.t0, "dt": X.dt, "n": X.n}, "modes": modes,
              "residual_fraction": res.residual_fraction, "residual_fraction_after": after, "converged": res.converged, "auto_guess": auto}
    if ex is not None and ex.sources.shape[0] == len(res.modes):
        rep = align_and_score(res.S, ex.sources, res.B, ex.mixing)
        record["truth"] = {"per_mode_rel_error": rep.per_mode_rel_error.tolist(),
                           "correlations": rep.correlations.tolist(), "permutation": rep.permutation.tolist(),
                           "mixing_error": rep.mixing_error}
    return record, EXIT_OK if res.converged else EXIT_UNCONVERGED


def _load_modes(result_dir: Path):
    rec = read_json(result_dir / "result.json")
    if rec.get("config", {}).get("command") != "decompose":
        raise ValueError(f"{result_dir} does not hold a decompose result")
    theta, header = read_matrix_csv(result_dir / "theta.csv")
    amp, _ = read_matrix_csv(result_dir / "amplitude.csv")
    if header is None or theta.shape != amp.shape:
        raise ValueError("theta.csv and amplitude.csv are inconsistent")
    t = header[0] + header[1] * np.arange(theta.shape[1])
    modes = [imf_from_phase(a, normalize_phase(th, t, min_waves=1e-12)) for th, a in zip(theta, amp)]
    return rec, modes, header


def cmd_predict(cfg: dict, out: Path):
    src, modes, (t0, dt) = _load_modes(Path(cfg["result_dir"]))
    step = cfg["dt"] or dt
    preds, info = [], []
    for m in modes:
        model = fit_phase_dynamics(m)
        p = predict(model, cfg["horizon"], step, return_info=True)
        preds.append(p.imf)
        info.append({"alpha0": model.alpha0, "order": model.order, "rate_residual": model.rate_residual,
                     "fit_residual": model.fit_residual, "clipped": p.clipped})
    t_pred = preds[0].t
    write_matrix_csv(out / "prediction.csv", np.stack([p.s for p in preds]), (t_pred[0], step))
    record = {"modes": info, "t_start": float(t_pred[0]), "samples": int(t_pred.shape[0])}
    dcfg = src["config"]
    truth = src.get("truth")
    if dcfg.get("example") and truth is not None:
        S_true = source_signals(dcfg["example"], t_pred[1:])
        errs = []
        for j, i in enumerate(truth["permutation"]):
            s_hat = preds[i].s[1:]
            e = min(np.linalg.norm(s_hat - S_true[j]), np.linalg.norm(s_hat + S_true[j]))
            errs.append(float(e / np.linalg.norm(S_true[j])))
        record["truth"] = {"per_mode_rel_error": errs}
    return record, EXIT_OK


def cmd_spectrum(cfg: dict, out: Path):
    _, modes, (t0, dt) = _load_modes(Path(cfg["result_dir"]))
    t = modes[0].t
    f_max = cfg["f_max"] or 0.5 / dt
    spec = hilbert_spectrum(modes, uniform_edges(t[0], t[-1], cfg["t_bins"]), uniform_edges(0.0, f_max, cfg["f_bins"]))
    spec.to_csv(out / "spectrum.csv")
    (out / "spectrum.json").write_text(spec.to_json() + "\n", encoding="utf-8")
    return {"total": spec.total, "dropped": spec.dropped, "dropped_count": spec.dropped_count}, EXIT_OK


def _write_rows(path: Path, header: str, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else (str(int(v)) if isinstance(v, (bool, np.bool_, int, np.integer))
                                                             else f"{float(v):.17g}") for v in row) + "\n")


def cmd_bench(cfg: dict, out: Path, workers=None):
    kind = cfg["bench"]
    timing = {}
    start = time.perf_counter()
    if kind == "noise":
        freqs = [tuple(g) for g in cfg["guesses"]] if cfg["guesses"] else None
        rows = noise_sweep(cfg["example"], cfg["sigmas"], cfg["trials"], cfg["seed"], freqs=freqs, workers=workers)
        _write_rows(out / "noise.csv", "sigma,trial,mode,rel_error,failed", rows)
        arr = np.array([(r[0], r[3]) for r in rows])
        medians = {}
        for s in cfg["sigmas"]:
            v = arr[arr[:, 0] == s, 1]
            v = v[np.isfinite(v)]
            medians[repr(float(s))] = float(np.median(v)) if v.size else None
        record = {"rows": len(rows), "failed": int(sum(r[4] for r in rows)), "median_rel_error": medians}
    elif kind == "sensitivity":
        rows = sensitivity_scan(cfg["example"], cfg["f_range"], cfg["f_range2"], cfg["noise"], cfg["seed"],
                                workers=workers)
        _write_rows(out / "sensitivity.csv", "f1,f2,error", rows)
        grid = {(a, b): e for a, b, e in rows}
        asym = [abs(e - grid[(b, a)]) for (a, b), e in grid.items() if (b, a) in grid]
        record = {"cells": len(rows), "min_error": min(r[2] for r in rows), "max_error": max(r[2] for r in rows),
                  "max_asymmetry": max(asym) if asym else None}
    elif kind == "baselines":
        ex = generate_example(cfg["example"], cfg["noise"], cfg["seed"])
        r = ex.sources.shape[0]
        res = stimd_decompose(ex.X, ex.guesses(), StimdConfig(seed=cfg["seed"]))
        sv = svd_factorize(ex.X, r)
        ic = fastica_factorize(ex.X, r, seed=cfg["seed"])
        # Baseline modes are scaled as if their mixing columns had unit norm.
        scaled = {"stimd": res.S,
                  "svd": sv.temporal * np.linalg.norm(sv.spatial, axis=0)[:, None],
                  "fastica": ic.temporal * np.linalg.norm(ic.spatial, axis=0)[:, None]}
        rows, summed = [], {}
        for name, S in scaled.items():
            rep = align_and_score(S, ex.sources)
            rows.extend((name, j, e) for j, e in enumerate(rep.per_mode_rel_error))
            summed[name] = summed_error(S, ex.sources)
        _write_rows(out / "baselines.csv", "method,mode,rel_error", rows)
        record = {"summed_error": summed,
                  "stimd_best": bool(summed["stimd"] < min(summed["svd"], summed["fastica"]))}
    else:
        rows, timing["cells"] = [], []
        for n in cfg["samples"]:
            for m in cfg["channels"]:
                X, guesses = _runtime_problem(n, m, cfg["seed"])
                t1 = time.perf_counter()
                res = stimd_decompose(X, guesses, StimdConfig(seed=cfg["seed"]))
                timing["cells"].append({"samples": n, "channels": m, "seconds": time.perf_counter() - t1})
                rows.append((n, m, res.residual_fraction))
        _write_rows(out / "runtime.csv", "samples,channels,residual_fraction", rows)
        record = {"cells": len(rows)}
    timing["total_seconds"] = time.perf_counter() - start
    write_json(out / "timing.json", timing)
    return record, EXIT_OK


def _runtime_problem(n: int, m: int, seed: int):
    """Two-mode mixture on ``n`` samples over one second into ``m`` channels."""
    t = np.linspace(0.0, 1.0, n)
    S = source_signals("ex2d", t)
    r = min(2, m)
    B = np.random.default_rng([seed, n, m]).standard_normal((m, 2))
    B /= np.linalg.norm(B, axis=0)
    X = SignalMatrix(B[:, :r] @ S[:r], t[1] - t[0], 0.0)
    return X, linear_guesses((5.0, 14.0)[:r], t)


_COMMANDS = {"decompose": cmd_decompose, "predict": cmd_predict, "spectrum": cmd_spectrum, "bench": cmd_bench}


def run_config(cfg: dict, output_dir, workers=None) -> int:
    """Execute a recorded configuration, writing outputs and ``result.json``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    fn = _COMMANDS.get(cfg.get("command"))
    if fn is None:
        raise ValueError(f"unknown command {cfg.get('command')!r}")
    record, code = fn(cfg, out, workers) if fn is cmd_bench else fn(cfg, out)
    write_json(out / "result.json", {"version": __version__, "config": cfg, "exit_code": code, **record})
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "replay":
            cfg = read_json(args.result)["config"]
            workers = None
        else:
            cfg = config_from_args(args)
            workers = getattr(args, "workers", None)
        code = run_config(cfg, args.output_dir, workers)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (StimdError, ValueError, KeyError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"wrote {args.output_dir} (exit {code})")
    return code


if __name__ == "__main__":
    sys.exit(main())
