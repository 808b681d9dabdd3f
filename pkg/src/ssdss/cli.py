"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 divergence.
Frequencies on the command line and in files are in Hz.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import io as sio
from .analysis import differentiate, eval_frf, poles_report
from .bench import BAND_HZ, make_assembly_analog, perturb, run_pipeline
from .builder import build_model, modal_frf, rcm_quality
from .coupling import lm_couple, lm_decouple, select_channels
from .errors import NumericalError
from .stabilizer import stabilize
from .timesim import foh_discretize, simulate, sweep_signal
from .types import Domain, ModalModel, RcmConfig, StateSpaceModel

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_DIVERGED = 0, 2, 3, 4

# default RCM placement: far below and far above a typical audio-range band
DEFAULT_RCM_HZ = dict(omega_lr_hz=0.1, xi_lr=0.1, omega_ur_hz=15000.0, xi_ur=0.1, omega_cb_hz=15000.0, xi_cb=0.1)
N_FREQ = 400


class Diverged(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _band(text: str):
    try:
        f0, f1 = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("band must look like f0:f1 (Hz)") from None
    if not 0 < f0 < f1:
        raise argparse.ArgumentTypeError("band needs 0 < f0 < f1")
    return f0, f1


def _sweep(text: str):
    try:
        f0, f1, dur = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("sweep must look like f0:f1:duration") from None
    return f0, f1, dur


def _index_list(text: str) -> list[int]:
    """``"0-5"``, ``"0,2,4"`` or a mix like ``"0-2,7"``."""
    out = []
    try:
        for part in text.split(","):
            if "-" in part:
                a, b = (int(x) for x in part.split("-"))
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad index list '{text}'") from None
    return out


def _grid(args) -> np.ndarray:
    f0, f1 = args.band
    return 2 * np.pi * np.linspace(f0, f1, args.n_freq)


def _rcm_config(args) -> RcmConfig:
    if getattr(args, "rcm_config", None):
        return sio.load(args.rcm_config, "rcm_config")
    if getattr(args, "auto_rcm", False):
        f0, f1 = args.band
        return RcmConfig.from_band(2 * np.pi * f0, 2 * np.pi * f1)
    return RcmConfig.from_hz(**DEFAULT_RCM_HZ)


def _meta(inputs, **extra) -> dict:
    meta = {"tool": f"ssdss {__version__}", "inputs": {Path(p).name: sio.file_sha256(p) for p in inputs}}
    meta.update(extra)
    return meta


def _clean(d: dict) -> dict:
    """JSON-safe copy with numpy scalars turned into Python numbers."""
    out = {}
    for k, v in d.items():
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def _max_cb(m: StateSpaceModel) -> float:
    return float(np.max(np.abs(m.C @ m.B), initial=0.0))


def _pole_summary(m: StateSpaceModel) -> str:
    rep = poles_report(m)
    n_u = sum(not p.is_stable for p in rep)
    return f"{len(rep)} poles, {n_u} unstable"


def _write_poles(path, m: StateSpaceModel) -> None:
    rows = [(p.value.real, p.value.imag, p.natural_freq, p.damping_ratio, p.kind.value) for p in poles_report(m)]
    sio.write_csv(path, ["re", "im", "omega_n_rad_s", "xi", "class"], rows)


def _load_response_source(path, grid) -> "object":
    """FRF of a modal, state-space or FRF file on ``grid`` (FRF files keep their own grid)."""
    obj = sio.load(path)
    if isinstance(obj, ModalModel):
        return modal_frf(obj, grid)
    if isinstance(obj, StateSpaceModel):
        return eval_frf(obj, grid)
    if isinstance(obj, sio.FrfSet):
        return obj
    raise sio.FormatError(f"cannot compare a '{type(obj).__name__}'", path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_build(args) -> int:
    modal = sio.load(args.modal, "modal")
    cfg = _rcm_config(args)
    model = build_model(modal, cfg, newton=not args.no_newton, real=args.real)
    grid = _grid(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        q = rcm_quality(modal, cfg, grid)
    hz = cfg.to_hz_dict()
    print("# " + " ".join(f"{k}={v:g}" for k, v in hz.items()))
    max_cb = _max_cb(model)
    print(f"n_states={model.n_states} max_cb={max_cb:.3e}")
    worst = {k: float(np.max(q[k])) for k in ("ur", "lr", "cb")}
    print("rcm max rel dev: " + " ".join(f"{k.upper()}={v:.3e}" for k, v in worst.items()))
    for k, v in worst.items():
        if v > args.tol_rcm:
            print(f"warning: {k.upper()} RCMs deviate by {100 * v:.3g}% (> {100 * args.tol_rcm:g}%)", file=sys.stderr)
    diag = {"max_cb": max_cb, "n_states": model.n_states, "rcm": hz, "rcm_max_rel_dev": worst}
    sio.save(model, args.output, _meta([args.modal] + ([args.rcm_config] if args.rcm_config else []), diagnostics=diag))
    return EXIT_OK


def _finish_coupled(args, m: StateSpaceModel, inputs) -> int:
    if args.keep:
        m = select_channels(m, args.keep)
    summary = _pole_summary(m)
    print(summary)
    sio.save(m, args.output, _meta(inputs, summary=summary))
    if args.poles:
        _write_poles(args.poles, m)
    return EXIT_OK


def cmd_couple(args) -> int:
    imap = sio.load(args.map, "interface_map")
    models = [sio.load(p, "state_space") for p in args.models]
    m = lm_couple(models, imap)
    return _finish_coupled(args, m, [args.map] + args.models)


def cmd_decouple(args) -> int:
    imap = sio.load(args.map, "interface_map")
    asm = sio.load(args.assembly, "state_space")
    subs = [sio.load(p, "state_space") for p in args.subtrahends]
    m = lm_decouple(asm, subs, imap)
    return _finish_coupled(args, m, [args.map, args.assembly] + args.subtrahends)


def cmd_stabilize(args) -> int:
    model = sio.load(args.model, "state_space")
    cfg = sio.load(args.rcm_config, "rcm_config") if args.rcm_config else None
    res = stabilize(model, _grid(args), cfg, Domain(args.weighting))
    d = _clean(res.diagnostics)
    d["noop"] = res.noop
    n_o, n_i = model.n_outputs, model.n_inputs
    print(f"{d['n_poles']} poles, {d['n_unstable']} unstable")
    if res.noop:
        print("model is already stable; written unchanged")
    else:
        k = d["n_states_out"] - d["n_states_in"]
        print(f"+{k} states (<= 6*min(n_o,n_i) = {6 * min(n_o, n_i)})")
        print(f"frf_rel_rms_deviation={d['frf_rel_rms_deviation']:.4e}")
    sio.save(res.model, args.output, _meta([args.model], diagnostics=d))
    if args.diagnostics:
        Path(args.diagnostics).write_text(json.dumps(d, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    model = sio.load(args.model, "state_space")
    for _ in range(model.domain.order, Domain(args.output_domain).order):
        model = differentiate(model)
    f0, f1, dur = args.sweep
    if not 0 <= args.input < model.n_inputs:
        raise ValueError(f"input channel {args.input} out of range (model has {model.n_inputs})")
    s = sweep_signal(f0, f1, dur, args.fs_hz, args.fade)
    u = np.zeros((s.size, model.n_inputs))
    u[:, args.input] = s
    dm = foh_discretize(model, args.fs_hz)
    res = simulate(dm, u)
    t = np.arange(s.size) / args.fs_hz
    header = ["t"] + [f"u_{k}" for k in range(model.n_inputs)] + [f"y_{k}" for k in range(model.n_outputs)]
    sio.write_csv(args.out, header, (np.concatenate([[t[k]], u[k], res.y[k]]) for k in range(s.size)))
    if res.diverged:
        print(f"diverged at sample {res.diverged_at} (t={res.diverged_at / args.fs_hz:.6g} s)")
        raise Diverged()
    print(f"{s.size} samples, peak |y| = {np.max(np.abs(res.y)):.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    grid = _grid(args)
    first = _load_response_source(args.sources[0], grid)
    grid = first.grid
    frfs = [first] + [_load_response_source(p, grid) for p in args.sources[1:]]
    o, i = args.entry
    for p, f in zip(args.sources, frfs):
        if not np.array_equal(f.grid, grid):
            raise ValueError(f"{p}: frequency grid differs from the first source")
        if f.values.shape != first.values.shape:
            raise ValueError(f"{p}: FRF shape {f.values.shape[1:]} differs from {first.values.shape[1:]}")
        if f.domain is not first.domain:
            raise ValueError(f"{p}: domain '{f.domain.value}' differs from '{first.domain.value}'")
    if not (0 <= o < first.values.shape[1] and 0 <= i < first.values.shape[2]):
        raise ValueError(f"entry ({o}, {i}) is out of range")
    ref = first.values
    scale = np.max(np.abs(ref), axis=(1, 2))
    scale = np.where(scale > 0, scale, 1.0)
    dev = np.zeros(grid.size)
    for f in frfs[1:]:
        dev = np.maximum(dev, np.max(np.abs(f.values - ref), axis=(1, 2)) / scale)
    header = ["f_hz"]
    cols = [grid / (2 * np.pi)]
    for k, f in enumerate(frfs):
        h = f.values[:, o, i]
        header += [f"src_{k}_mag", f"src_{k}_phase_deg"]
        cols += [np.abs(h), np.degrees(np.angle(h))]
    header.append("reldev")
    cols.append(dev)
    sio.write_csv(args.output, header, zip(*cols))
    worst = float(np.max(dev))
    verdict = "within" if worst <= args.tol else "exceeds"
    print(f"max reldev {worst:.3e} ({verdict} tol {args.tol:g})")
    return EXIT_OK


def cmd_poles(args) -> int:
    m = sio.load(args.model, "state_space")
    print(_pole_summary(m))
    if args.output:
        _write_poles(args.output, m)
    return EXIT_OK


def cmd_rcm_report(args) -> int:
    modal = sio.load(args.modal, "modal")
    cfg = _rcm_config(args)
    grid = _grid(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        q = rcm_quality(modal, cfg, grid)
    rows = zip(grid / (2 * np.pi), q["ur"], q["lr"], q["cb"])
    sio.write_csv(args.output, ["omega_hz", "max_rel_dev_UR", "max_rel_dev_LR", "max_rel_dev_CB"], rows)
    worst = {k: float(np.max(q[k])) for k in ("ur", "lr", "cb")}
    print("rcm max rel dev: " + " ".join(f"{k.upper()}={v:.3e}" for k, v in worst.items()))
    return EXIT_OK


def cmd_bench(args) -> int:
    """Write the assembly analog fixture as ssdss-v1 files."""
    out = Path(args.directory)
    out.mkdir(parents=True, exist_ok=True)
    fx = make_assembly_analog()
    grid = 2 * np.pi * np.linspace(args.band[0], args.band[1], args.n_freq)
    seeds = np.random.SeedSequence(args.seed).spawn(4)
    asm_a = perturb(fx.assembly_a.modal, args.level, seeds[0])
    files = {
        "cross_al.modal.json": fx.cross_al.modal,
        "cross_st.modal.json": fx.cross_st.modal,
        "assembly_a.modal.json": asm_a,
        "assembly_b.modal.json": fx.assembly_b.modal,
        "decouple.map.json": fx.decouple_map,
        "couple.map.json": fx.couple_map,
        "rcm.json": fx.rcm_config(),
        "assembly_b.oracle.frf.json": fx.assembly_b.oracle(grid),
        "mount.oracle.frf.json": fx.mount.oracle(grid),
    }
    meta = {"tool": f"ssdss {__version__}", "seed": args.seed, "level": args.level}
    for name, obj in files.items():
        sio.save(obj, out / name, meta)
    if args.models:
        res = run_pipeline(fx, args.level, args.seed)
        models = {"assembly_a.model.json": res.components["assembly_a"], "cross_al.model.json": res.components["cross_al_1"],
                  "cross_st.model.json": res.components["cross_st"], "mount.model.json": res.mount,
                  "assembly_b.coupled.json": res.coupled}
        for name, obj in models.items():
            sio.save(obj, out / name, meta)
        files.update(models)
    for name in files:
        print(out / name)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _global_options(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--tol", type=float, default=d(1e-6), help="tolerance for compare verdicts (default 1e-6)")
    p.add_argument("--band", type=_band, default=d(BAND_HZ), help="band of interest f0:f1 in Hz (default 20:500)")
    p.add_argument("--seed", type=int, default=d(0), help="seed for generated fixtures (default 0)")
    p.add_argument("--n-freq", type=int, default=d(N_FREQ), help="points of the band grid (default 400)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssdss", description="State-space substructuring and stabilization.")
    ap.add_argument("--version", action="version", version=f"ssdss {__version__}")
    _global_options(ap, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=fn)
        return p

    p = add("build", cmd_build, "state-space model from a modal model")
    p.add_argument("modal")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--rcm-config", help="rcm_config JSON; default: 0.1 Hz LR, 15 kHz UR/CB, xi 0.1")
    p.add_argument("--auto-rcm", action="store_true", help="derive RCM settings from --band")
    p.add_argument("--no-newton", action="store_true", help="skip Newton-law RCMs")
    p.add_argument("--real", action="store_true", help="write the real-valued form")
    p.add_argument("--tol-rcm", type=float, default=0.01, help="RCM deviation warning level (default 0.01)")

    for name, fn, help_ in (("couple", cmd_couple, "couple displacement models"),
                            ("decouple", cmd_decouple, "decouple subtrahends from an assembly")):
        p = add(name, fn, help_)
        p.add_argument("--map", required=True, help="interface_map JSON over the stacked outputs")
        if name == "couple":
            p.add_argument("models", nargs="+")
        else:
            p.add_argument("assembly")
            p.add_argument("subtrahends", nargs="*")
        p.add_argument("-o", "--output", required=True)
        p.add_argument("--poles", help="write a pole report CSV")
        p.add_argument("--keep", type=_index_list, help="output/input channels to keep, e.g. 0-5")

    p = add("stabilize", cmd_stabilize, "stable model with matching FRFs over --band")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--diagnostics", help="write diagnostics JSON")
    p.add_argument("--rcm-config", help="rcm_config JSON for the rebuilt RCMs")
    p.add_argument("--weighting", choices=[d.value for d in Domain], default="acceleration")

    p = add("simulate", cmd_simulate, "FOH simulation under a faded sine sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--fs-hz", type=float, required=True)
    p.add_argument("--sweep", type=_sweep, default=(20.0, 500.0, 1.0), help="f0:f1:duration (default 20:500:1)")
    p.add_argument("--fade", type=float, default=0.05, help="fade fraction at each end (default 0.05)")
    p.add_argument("--input", type=int, default=0, help="input channel driven by the sweep")
    p.add_argument("--output-domain", choices=[d.value for d in Domain], default="displacement")
    p.add_argument("--out", required=True)

    p = add("compare", cmd_compare, "magnitude/phase of several FRF sources and their deviation")
    p.add_argument("sources", nargs="+", help="modal, state_space or frf JSON files; the first is the reference")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--entry", type=lambda s: tuple(int(x) for x in s.split(",")), default=(0, 0),
                   help="output,input entry for the magnitude/phase columns (default 0,0)")

    p = add("poles", cmd_poles, "pole report of a model")
    p.add_argument("model")
    p.add_argument("-o", "--output")

    p = add("rcm-report", cmd_rcm_report, "per-frequency RCM deviation over --band")
    p.add_argument("modal")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--rcm-config")
    p.add_argument("--auto-rcm", action="store_true")

    p = add("bench", cmd_bench, "export the synthetic assembly fixture")
    p.add_argument("action", choices=["export"])
    p.add_argument("directory")
    p.add_argument("--level", type=float, default=0.0, help="relative perturbation of assembly A (default 0)")
    p.add_argument("--models", action="store_true", help="also write built, decoupled and coupled models")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Diverged:
        return EXIT_DIVERGED
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
