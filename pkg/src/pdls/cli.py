"""Command-line front end: run experiments, compare traces, print defaults.

Each run writes a delimited iteration trace (trace.csv), a fully resolved
configuration echo (config.json, carrying an experiment identity hash), and
problem-dependent artifacts: grayscale images for the imaging experiments
(input, noisy/zero-filled, reconstruction, a 4x-magnified absolute
difference, and sampling masks for the Fourier experiment) or a solution
table for the vector experiments. Traces from runs that share an identity
hash can be summarized side by side with `compare`.

Exit codes: 0 success, 2 configuration or input error, 3 step-search
failure, 4 I/O error.
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
from fractions import Fraction

import matplotlib
import numpy as np

matplotlib.use("Agg")
from matplotlib import image as mpl_image  # noqa: E402  (needs backend set)

from . import errors, problems, solvers  # noqa: E402

EXPERIMENTS = ("lasso", "tv1d", "tv2d", "mri")

GEN_DEFAULTS = {
    "lasso": {"n": 200, "lam": 1.0},
    "tv1d": {"num_segs": 10, "len_segs": 50, "noise_sigma": 1.0, "lam": 1.0},
    "tv2d": {"image": None, "noise_sigma": 0.08},
    "mri": {"size": 32, "nu": 9 / 16, "burden": 0.3, "noise_sigma": 0.0,
            "data_eps": 0.0, "phase_scale": float(np.pi / 16)},
}

_CONFIG_FIELDS = tuple(f.name for f in dataclasses.fields(solvers.SolverConfig))


@dataclasses.dataclass
class RunSpec:
    """Fully describes one experiment run; unknown names are rejected here."""

    experiment: str
    solver: str = "rpdhg"
    out_dir: str = ""
    seed: int = 0
    generator: dict = dataclasses.field(default_factory=dict)
    overrides: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise errors.ParameterError(
                f"unknown experiment {self.experiment!r}; "
                f"choose from {', '.join(EXPERIMENTS)}")
        if self.solver != "all" and self.solver not in solvers.SOLVERS:
            raise errors.ParameterError(
                f"unknown solver {self.solver!r}; "
                f"choose from {', '.join(solvers.SOLVERS)} or all")
        bad = set(self.generator) - set(GEN_DEFAULTS[self.experiment])
        if bad:
            raise errors.ParameterError(
                f"unknown {self.experiment} parameter(s): {', '.join(sorted(bad))}")
        bad = set(self.overrides) - set(_CONFIG_FIELDS)
        if bad:
            raise errors.ParameterError(
                f"unknown solver option(s): {', '.join(sorted(bad))}")
        if not self.out_dir:
            self.out_dir = os.path.join("runs", self.experiment)

    def resolved_generator(self):
        return {**GEN_DEFAULTS[self.experiment], **self.generator}

    def identity(self):
        """Hash of what the problem is (not how it is solved)."""
        blob = json.dumps({"experiment": self.experiment, "seed": self.seed,
                           "generator": self.resolved_generator()},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_problem(spec):
    """Generate the ProblemInstance a RunSpec describes."""
    gen = spec.resolved_generator()
    if spec.experiment == "lasso":
        return problems.gen_lasso(gen["n"], lam=gen["lam"], seed=spec.seed)
    if spec.experiment == "tv1d":
        return problems.gen_tv1d(gen["num_segs"], gen["len_segs"],
                                 noise_sigma=gen["noise_sigma"],
                                 lam=gen["lam"], seed=spec.seed)
    if spec.experiment == "tv2d":
        image = None
        if gen["image"] is not None:
            image = problems.load_image(gen["image"])
        # the reflected and relaxed solvers need the complementary operator
        with_split = spec.solver in ("aoi-ls", "rpdhg", "all")
        return problems.gen_tv2d(image=image, noise_sigma=gen["noise_sigma"],
                                 seed=spec.seed, with_split=with_split)
    return problems.gen_mri_problem(
        gen["size"], gen["size"], gen["nu"], gen["burden"],
        noise_sigma=gen["noise_sigma"], eps=gen["data_eps"], seed=spec.seed,
        phase_scale=gen["phase_scale"])


def _fmt_cell(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace(path, trace):
    """Write the iteration log as CSV with the fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(solvers.CSV_COLUMNS)
        for row in trace.rows:
            writer.writerow(_fmt_cell(getattr(row, col))
                            for col in solvers.CSV_COLUMNS)


def _write_gray(path, img):
    mpl_image.imsave(path, np.clip(img, 0.0, 1.0), cmap="gray",
                     vmin=0.0, vmax=1.0)


def _write_table(path, columns):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        length = len(next(iter(columns.values())))
        for i in range(length):
            writer.writerow(_fmt_cell(col[i]) for col in columns.values())


def _write_artifacts(spec, prob, name, x, out, written, shared_done):
    """Per-solver reconstruction artifacts plus one-time problem images."""
    suffix = "" if spec.solver != "all" else f"-{name}"
    if spec.experiment == "tv2d":
        if not shared_done:
            _write_gray(os.path.join(out, "input.png"), prob.truth)
            written.append(os.path.join(out, "input.png"))
            _write_gray(os.path.join(out, "noisy.png"), prob.data)
            written.append(os.path.join(out, "noisy.png"))
        recon = os.path.join(out, f"recon{suffix}.png")
        _write_gray(recon, x)
        written.append(recon)
        diff = os.path.join(out, f"diff4x{suffix}.png")
        _write_gray(diff, 4.0 * np.abs(x - prob.truth))
        written.append(diff)
    elif spec.experiment == "mri":
        if not shared_done:
            _write_gray(os.path.join(out, "input.png"), prob.truth)
            written.append(os.path.join(out, "input.png"))
            _write_gray(os.path.join(out, "zero_fill.png"),
                        prob.extras["zero_fill"])
            written.append(os.path.join(out, "zero_fill.png"))
            for key in ("pf", "vd", "both"):
                path = os.path.join(out, f"mask_{key}.png")
                _write_gray(path, prob.extras[key].grid.astype(float))
                written.append(path)
        recon_img = prob.extras["recon_op"].apply(x)
        recon = os.path.join(out, f"recon{suffix}.png")
        _write_gray(recon, recon_img)
        written.append(recon)
        diff = os.path.join(out, f"diff4x{suffix}.png")
        _write_gray(diff, 4.0 * np.abs(recon_img - prob.truth))
        written.append(diff)
    elif spec.experiment == "tv1d":
        path = os.path.join(out, f"solution{suffix}.csv")
        idx = np.arange(prob.data.size)
        _write_table(path, {"idx": idx, "truth": prob.truth,
                            "data": prob.data, "solution": x})
        written.append(path)
    else:
        path = os.path.join(out, f"solution{suffix}.csv")
        idx = np.arange(x.size)
        _write_table(path, {"idx": idx, "data": prob.data, "solution": x})
        written.append(path)


def run(spec):
    """Execute a RunSpec and write its artifacts; clean up on failure."""
    config = solvers.SolverConfig(**spec.overrides)
    out = spec.out_dir
    os.makedirs(out, exist_ok=True)
    written = []
    try:
        prob = build_problem(spec)
        names = list(solvers.SOLVERS) if spec.solver == "all" else [spec.solver]
        for i, name in enumerate(names):
            x, trace = solvers.SOLVERS[name](prob.problem, config)
            trace_name = "trace.csv" if spec.solver != "all" else f"trace-{name}.csv"
            path = os.path.join(out, trace_name)
            write_trace(path, trace)
            written.append(path)
            _write_artifacts(spec, prob, name, x, out, written, shared_done=i > 0)
        echo = {"experiment": spec.experiment, "solver": spec.solver,
                "seed": spec.seed, "identity": spec.identity(),
                "generator": spec.resolved_generator(),
                "solver_config": dataclasses.asdict(config)}
        cfg_path = os.path.join(out, "config.json")
        with open(cfg_path, "w") as fh:
            json.dump(echo, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(cfg_path)
    except BaseException:
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    return written


def _read_trace(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != solvers.CSV_COLUMNS:
            raise errors.ComparisonError(f"{path} is not a solver trace")
        rows = [dict(zip(header, line)) for line in reader]
    if not rows:
        raise errors.ComparisonError(f"{path} holds no iterations")
    return rows


def _trace_meta(path):
    cfg_path = os.path.join(os.path.dirname(path) or ".", "config.json")
    try:
        with open(cfg_path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise errors.ComparisonError(f"no config.json alongside {path}")
    stem = os.path.basename(path)
    if stem.startswith("trace-"):
        solver = stem[len("trace-"):].rsplit(".", 1)[0]
    else:
        solver = cfg.get("solver", "?")
    return cfg.get("identity"), solver


def compare(paths, stream=None):
    """Print a side-by-side summary of traces from one shared experiment."""
    stream = stream or sys.stdout
    entries = []
    identity = None
    for path in paths:
        ident, solver = _trace_meta(path)
        if identity is None:
            identity = ident
        elif ident != identity:
            raise errors.ComparisonError(
                f"{path} comes from a different experiment (identity "
                f"{ident} != {identity})")
        rows = _read_trace(path)
        entries.append((solver, rows))
    best = min(float(rows[-1]["best_objective"]) for _, rows in entries)
    threshold = best + 0.01 * abs(best)
    print(f"experiment identity {identity}; objective threshold "
          f"{threshold:.6g} (best final + 1%)", file=stream)
    header = (f"{'solver':10s} {'iters-to-thr':>12s} {'final best':>14s} "
              f"{'time-ms*':>10s} {'inner':>7s} {'outer':>7s}")
    print(header, file=stream)
    for solver, rows in entries:
        to_thr = "-"
        for row in rows:
            if float(row["best_objective"]) <= threshold:
                to_thr = row["iter"]
                break
        final = float(rows[-1]["best_objective"])
        total_ms = sum(float(r["elapsed_ms"]) for r in rows)
        inner = sum(int(r["inner_backtracks"]) for r in rows)
        outer = sum(int(r["outer_trials"]) for r in rows)
        print(f"{solver:10s} {to_thr:>12s} {final:>14.6g} {total_ms:>10.1f} "
              f"{inner:>7d} {outer:>7d}", file=stream)
    print("* wall-clock columns are machine-dependent", file=stream)


def describe(experiment=None, stream=None):
    """Print every default a RunSpec resolves to, as JSON."""
    stream = stream or sys.stdout
    if experiment is not None and experiment not in EXPERIMENTS:
        raise errors.ParameterError(
            f"unknown experiment {experiment!r}; "
            f"choose from {', '.join(EXPERIMENTS)}")
    keys = [experiment] if experiment else list(EXPERIMENTS)
    info = {"solvers": list(solvers.SOLVERS) + ["all"],
            "solver_config": dataclasses.asdict(solvers.SolverConfig()),
            "experiments": {k: GEN_DEFAULTS[k] for k in keys}}
    print(json.dumps(info, indent=2, sort_keys=True), file=stream)


def _fraction(text):
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or fraction: {text!r}")


def _add_common(parser):
    parser.add_argument("--solver", default="rpdhg",
                        choices=list(solvers.SOLVERS) + ["all"],
                        help="solver to run, or all four")
    parser.add_argument("--out", default="", metavar="DIR",
                        help="output directory (default runs/<experiment>)")
    parser.add_argument("--seed", type=int, default=0)
    group = parser.add_argument_group("solver options (defaults via describe)")
    for name in _CONFIG_FIELDS:
        kind = int if name.startswith("max_") else float
        group.add_argument("--" + name.replace("_", "-"), dest=name,
                           type=kind, default=None)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pdls",
        description="Proximal-splitting experiment runner.")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run one experiment and write artifacts")
    exp = runp.add_subparsers(dest="experiment", required=True)

    p = exp.add_parser("lasso", help="random dense regularized least squares")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    _add_common(p)

    p = exp.add_parser("tv1d", help="1-D total-variation denoising")
    p.add_argument("--num-segs", dest="num_segs", type=int, default=None)
    p.add_argument("--len-segs", dest="len_segs", type=int, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--lam", type=float, default=None)
    _add_common(p)

    p = exp.add_parser("tv2d", help="2-D total-variation image denoising")
    p.add_argument("--image", default=None, metavar="PATH",
                   help="grayscale input image (default: bundled synthetic)")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    _add_common(p)

    p = exp.add_parser("mri", help="undersampled-Fourier reconstruction")
    p.add_argument("--size", type=int, default=None,
                   help="grid side length (square)")
    p.add_argument("--nu", type=_fraction, default=None,
                   help="sampled row fraction, e.g. 9/16")
    p.add_argument("--burden", type=float, default=None)
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--data-eps", dest="data_eps", type=float, default=None,
                   help="radius of the data-consistency ball")
    p.add_argument("--phase-scale", dest="phase_scale", type=float, default=None)
    _add_common(p)

    cmpp = sub.add_parser("compare", help="summarize traces side by side")
    cmpp.add_argument("traces", nargs="+", metavar="TRACE.csv")

    desc = sub.add_parser("describe", help="print all defaults as JSON")
    desc.add_argument("experiment", nargs="?", default=None)
    return parser


def spec_from_args(args):
    generator = {k: v for k, v in vars(args).items()
                 if k in GEN_DEFAULTS[args.experiment] and v is not None}
    overrides = {k: v for k, v in vars(args).items()
                 if k in _CONFIG_FIELDS and v is not None}
    return RunSpec(experiment=args.experiment, solver=args.solver,
                   out_dir=args.out, seed=args.seed,
                   generator=generator, overrides=overrides)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            written = run(spec_from_args(args))
            print(f"wrote {len(written)} files to "
                  f"{os.path.dirname(written[0]) or '.'}")
        elif args.command == "compare":
            compare(args.traces)
        else:
            describe(args.experiment)
        return 0
    except errors.LineSearchError as exc:
        print(f"pdls: step search failed: {exc}", file=sys.stderr)
        return 3
    except (errors.ResourceError, ValueError) as exc:
        print(f"pdls: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pdls: i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
