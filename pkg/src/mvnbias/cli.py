"""Command-line interface: ``fit``, ``simulate`` and ``check-derivs``.

Exit codes: 0 ok, 2 input/parse error, 3 no convergence, 4 singular
information, 5 simulation failure ceiling, 6 derivative check failure.
"""
import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import models
from .bias import corrected_fit
from .errors import (
    DomainError,
    InvalidConstant,
    MVNBiasError,
    NoConvergence,
    SingularInformation,
    TooManyFailures,
    UnsupportedModel,
)
from .estimator import FitOptions
from .likelihood import numerical_score, score
from .model import Dataset, as_theta, relative_error, validate_spec
from .simulation import load_design, rng_for, run_study, simulate_dataset, summarize

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_SINGULAR = 4
EXIT_SIM_FAILURES = 5
EXIT_DERIV_CHECK = 6

CHECK_TOL = 1e-4


class InputError(Exception):
    """Malformed user input; maps to exit code 2."""


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


def parse_constants(items):
    consts = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise InputError(f"constant {item!r} is not of the form name=value")
        try:
            consts[name.strip()] = float(value)
        except ValueError:
            raise InputError(f"constant {name!r} has non-numeric value {value!r}") from None
    return consts


def read_table(path, required):
    """Read a comma-separated file with a header row into float columns.

    Column names are matched case-insensitively.  Errors name the file line
    and column.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, a header row is required") from None
        header = [h.strip() for h in header]
        lookup = {h.lower(): k for k, h in enumerate(header)}
        missing = [c for c in required if c.lower() not in lookup]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)} in header {header}")
        cols = {c: [] for c in required}
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: line {line} has {len(row)} fields, header has {len(header)}")
            for c in required:
                cell = row[lookup[c.lower()]].strip()
                try:
                    value = float(cell)
                except ValueError:
                    value = math.nan
                if not math.isfinite(value):
                    raise InputError(f"{path}: line {line}, column {c!r}: non-numeric value {cell!r}")
                cols[c].append(value)
    if not cols[required[0]]:
        raise InputError(f"{path}: no data rows")
    return {c: np.array(v) for c, v in cols.items()}


def load_dataset(model, path):
    if model == "eiv":
        t = read_table(path, ("Y", "X"))
        return Dataset(np.column_stack([t["Y"], t["X"]]))
    if model == "eiv-hetero":
        t = read_table(path, ("Y", "X", "z"))
        return Dataset(np.column_stack([t["Y"], t["X"]]), covariates=t["z"][:, None], covariate_names=("z",))
    if model == "uninl":
        t = read_table(path, ("Y", "X"))
        return Dataset(t["Y"][:, None], covariates=t["X"][:, None], covariate_names=("x",))
    raise InputError(f"unknown model {model!r}")


def _spec(model, constants):
    try:
        return models.builtin(model, constants)
    except (InvalidConstant, UnsupportedModel) as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------- fit


def fit_report(model, constants, data, result, report):
    params = [
        {"name": name, "mle": float(t), "se": float(se), "bias": float(b), "bce": float(c)}
        for name, t, se, b, c in zip(
            result.param_names, result.theta_hat, result.std_errors, report.bias, report.theta_corrected
        )
    ]
    return {
        "model": model,
        "constants": constants,
        "n": data.n,
        "loglik": result.loglik,
        "iterations": result.iterations,
        "converged": result.converged,
        "parameters": params,
    }


def format_report(rep, fmt):
    if fmt == "json":
        return json.dumps(rep, indent=2) + "\n"
    rows = rep["parameters"]
    if fmt == "csv":
        lines = ["parameter,mle,se,bias,bce"]
        lines += [f"{p['name']},{p['mle']!r},{p['se']!r},{p['bias']!r},{p['bce']!r}" for p in rows]
        return "\n".join(lines) + "\n"
    lines = [f"{'Parameter':<10} {'MLE':>10} {'S.E.':>10} {'Bias':>10} {'BCE':>10}"]
    for p in rows:
        bias = 0.0 if abs(p["bias"]) < 5e-5 else p["bias"]  # avoid printing -0.0000
        lines.append(f"{p['name']:<10} {p['mle']:>10.4f} {p['se']:>10.4f} {bias:>10.4f} {p['bce']:>10.4f}")
    lines.append(f"n = {rep['n']}, log-likelihood = {rep['loglik']:.4f}, iterations = {rep['iterations']}")
    return "\n".join(lines) + "\n"


def plot_data(data, rep):
    """Scatter points and the MLE and BCE lines at the ends of the X range."""
    est = {p["name"]: p for p in rep["parameters"]}
    Y, X = data.y[:, 0], data.y[:, 1]
    lo, hi = float(X.min()), float(X.max())
    rows = [("point", float(x), float(y)) for x, y in zip(X, Y)]
    for label, key in (("mle", "mle"), ("bce", "bce")):
        a, b = est["alpha"][key], est["beta"][key]
        rows += [(f"{label}_line", lo, a + b * lo), (f"{label}_line", hi, a + b * hi)]
    return rows


def render_svg(rows, width=480, height=360, pad=48):
    xs = [r[1] for r in rows]
    ys = [r[2] for r in rows]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    dx = (x1 - x0) or 1.0
    dy = (y1 - y0) or 1.0
    x0, x1, y0, y1 = x0 - 0.05 * dx, x1 + 0.05 * dx, y0 - 0.05 * dy, y1 + 0.05 * dy

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" fill="none" stroke="black"/>',
    ]
    for kind, x, y in rows:
        if kind == "point":
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="black"/>')
    styles = {"mle_line": ("#1f77b4", ""), "bce_line": ("#d62728", ' stroke-dasharray="6,4"')}
    for kind, (color, dash) in styles.items():
        (xa, ya), (xb, yb) = [(r[1], r[2]) for r in rows if r[0] == kind]
        out.append(
            f'<line x1="{px(xa):.2f}" y1="{py(ya):.2f}" x2="{px(xb):.2f}" y2="{py(yb):.2f}" '
            f'stroke="{color}" stroke-width="2"{dash}/>'
        )
    out.append(f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">X</text>')
    out.append(f'<text x="14" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 14 {height / 2:.0f})">Y</text>')
    out.append(f'<text x="{pad + 8}" y="{pad + 16}" font-size="11" fill="#1f77b4">MLE</text>')
    out.append(f'<text x="{pad + 8}" y="{pad + 30}" font-size="11" fill="#d62728">BCE</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(svg_path, rows):
    svg_path = Path(svg_path)
    csv_path = svg_path.with_suffix(".csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "x", "y"])
        for kind, x, y in rows:
            w.writerow([kind, repr(x), repr(y)])
    svg_path.write_text(render_svg(rows), encoding="utf-8")
    return csv_path


def _write(out, text):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def cmd_fit(args):
    constants = parse_constants(args.const)
    spec = _spec(args.model, constants)
    data = load_dataset(args.model, args.data)
    if args.emit_plot and args.model != "eiv":
        raise InputError("--emit-plot is only available for the 'eiv' model")
    fmt = args.format or _format_from_path(args.out, "json")
    try:
        result, report = corrected_fit(spec, data, FitOptions(max_iter=args.max_iter))
    except NoConvergence as exc:
        _err(f"no convergence: {exc}")
        return EXIT_NO_CONVERGENCE
    except SingularInformation as exc:
        _err(f"singular information: {exc}")
        return EXIT_SINGULAR
    except DomainError as exc:
        _err(str(exc))
        return EXIT_NO_CONVERGENCE
    rep = fit_report(args.model, constants, data, result, report)
    _write(args.out, format_report(rep, fmt))
    if args.emit_plot:
        write_plot(args.emit_plot, plot_data(data, rep))
    return EXIT_OK


def _format_from_path(path, default):
    if path in (None, "-"):
        return "text"
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix == "txt":
        return "text"
    return suffix if suffix in ("json", "csv", "text") else default


# ---------------------------------------------------------------- simulate


def cmd_simulate(args):
    try:
        design = load_design(args.config)
    except (OSError, ValueError, KeyError, TypeError, MVNBiasError) as exc:
        raise InputError(f"bad design file {args.config}: {exc}") from None
    try:
        result = run_study(design, workers=args.workers)
    except TooManyFailures as exc:
        _err(str(exc))
        return EXIT_SIM_FAILURES
    fmt = args.format or _format_from_path(args.out, "csv")
    _write(args.out, summarize(result, "text" if fmt == "text" else "csv"))
    return EXIT_OK


# ---------------------------------------------------------------- check-derivs


def _check_data(model, spec, theta, n, seed, z_file):
    rng = rng_for(seed, n, 7)
    if model == "eiv-hetero":
        if z_file:
            t = read_table(z_file, ("z",))
            z = t["z"]
            n = z.size
        else:
            z = rng.uniform(-1.0, 1.0, n)
        return simulate_dataset(spec, theta, n, rng, z=z)
    if model == "uninl":
        x = rng.uniform(0.0, 1.0, n)
        return simulate_dataset(spec, theta, n, rng, covariates=x[:, None], covariate_names=("x",))
    return simulate_dataset(spec, theta, n, rng)


def cmd_check_derivs(args):
    constants = parse_constants(args.const)
    spec = _spec(args.model, constants)
    try:
        theta = as_theta([float(v) for v in args.theta.split(",")], spec.p)
    except ValueError as exc:
        raise InputError(f"--theta: {exc}") from None
    if not spec.contains(theta):
        raise InputError(f"--theta {theta.tolist()} is outside the model domain")
    data = _check_data(args.model, spec, theta, args.n, args.seed, args.z_file)
    report = validate_spec(spec, theta, data, tol=CHECK_TOL)
    failures = list(report.violations)
    for label, err in report.max_errors.items():
        print(f"{label:<16} max relative error {err:.3e}")
    try:
        err, loc = relative_error(score(spec, theta, data), numerical_score(spec, theta, data))
    except MVNBiasError as exc:
        failures.append(f"score: {exc}")
    else:
        print(f"{'score vs FD':<16} max relative error {err:.3e}")
        if err > CHECK_TOL:
            failures.append(f"score: relative error {err:.3e} at parameter {spec.param_names[loc[0]]}")
    for f in failures:
        print(f"FAIL {f}")
    if failures:
        return EXIT_DERIV_CHECK
    print("all derivative checks passed")
    return EXIT_OK


# ---------------------------------------------------------------- entry


def build_parser():
    parser = argparse.ArgumentParser(prog="mvnbias", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a built-in model and report MLE, S.E., bias and BCE")
    p.add_argument("--model", required=True, choices=models.BUILTIN_NAMES)
    p.add_argument("--const", action="append", metavar="NAME=VALUE", help="known constant, e.g. sigma_u2=57")
    p.add_argument("--data", required=True, help="CSV with header (Y, X and z for eiv-hetero)")
    p.add_argument("--out", default="-", help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv", "text"))
    p.add_argument("--emit-plot", metavar="SVG", help="write scatter/fitted-line plot as SVG plus a CSV alongside")
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="Monte Carlo study of MLE and BCE")
    p.add_argument("--config", required=True, help="JSON design file")
    p.add_argument("--out", default="-")
    p.add_argument("--format", choices=("csv", "text"))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-derivs", help="compare analytic derivatives with finite differences")
    p.add_argument("--model", required=True, choices=models.BUILTIN_NAMES)
    p.add_argument("--const", action="append", metavar="NAME=VALUE")
    p.add_argument("--theta", required=True, help="comma-separated parameter values")
    p.add_argument("--z-file", help="CSV with a z column (eiv-hetero)")
    p.add_argument("--n", type=int, default=10, help="size of the synthetic check dataset")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check_derivs)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "check-derivs" and args.model in ("eiv", "eiv-hetero") and not args.const:
        args.const = ["sigma_u2=1"]
        print("no --const given, using sigma_u2=1", file=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        _err(str(exc))
        return EXIT_PARSE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
