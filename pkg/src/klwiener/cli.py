"""Command-line front end: eigen-tables, oracle checks, simulation and Quad checks.

Processes are named as ``family[:gamma[,gamma2]][:method]``, for example
``wgamma:0.5``, ``tied:0,0`` or ``w0:grid``.  Every command writes CSV (the
default) or a JSON object ``{"config", "rows", "summary"}``.

Exit status is 0 on success, 1 when a numeric tolerance fails and 2 on a
usage or domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import KLError
from .kernels import Family, ProcessSpec, kernel_for
from .nystrom import compare_spectra, discretize, sym_eigen
from .quadform import QuadLaw, mgf
from .sampler import DEFAULT_K, Method, RandomStream, mc_quad_identity, sample_grid, sample_kl
from .spectra import spectrum_for

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
COMMANDS = ("eigs", "verify", "simulate", "quadcheck", "mgf")
_METHODS = {m.value for m in Method}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    process: str | None = None
    left: str | None = None
    right: str | None = None
    gamma: str | None = None
    dim: int | None = None
    count: int = 10
    nodes: int = 200
    grid: int | None = None
    samples: int = 10000
    K: int = DEFAULT_K
    seed: int = 0
    tol: float | None = None
    z: str | None = None
    format: str = "csv"
    out: str | None = None


@dataclass
class Result:
    rows: list[dict]
    summary: dict = field(default_factory=dict)
    passed: bool = True


def parse_process(text: str, gamma: str | None = None, dim: int | None = None,
                  default_method: str | None = None) -> tuple[ProcessSpec, str | None]:
    """Parse ``family[:gamma[,gamma2]][:method]`` into a spec and a method name.

    ``gamma`` and ``dim`` fill in whatever the text leaves out.
    """
    if not text:
        raise UsageError("missing process")
    parts = text.strip().split(":")
    try:
        family = Family(parts[0].lower())
    except ValueError:
        names = ", ".join(f.value for f in Family)
        raise UsageError(f"unknown family {parts[0]!r} (expected one of {names})") from None
    method = default_method
    weights = None
    for part in parts[1:]:
        if part.lower() in _METHODS:
            method = part.lower()
        elif weights is None:
            weights = part
        else:
            raise UsageError(f"cannot parse process {text!r}")
    if weights is None:
        weights = gamma
    try:
        values = tuple(float(g) for g in weights.split(",")) if weights else ()
    except ValueError:
        raise UsageError(f"bad weights in {text!r}") from None
    d = dim if dim is not None else max(len(values), 1)
    try:
        spec = ProcessSpec(family, values, d)
    except (KLError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    return spec, method


def _tol(cfg: RunConfig, default: float) -> float:
    return default if cfg.tol is None else cfg.tol


def _format_index(k) -> str | int:
    return "-".join(map(str, k)) if isinstance(k, tuple) else k


def _cmd_eigs(cfg: RunConfig) -> Result:
    spec, _ = parse_process(cfg.process, cfg.gamma, cfg.dim)
    s = spectrum_for(spec)
    n_pts = cfg.grid or 5
    t = np.linspace(0.0, 1.0, n_pts)
    pts = t if s.dim == 1 else np.repeat(t[:, None], s.dim, axis=1)
    vals = s.evaluate(cfg.count, pts)
    rows = []
    for i, (k, lam) in enumerate(zip(s.indices(cfg.count), s.eigenvalues(cfg.count))):
        row = {"k": _format_index(k), "lambda": float(lam)}
        row.update({f"e(t={tj:.4g})": float(v) for tj, v in zip(t, vals[i])})
        rows.append(row)
    return Result(rows, {"process": str(spec), "count": cfg.count})


def _cmd_verify(cfg: RunConfig) -> Result:
    spec, _ = parse_process(cfg.process, cfg.gamma, cfg.dim)
    s = spectrum_for(spec)
    tol = _tol(cfg, 1e-3)
    op = discretize(kernel_for(spec), cfg.nodes)
    vals, _ = sym_eigen(op, min(cfg.count, op.size))
    cmp = compare_spectra(s, vals, len(vals), tol)
    rows = [
        {"k": _format_index(k), "analytic": float(a), "nystrom": float(n), "rel_error": float(e)}
        for k, a, n, e in zip(s.indices(len(vals)), cmp.analytic, cmp.numeric, cmp.rel_errors)
    ]
    summary = {"process": str(spec), "nodes": cfg.nodes, "max_rel_error": cmp.max_rel_error,
               "tol": tol, "passed": cmp.passed}
    return Result(rows, summary, bool(cmp.passed))


def _cmd_simulate(cfg: RunConfig) -> Result:
    spec, method = parse_process(cfg.process, cfg.gamma, cfg.dim, default_method="kl")
    n_grid = cfg.grid or 65
    stream = RandomStream(cfg.seed)
    if method == Method.KL.value:
        path = sample_kl(spectrum_for(spec), n_grid, cfg.K, stream, cfg.samples)
    elif method == Method.GRID.value:
        path = sample_grid(spec, n_grid, stream, cfg.samples)
    else:
        raise UsageError(f"simulate supports kl and grid, not {method}")
    rows = []
    t = path.grid
    for p, values in enumerate(path.values):
        if path.d == 1:
            rows.extend({"path": p, "t": float(ti), "value": float(v)} for ti, v in zip(t, values))
        else:
            for i, j in np.ndindex(values.shape):
                rows.append({"path": p, "t1": float(t[i]), "t2": float(t[j]),
                             "value": float(values[i, j])})
    return Result(rows, {"process": str(spec), "method": method, "tail_variance": path.tail})


def _cmd_quadcheck(cfg: RunConfig) -> Result:
    left, m_left = parse_process(cfg.left, cfg.gamma, cfg.dim, default_method="grid")
    right, m_right = parse_process(cfg.right, cfg.gamma, cfg.dim, default_method="kl")
    if left.d != right.d:
        raise UsageError("left and right processes differ in dimension")
    n_grid = cfg.grid or (256 if left.d == 1 else 64)
    alpha = _tol(cfg, 0.01)
    report = mc_quad_identity(left, right, cfg.samples, n_grid, cfg.K, RandomStream(cfg.seed),
                              (m_left, m_right))
    passed = report.p_value > alpha
    summary = {"left": f"{left} [{m_left}]", "right": f"{right} [{m_right}]", "grid": n_grid,
               "alpha": alpha, "passed": passed}
    return Result([report.as_dict()], summary, passed)


def _cmd_mgf(cfg: RunConfig) -> Result:
    spec, _ = parse_process(cfg.process, cfg.gamma, cfg.dim)
    law = QuadLaw(spectrum_for(spec), cfg.K)
    if cfg.z:
        try:
            zs = [float(z) for z in cfg.z.split(",")]
        except ValueError:
            raise UsageError(f"bad --z list {cfg.z!r}") from None
    else:
        zs = list(np.linspace(-1.0, 0.9, 20) * law.max_z)
    rows = [{"z": float(z), "mgf": mgf(law, z)} for z in zs]
    return Result(rows, {"process": str(spec), "K": cfg.K, "z_max": law.max_z})


_HANDLERS = {
    "eigs": _cmd_eigs,
    "verify": _cmd_verify,
    "simulate": _cmd_simulate,
    "quadcheck": _cmd_quadcheck,
    "mgf": _cmd_mgf,
}


def _render(cfg: RunConfig, result: Result) -> str:
    if cfg.format == "json":
        doc = {"config": asdict(cfg), "rows": result.rows, "summary": result.summary}
        return json.dumps(doc, indent=1) + "\n"
    buf = io.StringIO()
    if result.rows:
        writer = csv.writer(buf, lineterminator="\n")
        header = list(result.rows[0])
        writer.writerow(header)
        for row in result.rows:
            writer.writerow([format(v, ".17g") if isinstance(v, float) else v
                             for v in (row[h] for h in header)])
    return buf.getvalue()


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute one command; returns the exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if cfg.command not in _HANDLERS:
        print(f"error: unknown command {cfg.command!r}", file=stderr)
        return EXIT_USAGE
    try:
        result = _HANDLERS[cfg.command](cfg)
    except (UsageError, KLError, ValueError) as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    text = _render(cfg, result)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    if cfg.format == "csv" and result.summary:
        print("# " + json.dumps(result.summary), file=stderr)
    return EXIT_OK if result.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="klwiener",
        description=__doc__.split("\n\n")[0],
        epilog="process grammar: family[:gamma[,gamma2]][:method]; families: "
        + ", ".join(f.value for f in Family)
        + "; methods: kl (truncated series), grid (direct construction), cv (wgamma only). "
        "simulate defaults to kl, quadcheck to grid on the left and kl on the right.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "eigs": "eigenvalues and eigenfunction values",
        "verify": "analytic spectrum against the Nystrom oracle",
        "simulate": "sample paths on a uniform grid",
        "quadcheck": "KS test of equality in law of two squared L2 norms",
        "mgf": "moment generating function of the squared L2 norm",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        if name == "quadcheck":
            p.add_argument("--left", required=True)
            p.add_argument("--right", required=True)
        else:
            p.add_argument("--process", required=True)
        p.add_argument("--gamma", help="comma-separated weights when not given in the process")
        p.add_argument("--dim", type=int)
        p.add_argument("--count", type=int, default=10)
        p.add_argument("--nodes", type=int, default=200, help="Nystrom nodes per axis")
        p.add_argument("--grid", type=int, help="grid points per axis")
        p.add_argument("--samples", type=int, default=10000)
        p.add_argument("--K", type=int, default=DEFAULT_K, help="KL truncation")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float,
                       help="relative tolerance (verify) or significance level (quadcheck)")
        p.add_argument("--z", help="comma-separated mgf arguments; write --z=-0.5 for negatives")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--out", metavar="PATH")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__})
    for knob in ("count", "nodes", "samples", "K"):
        if getattr(cfg, knob) < 1:
            print(f"error: --{knob} must be positive", file=sys.stderr)
            return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
