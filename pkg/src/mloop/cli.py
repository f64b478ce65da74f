"""The ``mloop`` command line.

Exit codes: 0 success, 2 validation error, 3 numerical diagnostic.
Every data file is written with a sidecar JSON holding the full configuration
and the package version; no timestamps are recorded, so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import euler_ensemble as ee
from . import init_measure as im
from . import mle
from . import number_theory as nt
from . import observables as ob
from . import rotation as ro
from .loops import LoopFormatError, MomentumLoop, SpatialLoop, load_loop, make_circle_loop, make_fourier_loop

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
VERSION = f"mloop {__version__}"


class ValidationError(ValueError):
    pass


class NumericalDiagnostic(RuntimeError):
    pass


# config and output -----------------------------------------------------------------


def read_config(path: str | None) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"config: cannot read {path}: {exc.strerror}") from None
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ValidationError(f"config: malformed file {path}: {exc.message}") from None
    return dict(cp["run"])


def _get(cfg: dict, key: str, kind, default):
    if key not in cfg:
        return default
    try:
        return kind(cfg[key])
    except ValueError:
        raise ValidationError(f"config: field {key!r} must be {kind.__name__}, got {cfg[key]!r}") from None


def sim_params(cfg: dict, seed: int) -> mle.SimParams:
    try:
        return mle.SimParams(
            nu=_get(cfg, "nu", float, 1.0),
            gamma=_get(cfg, "gamma", float, 1.0),
            t0=_get(cfg, "t0", float, 1.0),
            N=_get(cfg, "n", int, 64),
            h0=_get(cfg, "h0", float, None),
            rtol=_get(cfg, "rtol", float, 1e-8),
            atol=_get(cfg, "atol", float, 1e-10),
            seed=_get(cfg, "seed", int, seed),
            assignment=cfg.get("assignment", "backward"),
        )
    except ValueError as exc:
        raise ValidationError(f"config: {exc}") from None


def _fmt(x) -> str:
    return repr(float(x))


class Output:
    """Routes tables and reports to ``--out`` or stdout."""

    def __init__(self, args):
        self.dir = Path(args.out) if args.out else None
        self.format = args.format
        self.meta = {"format": "mloop-run/1", "version": VERSION, "command": args.command_path, "config": _echo(args)}
        if self.dir:
            self.dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header: list[str], rows, extra: dict | None = None) -> None:
        meta = dict(self.meta, **(extra or {}))
        if self.format == "json":
            data = [dict(zip(header, r)) for r in rows]
            self.report(name, dict(meta, rows=data))
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
        if self.dir:
            (self.dir / f"{name}.csv").write_text(buf.getvalue())
            (self.dir / f"{name}.json").write_text(_dumps(meta))
        else:
            sys.stdout.write(buf.getvalue())

    def report(self, name: str, payload: dict) -> None:
        doc = dict(self.meta, **payload)
        if self.dir:
            (self.dir / f"{name}.json").write_text(_dumps(doc))
        sys.stdout.write(_dumps(payload))

    def file(self, name: str, payload: dict) -> None:
        if self.dir:
            (self.dir / name).write_text(_dumps(payload))
        else:
            sys.stdout.write(_dumps(payload))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"not serializable: {type(x)}")


def _echo(args) -> dict:
    skip = {"func", "command_path", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _cplx(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _load_spatial(path: str) -> SpatialLoop:
    try:
        loop = load_loop(path)
    except OSError as exc:
        raise ValidationError(f"loop file: cannot read {path}: {exc.strerror}") from None
    if isinstance(loop, MomentumLoop):
        raise LoopFormatError("loop file: field 'complex' must be false for a spatial loop")
    return loop


# commands ------------------------------------------------------------------------------


def cmd_mle_integrate(args, out: Output) -> int:
    cfg = read_config(args.config)
    params = sim_params(cfg, args.seed)
    t_end = _get(cfg, "t_end", float, 1.0)
    n_out = _get(cfg, "n_out", int, 11)
    if not t_end > 0 or n_out < 2:
        raise ValidationError("config: t_end must be positive and n_out >= 2")
    if "loop" in cfg:
        loop = load_loop(cfg["loop"])
        P0 = loop.vertices.astype(complex)
        if P0.shape[0] != params.N:
            raise ValidationError(f"config: field 'n' = {params.N} but the loop has {P0.shape[0]} vertices")
    else:
        amp = _get(cfg, "amplitude", float, 0.1)
        a = make_fourier_loop(params.seed, params.N, 3, 2.0).vertices
        b = make_fourier_loop(params.seed + 1, params.N, 3, 2.0).vertices
        P0 = amp * (a + 1j * b)
    traj = mle.integrate_mle(P0, params, t_end, np.linspace(0.0, t_end, n_out))
    rows = []
    for t, state in zip(traj.times, traj.states):
        for k, v in enumerate(state):
            rows.append([float(t), k, *[float(x) for z in v for x in (z.real, z.imag)]])
    header = ["t", "k", "re_x", "im_x", "re_y", "im_y", "re_z", "im_z"]
    extra = {"status": traj.status, "message": traj.message, "accepted": traj.accepted, "rejected": traj.rejected}
    out.table("trajectory", header, rows, extra)
    if not traj.ok:
        print(f"mloop: {traj.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_mle_fixed_point(args, out: Output) -> int:
    try:
        d = json.loads(Path(args.sample).read_text())
    except OSError as exc:
        raise ValidationError(f"sample file: cannot read {args.sample}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"sample file: invalid JSON ({exc.msg})") from None
    if not isinstance(d, dict):
        raise ValidationError("sample file: top level must be a JSON object")
    s = ee.sample_from_dict(d)
    rep = mle.fixed_point_residual(s.F, args.gamma)
    payload = {"gamma": args.gamma, "N": s.N, "p": s.p, "q": s.q, "r": s.r, **rep.summary()}
    out.report("fixed_point", payload)
    return EXIT_OK if rep.max <= args.tol else EXIT_NUMERICAL


def cmd_mle_scan(args, out: Output) -> int:
    rep = mle.no_explosion_scan(args.trials, args.n, args.gamma, args.seed)
    payload = {
        "trials": rep.trials, "N": rep.N, "gamma": rep.gamma, "min_a": rep.min_a,
        "min_residual": rep.min_residual, "argmin_trial": rep.argmin_trial,
    }
    out.report("no_explosion_scan", payload)
    return EXIT_OK if rep.min_a >= 1.0 else EXIT_NUMERICAL


def cmd_ensemble_sample(args, out: Output) -> int:
    if args.count < 1:
        raise ValidationError("--count must be positive")
    names = []
    for i in range(args.count):
        s = ee.sample_ensemble(args.n, args.qmax, args.seed, i, args.measure)
        name = f"sample_{i:06d}.json"
        out.file(name, s.to_dict())
        names.append({"file": name, "p": s.p, "q": s.q, "r": s.r, "redraws": s.redraws})
    if out.dir:
        (out.dir / "samples.json").write_text(_dumps(dict(out.meta, samples=names)))
    return EXIT_OK


def cmd_nt_totient(args, out: Output) -> int:
    t = nt.totient_sieve(args.max)
    rows = [[n, int(t.phi[n]), int(t.Phi[n])] for n in range(1, args.max + 1)]
    out.table("totient", ["n", "phi", "Phi"], rows)
    return EXIT_OK


def cmd_nt_cotdist(args, out: Output) -> int:
    emp = nt.empirical_cot_dist(args.n, args.bins, args.weighting)
    law = nt.cot_dist_cdf(emp.edges)
    rows = [
        [float(lo), float(hi), float(m), float(b - a)]
        for lo, hi, m, a, b in zip(emp.edges[:-1], emp.edges[1:], emp.hist, law[:-1], law[1:])
    ]
    extra = {
        "n_pairs": emp.n_pairs, "atom_law": nt.cot_dist_atom(), "atom_empirical": emp.atom,
        "ks_continuous": nt.ks_distance(emp, True), "ks_full": nt.ks_distance(emp, False),
    }
    name = Path(args.hist).stem if args.hist else "cotdist"
    out.table(name, ["x_lo", "x_hi", "empirical_mass", "law_mass"], rows, extra)
    return EXIT_OK


def cmd_obs_psi(args, out: Output) -> int:
    cfg = read_config(args.config)
    params = sim_params(cfg, args.seed)
    C = _load_spatial(args.loop)
    est = ob.loop_functional_mc(C, args.t, params, args.samples, args.qmax, args.workers)
    out.table(
        "psi", ["t", "re", "im", "stderr"], [[float(args.t), float(est.mean.real), float(est.mean.imag), float(est.stderr)]],
        {"n_samples": est.n_samples},
    )
    return EXIT_OK


def _parse_point(text: str) -> list[float]:
    try:
        v = [float(x) for x in text.split(",")]
    except ValueError:
        raise ValidationError(f"--r: cannot parse {text!r}") from None
    if len(v) != 3:
        raise ValidationError(f"--r: need three comma-separated numbers, got {text!r}")
    return v


def cmd_obs_vort2pt(args, out: Output) -> int:
    cfg = read_config(args.config)
    params = sim_params(cfg, args.seed)
    pts = [_parse_point(r) for r in args.r]
    if len(pts) < 2 or len(pts) % 2:
        raise ValidationError("--r: give points in pairs (r1 r2 [r1' r2' ...])")
    rows = []
    for a, b in zip(pts[::2], pts[1::2]):
        req = ob.CorrelatorRequest(np.array([a, b]), args.t, params, args.samples, args.qmax)
        est = ob.vorticity_npoint(req, args.workers)
        tr = complex(np.trace(est.mean))
        se = float(np.sqrt(np.sum(np.diag(np.asarray(est.stderr)) ** 2)))
        rows.append([float(np.linalg.norm(np.subtract(a, b))), tr.real, tr.imag, se])
    out.table("vort2pt", ["separation", "re", "im", "stderr"], rows)
    return EXIT_OK


def cmd_rotation_verify(args, out: Output) -> int:
    phi = ro.phi_from_xy(args.phi)
    C = _load_spatial(args.loop) if args.loop else make_circle_loop(1.0, args.n)
    if C.N != args.n:
        from .loops import resample

        C = resample(C, args.n)
    est = ro.mc_psi_rotation(C, phi, args.n, args.samples, args.seed, args.workers)
    exact = ro.exact_psi_rotation(C, phi)
    payload = {
        "exact": _cplx(exact),
        "mc": _cplx(est.mean),
        "stderr": float(est.stderr),
        "z": float(abs(est.mean - exact) / est.stderr) if est.stderr > 0 else 0.0,
        "covariance_max_err": ro.covariance_identity_check(phi if args.phi else ro.phi_from_xy(1.0), args.n, ro.CALIBRATED_SCALE),
        "covariance_max_err_literal": ro.covariance_identity_check(ro.phi_from_xy(1.0), args.n, ro.LITERAL_SCALE),
        "calibration_scale": ro.CALIBRATED_SCALE,
    }
    out.report("rotation_verify", payload)
    return EXIT_OK


def cmd_init_wmeasure(args, out: Output) -> int:
    cfg = read_config(args.config)
    m0 = _get(cfg, "m0", float, 1.0)
    spread = _get(cfg, "spread", float, 0.1)
    seed = _get(cfg, "seed", int, args.seed)
    if not m0 > 0 or args.n < 1:
        raise ValidationError("m0 must be positive and --n >= 1")
    from . import rng

    g = rng.generator(seed, rng.CONFIGS)
    P = spread * m0 * g.standard_normal((args.n, 3))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = im.w_measure(P, m0)
    payload = {
        "N": args.n, "m0": m0, "spread": spread, "value": res.value, "log_value": res.log_value,
        "nodes": res.nodes, "rel_change": res.rel_change, "converged": res.converged,
    }
    if args.gaussian_check:
        fit = im.gaussian_limit_check(args.n, m0, seed, spread)
        payload.update(gaussian_correlation=fit.correlation, gaussian_slope=fit.slope)
    out.report("wmeasure", payload)
    for w in caught:
        print(f"mloop: warning: {w.message}", file=sys.stderr)
    return EXIT_OK if res.converged else EXIT_NUMERICAL


def cmd_init_noise(args, out: Output) -> int:
    C = _load_spatial(args.loop)
    if not args.r0 > 0:
        raise ValidationError("--r0 must be positive")
    g = im.gaussian_profile(args.m0, args.r0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        K = im.contour_noise_contraction(C, g, args.r0)
    payload = {"r0": args.r0, "m0": args.m0, "contraction": K, "m0_perimeter": args.m0 * C.perimeter()}
    out.report("noise_contract", payload)
    for w in caught:
        print(f"mloop: warning: {w.message}", file=sys.stderr)
    return EXIT_OK


# parser ----------------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--out", help="output directory (default: stdout)")
    g.add_argument("--seed", type=_positive_int, default=0, help="u64 random seed")
    g.add_argument("--workers", type=int, default=None, help="worker processes (default: $MLOOP_WORKERS or 1)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="mloop", description="Momentum loop equation toolkit")
    p.add_argument("--version", action="version", version=VERSION)
    top = p.add_subparsers(dest="group", required=True)

    def leaf(sub, name, func, help_):
        q = sub.add_parser(name, parents=[common], help=help_)
        q.set_defaults(func=func)
        return q

    m = top.add_parser("mle", help="loop equation dynamics and residuals").add_subparsers(dest="cmd", required=True)
    q = leaf(m, "integrate", cmd_mle_integrate, "integrate the loop equation")
    q.add_argument("--config", required=True)
    q = leaf(m, "fixed-point", cmd_mle_fixed_point, "fixed-point residuals of a sample")
    q.add_argument("--sample", required=True)
    q.add_argument("--gamma", type=float, default=1.0)
    q.add_argument("--tol", type=float, default=1e-10)
    q = leaf(m, "no-explosion-scan", cmd_mle_scan, "scan the explosion equation")
    q.add_argument("--trials", type=int, default=100_000)
    q.add_argument("--n", type=int, default=8)
    q.add_argument("--gamma", type=float, default=1.0)

    e = top.add_parser("ensemble", help="Euler ensemble").add_subparsers(dest="cmd", required=True)
    q = leaf(e, "sample", cmd_ensemble_sample, "draw samples")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--qmax", type=int, required=True)
    q.add_argument("--count", type=int, default=1)
    q.add_argument("--measure", choices=ee.MEASURES, default="pairs")

    n = top.add_parser("nt", help="number theory").add_subparsers(dest="cmd", required=True)
    q = leaf(n, "totient", cmd_nt_totient, "totient table")
    q.add_argument("--max", type=int, required=True)
    q = leaf(n, "cotdist", cmd_nt_cotdist, "cot^2 distribution histogram")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--bins", type=int, default=50)
    q.add_argument("--weighting", choices=("uniform", "nx2"), default="uniform")
    q.add_argument("--hist", help="base name of the histogram file (e.g. hist.csv)")

    o = top.add_parser("obs", help="observables").add_subparsers(dest="cmd", required=True)
    q = leaf(o, "psi", cmd_obs_psi, "loop functional")
    q.add_argument("--loop", required=True)
    q.add_argument("--t", type=float, default=0.0)
    q.add_argument("--config")
    q.add_argument("--samples", type=int, default=10_000)
    q.add_argument("--qmax", type=int)
    q = leaf(o, "vort2pt", cmd_obs_vort2pt, "two-point vorticity correlator (trace)")
    q.add_argument("--r", action="append", required=True, help="point x,y,z; give pairs")
    q.add_argument("--t", type=float, default=0.0)
    q.add_argument("--config")
    q.add_argument("--samples", type=int, default=10_000)
    q.add_argument("--qmax", type=int)

    r = top.add_parser("rotation", help="uniform rotation solution").add_subparsers(dest="cmd", required=True)
    q = leaf(r, "verify", cmd_rotation_verify, "MC vs exact loop functional")
    q.add_argument("--n", type=int, default=64)
    q.add_argument("--phi", type=float, default=0.1)
    q.add_argument("--samples", type=int, default=100_000)
    q.add_argument("--loop")

    i = top.add_parser("init", help="initial data and W-measure").add_subparsers(dest="cmd", required=True)
    q = leaf(i, "wmeasure", cmd_init_wmeasure, "W-measure of a random configuration")
    q.add_argument("--config")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--gaussian-check", action="store_true")
    q = leaf(i, "noise-contract", cmd_init_noise, "contour noise contraction")
    q.add_argument("--loop", required=True)
    q.add_argument("--r0", type=float, required=True)
    q.add_argument("--m0", type=float, default=1.0)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # argparse exits with 2 on usage errors
    args.command_path = f"{args.group} {args.cmd}"
    try:
        out = Output(args)
        return args.func(args, out)
    except (ValidationError, LoopFormatError, ValueError) as exc:
        print(f"mloop: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalDiagnostic, RuntimeError, FloatingPointError) as exc:
        print(f"mloop: numerical diagnostic: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
