"""Command-line pipeline: gen -> solve -> expand -> verify.

Every stage reads the same YAML config.  Keys are checked against the
bundled reference file and unknown keys are rejected.  Outputs go to
``--out``, else ``$FARFIELD_OUT``, else ``output.dir`` from the config.

Exit codes: 0 success, 1 a gated claim failed, 2 execution error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

log = logging.getLogger("farfield")

ENV_OUT = "FARFIELD_OUT"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigError(ValueError):
    pass


class MissingDependency(RuntimeError):
    pass


def reference_config() -> dict:
    text = resources.files("farfield").joinpath("data/reference.yaml").read_text()
    return yaml.safe_load(text)


def _merge(defaults: dict, given: dict, where: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, val in (given or {}).items():
        path = f"{where}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{path!r} must be a mapping")
            out[key] = _merge(defaults[key], val, path + ".")
        else:
            out[key] = val
    return out


def load_config(path=None) -> dict:
    """Reference config overlaid with the file at ``path``."""
    base = reference_config()
    if path is None:
        return base
    try:
        given = yaml.safe_load(Path(path).read_text()) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(given, dict):
        raise ConfigError("config must be a mapping")
    return _merge(base, given)


def _q(v):
    return math.inf if str(v).lower() in ("inf", "infinity") else float(v)


@dataclass
class RunConfig:
    raw: dict
    initial: object
    grid: object
    solver: object
    expansion: object
    verify: object
    export_times: tuple
    out: Path

    @classmethod
    def from_dict(cls, raw: dict, out=None) -> "RunConfig":
        from .fields import GridSpec
        from .solver import InitialDataSpec, SolverConfig
        from .expansion import ExpansionOptions
        from .verify import VerifyOptions

        try:
            g = raw["grid"]
            grid = GridSpec(int(g["n"]), float(g["L"]), float(g["dealias_fraction"]))
            ini = dict(raw["initial"])
            samples_file = ini.pop("samples_file")
            samples = None
            if samples_file:
                from .fields import read_field
                samples = read_field(samples_file).samples
            asym = {(int(i), int(j)): float(c) for i, j, c in ini.pop("asymmetry") or []}
            initial = InitialDataSpec(asymmetry=asym, samples=samples, **ini)
            s = dict(raw["solver"])
            count = s.pop("snapshot_count")
            times = s.pop("snapshot_times")
            dt, T = float(s["dt"]), float(s["T_max"])
            if times is None:
                times = _geometric_times(T, count, dt)
            solver = SolverConfig(grid=grid, snapshot_times=tuple(times), **s)
            e = dict(raw["expansion"])
            export = tuple(float(t) for t in (e.pop("export_times") or ()))
            expansion = ExpansionOptions(**e)
            v = dict(raw["verify"])
            for key in ("variants", "mus_inf", "mus_l1", "scaling_lambdas", "k_window"):
                v[key] = tuple(v[key])
            verify = VerifyOptions(**v)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        target = out or os.environ.get(ENV_OUT) or raw["output"]["dir"]
        return cls(raw, initial, grid, solver, expansion, verify, export, Path(target))

    def meta(self) -> dict:
        """Fully resolved configuration, every tolerance included."""
        m = copy.deepcopy(self.raw)
        m["solver"]["snapshot_times"] = list(self.solver.snapshot_times)
        m["verify"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.verify.as_dict().items()}
        m["expansion"] = dict(vars(self.expansion))
        m["expansion"]["export_times"] = list(self.export_times)
        m["output"] = {"dir": str(self.out)}
        return m


def _geometric_times(T, count, dt, fraction=1.0 / 16.0):
    """``count`` snapshot times spaced geometrically over [fraction T, T], rounded up onto the step lattice."""
    import numpy as np

    steps = np.unique(np.ceil(np.geomspace(fraction * T, T, int(count)) / dt - 1e-9).astype(int))
    return [round(float(k * dt), 12) for k in steps]


# --------------------------------------------------------------------------
# stages


def _initial(cfg: RunConfig):
    from .solver import make_initial_vorticity

    return make_initial_vorticity(cfg.initial, cfg.grid)


def _write_meta(cfg: RunConfig, name="meta.yaml"):
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / name).write_text(yaml.safe_dump(cfg.meta(), sort_keys=True))


def cmd_gen(cfg: RunConfig):
    from .fields import write_field, write_field_csv

    w0 = _initial(cfg)
    _write_meta(cfg)
    write_field(cfg.out / "omega0.fld", w0)
    write_field_csv(cfg.out / "omega0.csv", w0)
    log.info("initial vorticity written to %s", cfg.out / "omega0.fld")
    return w0


def _load_initial(cfg: RunConfig):
    from .fields import read_field

    path = cfg.out / "omega0.fld"
    if not path.exists():
        raise MissingDependency(f"missing dependency: {path} (run 'gen' first)")
    return read_field(path, cfg.grid.dealias_fraction)


def cmd_solve(cfg: RunConfig):
    from .solver import run

    w0 = _load_initial(cfg)
    every = max(1, cfg.solver.nsteps // 20)

    def progress(n, total):
        if n % every == 0 or n == total:
            log.info("step %d / %d", n, total)

    traj = run(w0, cfg.solver, progress=progress)
    traj.save(cfg.out / "trajectory", extra_meta={"run": cfg.meta()})
    log.info("trajectory written to %s", cfg.out / "trajectory")
    return traj


def _load_trajectory(cfg: RunConfig):
    from .solver import Trajectory

    path = cfg.out / "trajectory"
    if not (path / "meta").exists():
        raise MissingDependency(f"missing dependency: {path} (run 'solve' first)")
    return Trajectory.load(path)


EXPORT_KINDS = (("U_m", (1, 2, 3, 4)), ("U_m_t", (1, 2, 3, 4)), ("U_m_inf", (1, 2, 3, 4)), ("Omega_m", (2, 3)),
                ("I_p", (5, 6)), ("K_m", (3, 4)), ("J_m", (3, 4)), ("V_m", (3, 4)))


def cmd_expand(cfg: RunConfig, traj=None):
    import warnings

    from .expansion import ExpansionCoefficients, PrecisionWarning, term
    from .fields import weighted_norm, write_field

    traj = traj or _load_trajectory(cfg)
    coeffs = ExpansionCoefficients.from_trajectory(traj, cfg.expansion)
    tdir = cfg.out / "terms"
    tdir.mkdir(parents=True, exist_ok=True)
    with open(tdir / "coefficients.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "l", "beta1", "beta2", "value1", "value2", "tail1", "tail2", "uncertainty"])
        for kind, l, beta, val, tail, unc in coeffs.tail_report():
            tail = tail if tail is not None else (float("nan"), float("nan"))
            w.writerow([kind, l, beta.a1, beta.a2, repr(float(val[0])), repr(float(val[1])),
                        repr(float(tail[0])), repr(float(tail[1])), repr(float(unc))])
    rows = []
    export = {round(t, 9) for t in cfg.export_times}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionWarning)
        for t in traj.times:
            if t <= 0:
                continue
            for kind, orders in EXPORT_KINDS:
                for m in orders:
                    pt = term(kind, m, float(t), traj.grid, coeffs)
                    f = pt.field
                    name = ""
                    if round(float(t), 9) in export:
                        name = f"{kind}_{m}_t{t:.6g}.fld"
                        write_field(tdir / name, f)
                    rows.append([kind, m, repr(float(t)), repr(weighted_norm(f, 0, 1)), repr(weighted_norm(f, 0, 2)),
                                 repr(weighted_norm(f, 0, math.inf)), repr(float(pt.uncertainty)), name])
    with open(tdir / "terms.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "order", "t", "norm_l1", "norm_l2", "norm_linf", "tail_uncertainty", "file"])
        w.writerows(rows)
    log.info("%d term rows written to %s", len(rows), tdir / "terms.csv")
    return coeffs


def cmd_verify(cfg: RunConfig, traj=None, coeffs=None):
    from . import verify as V
    from .expansion import ExpansionCoefficients

    if not (cfg.out / "terms" / "terms.csv").exists():
        raise MissingDependency(f"missing dependency: {cfg.out / 'terms' / 'terms.csv'} (run 'expand' first)")
    traj = traj or _load_trajectory(cfg)
    w0 = _load_initial(cfg)
    coeffs = coeffs or ExpansionCoefficients.from_trajectory(traj, cfg.expansion)
    opts = cfg.verify
    reports = []
    stages = [
        ("kernel oracle", lambda: V.kernel_oracle_check(opts)),
        ("scaling", lambda: V.scaling_suite(coeffs, traj.grid, options=opts)),
        ("solver sanity", lambda: V.solver_sanity(traj, w0, opts)),
        ("curl consistency", lambda: V.curl_consistency(coeffs, traj.grid, traj.times[traj.times > 0], opts)),
        ("vorticity", lambda: V.vorticity_suite(traj, coeffs, options=opts)),
    ]
    stages += [(v, (lambda v=v: V.theorem_suite(v, traj, coeffs, options=opts))) for v in opts.variants]
    stages += [
        ("K sharpness", lambda: [V.k_sharpness(coeffs, 3, options=opts)[0]]),
        ("J well-definedness", lambda: V.j_stability(coeffs, traj.grid, 3, options=opts)),
        ("linear lemmas", lambda: V.lemma_suite(w0, [t for t in traj.times
                                                     if t >= opts.window_fraction * traj.times[-1] * (1 - 1e-12)],
                                                options=opts)),
    ]
    for name, fn in stages:
        log.info("verifying: %s", name)
        reports.extend(fn())
    V.write_report(cfg.out / "report.csv", reports)
    text = V.summary_text(reports)
    (cfg.out / "summary.txt").write_text(text)
    log.info("\n%s", text)
    return reports


def cmd_all(cfg: RunConfig):
    cmd_gen(cfg)
    traj = cmd_solve(cfg)
    coeffs = cmd_expand(cfg, traj)
    return cmd_verify(cfg, traj, coeffs)


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "expand": cmd_expand, "verify": cmd_verify, "all": cmd_all}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="farfield", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="YAML config overlaid on the bundled reference")
    p.add_argument("--out", help=f"output directory (overrides ${ENV_OUT} and output.dir)")
    p.add_argument("--threads", type=int, default=None, help="thread count for the numeric libraries")
    p.add_argument("--quiet", action="store_true", help="only print warnings and errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return 2
        for var in _THREAD_VARS:
            os.environ[var] = str(args.threads)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = RunConfig.from_dict(load_config(args.config), args.out)
        result = COMMANDS[args.command](cfg)
    except (ConfigError, MissingDependency) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any execution failure maps to exit code 2
        log.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    if args.command in ("verify", "all"):
        failed = [r for r in result if r.gated and r.verdict == "fail"]
        return 1 if failed else 0
    return 0


if __name__ == "__main__":
    sys.exit(main())
