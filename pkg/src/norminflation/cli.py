"""Command-line entry point: ``norminflation <verb> [options]``.

Every ExperimentConfig field is a flag (``--shell-ratio 16``, ``--sweep-Q '[1,2,4]'``);
values are parsed as JSON when possible.  ``--config`` loads a JSON file first,
flags override it, ``--manifest`` writes the resolved config.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .errors import BudgetExceeded, ConfigError, NumericalError

EXIT_CODES = {ConfigError: 2, NumericalError: 3, BudgetExceeded: 4}
VERBS = ("construct", "iterate", "norm", "solve", "inflate", "sweep", "ladder")


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parser() -> argparse.ArgumentParser:
    from .experiments import ExperimentConfig

    p = argparse.ArgumentParser(prog="norminflation", description=__doc__.splitlines()[0])
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--manifest", help="write the resolved config here")
    p.add_argument("--out", help="output file or directory (default: stdout / config output_dir)")
    p.add_argument("--field", help="norm: field file (.json TrigField/InitialData, or .nsgf snapshot)")
    p.add_argument("--kind", default="besov", choices=("besov", "xt", "bmo", "linf"))
    p.add_argument("--T", type=float, default=None, help="norm --kind xt: time horizon")
    p.add_argument("--at", type=float, default=0.0, help="norm: evaluate the field at this time")
    p.add_argument("-v", "--verbose", action="store_true")
    for f in dataclasses.fields(ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, type=_value, default=None)
    return p


def _resolve(args):
    from .experiments import ExperimentConfig

    base = ExperimentConfig.load(args.config).to_dict() if args.config else {}
    for k, v in vars(args).items():
        if k.startswith("cfg_") and v is not None:
            base[k[4:]] = v
    cfg = ExperimentConfig.from_dict(base)
    cfg.validate()
    return cfg


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _default(o):
    import numpy as np
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _load_field(path: str):
    from .construction import InitialData
    from .planewave import TrigField
    from .solver import load_snapshot

    if path.endswith(".nsgf"):
        return load_snapshot(path)
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read field {path}: {e}") from e
    if d.get("type") == "InitialData":
        return InitialData.from_dict(d).field
    return TrigField.from_dict(d)


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import experiments as ex
    from . import norms
    from .construction import build_initial_data
    from .planewave import first_iterate, split_u1
    from .solver import SolverConfig, evolve, save_snapshot, spectralize

    cfg = _resolve(args)
    if args.manifest:
        _emit(ex.RunManifest.for_config(cfg).to_dict(), args.manifest)

    if args.verb == "construct":
        _emit(build_initial_data(cfg.family(), cfg.Q).to_dict(), args.out)
    elif args.verb == "iterate":
        fam = cfg.family()
        fi = first_iterate(build_initial_data(fam, cfg.Q))
        u10, u11 = split_u1(fi.u1, fam)
        _emit({"u1": fi.u1.to_dict(), "u10": u10.to_dict(), "u11": u11.to_dict(),
               "N1": fi.N1.to_dict(), "N2": fi.N2.to_dict(), "N3": fi.N3.to_dict(),
               "near_resonant": fi.near_resonant}, args.out)
    elif args.verb == "norm":
        if not args.field:
            raise ConfigError("norm needs --field")
        f = _load_field(args.field)
        if args.kind == "besov":
            rep = norms.besov_norm(f, at=args.at, per_decade=cfg.besov_per_decade, oversample=cfg.oversample)
        elif args.kind == "linf":
            rep = norms.linf_report(f, cfg.oversample, t=args.at)
        elif args.kind == "bmo":
            tf = norms._as_trig(f).snapshot(args.at)
            rep = norms.bmo_neg1_norm(tf, oversample=cfg.oversample)
        else:
            if args.T is None:
                raise ConfigError("--kind xt needs --T")
            tf = norms._as_trig(f)
            if tf.is_time_constant:
                from .planewave import heat_flow
                tf = heat_flow(tf)  # a datum: measure its caloric extension
            rep = norms.xt_norm(tf, args.T, oversample=cfg.oversample)
        _emit(rep.to_dict(), args.out)
    elif args.verb == "solve":
        fam = cfg.family()
        data = build_initial_data(fam, cfg.Q)
        shape = cfg.grid_shape(fam)
        scfg = SolverConfig(N=shape, nu=cfg.nu, T_end=cfg.T_end, dt=cfg.dt_max, cfl=cfg.cfl,
                            snapshot_t_min=1e-4 / fam.shells[0].magnitude ** 2,
                            snapshots_per_decade=cfg.snapshots_per_decade)
        scfg.validate(kmax=data.field.max_wavenumbers())
        traj = evolve(spectralize(data.field, 0.0, shape, cfg.nu), scfg)
        out = Path(args.out or cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, f in enumerate(traj.fields):
            save_snapshot(f, out / f"snap_{i:04d}.nsgf", {"index": i})
        _emit({"times": list(map(float, traj.times)), "meta": traj.meta}, str(out / "trajectory.json"))
    elif args.verb == "inflate":
        rep = ex.run_inflation_experiment(cfg, args.out or cfg.output_dir)
        _emit({k: rep.to_dict()[k] for k in ("inflation_ratio", "t_star", "manifest_hash")}, None)
    elif args.verb == "sweep":
        if args.out:
            cfg = dataclasses.replace(cfg, output_dir=args.out)
        csv_path, idx_path = ex.sweep(cfg)
        sys.stdout.write(f"{csv_path}\n{idx_path}\n")
    elif args.verb == "ladder":
        _emit(ex.build_time_ladder(cfg.Q, cfg.family()).to_dict(), args.out)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except tuple(EXIT_CODES) as e:
        code = next(c for cls, c in EXIT_CODES.items() if isinstance(e, cls))
        sys.stderr.write(f"error: {e}\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
