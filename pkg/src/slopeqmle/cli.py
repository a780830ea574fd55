"""Command line interface.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure
(separation, solver failure, unreliable weights, exhausted failure budget).
Replication-level parallelism for ``montecarlo`` is controlled by the
``SLOPEQMLE_WORKERS`` environment variable (default 1).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dgp, harness, population, qmle, reweight
from .links import get_link

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

_CONFIG_ERRORS = (dgp.SpecError, dgp.DatasetError, harness.ConfigError, OSError, KeyError)
_NUMERICAL_ERRORS = (
    qmle.EstimationError,
    population.PopulationError,
    reweight.WeightingError,
    harness.HarnessError,
    dgp.UnsupportedAnalysis,
)


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not numerical ones
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _dump(obj) -> None:
    sys.stdout.write(json.dumps(harness._json_safe(obj), indent=2) + "\n")


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise dgp.SpecError(f"cannot parse vector {text!r}") from None


def cmd_simulate(args) -> int:
    spec = dgp.load_spec(args.dgp)
    data = dgp.sample(spec, args.n, args.seed)
    text = data.to_csv()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fit(args) -> int:
    data = dgp.Dataset.from_csv(args.data)
    link = get_link(args.link)
    init = _vector(args.init) if args.init else None
    weights = reweight.read_weights_csv(args.weights) if args.weights else None
    if weights is not None and weights.size != data.n:
        raise dgp.DatasetError(f"weights file has {weights.size} rows, data has {data.n}")
    res = qmle.fit(data, link, init=init, weights=weights)
    _dump(
        {
            "theta_hat": res.theta_hat.as_vector().tolist(),
            "se_sandwich": res.se_sandwich.tolist(),
            "loglik": res.loglik,
            "converged": res.converged,
        }
    )
    return EXIT_OK


def cmd_pseudo_true(args) -> int:
    spec = dgp.load_spec(args.dgp)
    pt = population.pseudo_true_for(spec, get_link(args.link), args.grid_nodes)
    _dump(
        {
            "c_star": pt.c_star,
            "r_star": pt.r_star,
            "theta_star": pt.theta_star.as_vector().tolist(),
            "residual_full_foc": pt.residual_full_foc,
            "psi_trace_csv": pt.trace_csv(),
        }
    )
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = harness.ExperimentConfig.load(args.config)
    report = harness.run(cfg)
    written = []
    for fmt in ("csv", "json"):
        if fmt in cfg.outputs:
            written += [str(p) for p in harness.emit(report, fmt, cfg.outputs[fmt])]
    if written:
        _dump({"schema": harness.SCHEMA, "written": written, "summary": report.summary})
    else:
        sys.stdout.write(harness.to_json(report))
    return EXIT_OK


def cmd_reweight(args) -> int:
    data = dgp.Dataset.from_csv(args.data)
    plan = reweight.compute_weights(data, target=args.target, trim_quantile=args.trim)
    if args.out:
        plan.to_csv(args.out)
        _dump({"written": args.out, "trimmed_mass": plan.trimmed_mass, "max_weight": float(plan.weights.max())})
    else:
        sys.stdout.write(plan.to_csv())
    return EXIT_OK


def cmd_battery(args) -> int:
    _dump({"cases": harness.battery_report(args.grid_nodes, args.n, args.seed)})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slopeqmle", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a dataset from a DGP config")
    s.add_argument("--dgp", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="QMLE fit of a y,x1..xm CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--link", required=True)
    s.add_argument("--init", help="comma-separated starting value alpha,beta1,...")
    s.add_argument("--weights", help="weights CSV with header 'w'")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("pseudo-true", help="population pseudo-true value for a DGP config")
    s.add_argument("--dgp", required=True)
    s.add_argument("--link", required=True)
    s.add_argument("--grid-nodes", type=int, default=population.DEFAULT_NODES)
    s.set_defaults(func=cmd_pseudo_true)

    s = sub.add_parser("montecarlo", help="run an experiment config")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_montecarlo)

    s = sub.add_parser("reweight", help="normalising observation weights for a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--target", default="normal", choices=["normal"])
    s.add_argument("--trim", type=float, default=0.01)
    s.add_argument("--out")
    s.set_defaults(func=cmd_reweight)

    s = sub.add_parser("battery", help="evaluate the assumption battery")
    s.add_argument("--grid-nodes", type=int, default=population.DEFAULT_NODES)
    s.add_argument("--n", type=int, default=0, help="also fit one sample of this size per case")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_battery)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
