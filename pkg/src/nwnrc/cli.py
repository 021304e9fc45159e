"""``nwn`` command: pulse, io-map, forecast and sweep experiments.

Failures print one JSON object on stderr (``{"error": ..., "field": ...,
"message": ...}``) and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments as X
from .config import ConfigError, load_config, output_dir

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # usage errors follow the same one-line JSON convention
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, json.dumps({"error": "usage", "field": None, "message": message}) + "\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nwn", description="Memristive network reservoir experiments")
    p.add_argument("experiment", choices=["pulse", "io-map", "forecast", "sweep"])
    p.add_argument("--config", required=True, help="YAML config file")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--out", help="output directory (wins over NWN_OUT_DIR and the config)")
    p.add_argument("--plots", action="store_true", help="also write SVG plots")
    p.add_argument("--jobs", type=int, help="worker processes for sweeps")
    return p


def _error(kind: str, message: str, field: str | None = None, code: int = EXIT_RUNTIME) -> int:
    print(json.dumps({"error": kind, "field": field, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.plots:
        overrides["output"] = {"plots": True}
    try:
        cfg = load_config(args.config, args.experiment, overrides)
        out = output_dir(cfg, args.out)
    except ConfigError as e:
        return _error("config", e.message, e.field, EXIT_CONFIG)
    except OSError as e:
        return _error("config", str(e), "config", EXIT_CONFIG)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.experiment == "pulse":
            X.run_pulse(cfg, out)
        elif args.experiment == "io-map":
            X.run_io_map(cfg, out)
        elif args.experiment == "forecast":
            for r in X.run_forecast(cfg, out):
                print(f"seed={r.seed} n_edges={r.n_edges} t_f={r.t_f_lyapunov:.3f} "
                      f"train_nmse={r.train_nmse:.3e} activity={r.mean_activity:.3f}")
        else:
            def progress(di, ri, sec):
                print(f"density_index={di} realization={ri} seconds={sec:.1f}", flush=True)

            res = X.run_density_sweep(cfg, out, progress)
            for a in res.aggregates:
                print(f"n_edges={a['n_edges']} mean_t_f={a['mean_t_f']:.3f} "
                      f"median_t_f={a['median_t_f']:.3f} best_t_f={a['best_t_f']:.3f}")
    except ImportError as e:
        return _error("dependency", str(e))
    except (ValueError, ArithmeticError, OSError) as e:
        return _error(type(e).__name__, str(e))
    print(f"output: {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
