"""Command line entry point: ``metts-trotter run <config.yaml>``.

Every output file starts with a metadata header holding the normalized
configuration, the package version, the seed and a timestamp.  Exit codes:
1 configuration error, 2 numerical error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys

import numpy as np

from . import __version__, edref, oracle, plotting, stats
from .config import ConfigError, RunConfig, load_config, validate
from .sampler import RECORD_FIELDS, NumericalError, run_chain

log = logging.getLogger("metts_trotter")

EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 1, 2, 3


def metadata(cfg: RunConfig) -> dict:
    return {
        "config": cfg.normalized(),
        "version": __version__,
        "seed": cfg.sampling.seed,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "conventions": {
            "energy_includes_mu": False,
            "plateau_rule": stats.RCurve.__dataclass_fields__["criterion"].default,
        },
    }


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output.path, exist_ok=True)
    return os.path.join(cfg.output.path, name)


class SampleSink:
    """JSONL writer that flushes after every record."""

    def __init__(self, path: str, meta: dict):
        self.path = path
        self.count = 0
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(json.dumps({"metadata": meta}) + "\n")
        self._fh.flush()

    def write(self, record) -> None:
        d = record.to_dict() if hasattr(record, "to_dict") else record
        self._fh.write(json.dumps({k: d[k] for k in RECORD_FIELDS}) + "\n")
        self._fh.flush()
        self.count += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_samples(stream, sink: SampleSink) -> int:
    """Write every record of ``stream``; returns how many were written."""
    try:
        for record in stream:
            sink.write(record)
    except OSError as exc:
        raise OSError(f"{exc} after {sink.count} records") from exc
    return sink.count


def read_samples(path: str) -> tuple[dict, list[dict]]:
    """``(metadata, records)`` of a JSONL sample file; a truncated last line is skipped."""
    meta, records = {}, []
    with open(path, encoding="utf-8") as fh:
        for k, line in enumerate(fh):
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                log.warning("skipping unreadable line %d of %s", k + 1, path)
                continue
            if k == 0 and "metadata" in obj:
                meta = obj["metadata"]
            else:
                records.append(obj)
    return meta, records


def write_table(path: str, rows: list[dict], meta: dict, fmt: str = "csv") -> str:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            fh.write(json.dumps({"metadata": meta}) + "\n")
            for r in rows:
                fh.write(json.dumps(r) + "\n")
        else:
            fh.write("# " + json.dumps({"metadata": meta}) + "\n")
            if rows:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                w.writerows(rows)
    return path


def _table_name(cfg, stem):
    return _out(cfg, f"{stem}.{cfg.output.format}")


def run_ed_thermal(cfg: RunConfig, meta: dict) -> list[dict]:
    spec = cfg.model_spec()
    basis = edref.enumerate_basis(spec.L, cfg.particle_number, spec.n_max)
    H = edref.dense_hamiltonian(spec, basis, include_mu=False)
    e = edref.thermal_expectation(H, H, cfg.thermal.beta)
    rows = [{"L": spec.L, "N": cfg.particle_number, "beta": cfg.thermal.beta, "dim": len(basis), "energy": e}]
    write_table(_table_name(cfg, "ed_thermal"), rows, meta, cfg.output.format)
    print(f"<H>/J = {e:.7f}  (L={spec.L}, N={cfg.particle_number}, dim={len(basis)})")
    return rows


def run_slme_sweep(cfg: RunConfig, meta: dict) -> list[dict]:
    spec = cfg.model_spec()
    basis = edref.enumerate_basis(spec.L, cfg.particle_number, spec.n_max)
    taus = np.linspace(0.0, cfg.sweep.tau_max, cfg.sweep.n_tau)
    rows = []
    for n in cfg.sweep.ns:
        for up in cfg.sweep.u_primes:
            u_prime = spec.U if up == "U" else float(up)
            log.info("sweep n=%d u_prime=%g", n, u_prime)
            rows.extend(edref.slme_sweep(spec, basis, cfg.thermal.beta, taus, n, u_prime))
    write_table(_table_name(cfg, "slme_sweep"), rows, meta, cfg.output.format)
    if cfg.output.figures:
        plotting.slme_figure(rows, _out(cfg, "slme_sweep.png"), title=f"U/J={spec.U:g}")
    return rows


def run_oracle(cfg: RunConfig, meta: dict) -> list[dict]:
    m = cfg.model
    mus = cfg.oracle.mus if cfg.oracle.mus is not None else list(oracle.DEFAULT_MUS)
    if m.mu not in mus:
        mus = sorted(set(mus) | {m.mu})
    rows = oracle.mu_sweep(m.L, cfg.thermal.beta, mus, m.J)
    write_table(_table_name(cfg, "oracle_ff"), rows, meta, cfg.output.format)
    if cfg.output.figures:
        plotting.mu_sweep_figure(rows, _out(cfg, "oracle_ff.png"))
    n, e, k = oracle.grand_canonical(oracle.FreeFermionSpec(m.L, m.J, cfg.thermal.beta, m.mu))
    print(f"kappa J = {k:.6f}, nu = {n / m.L:.6f} at mu/J = {m.mu:g}")
    return rows


def summary_rows(records: list[dict], beta=None, grand=False):
    """Summary table and R-curves of the non-burn-in part of a sample list."""
    kept = [r for r in records if not r.get("burn_in", False)]
    if len(kept) < stats.MIN_BLOCKS:
        raise ArithmeticError(f"{len(kept)} samples are too few for blocking")
    wall = np.array([r["wall_seconds"] for r in kept])
    columns = {"energy": np.array([r["energy"] for r in kept])}
    if grand:
        columns["n_total"] = np.array([r["n_total"] for r in kept])
    rows, curves = [], {}
    for name, x in columns.items():
        s = stats.summarize(name, x, wall)
        curves[name] = stats.r_curve(x)
        rows.append({**s.__dict__, "n_samples": len(x)})
    if grand and beta is not None:
        n1 = columns["n_total"]
        n2 = np.array([r["n_total_sq"] for r in kept])
        nb = curves["n_total"].plateau_block
        k, err = stats.jackknife_kappa(n1, n2, beta, nb)
        rows.append(
            {
                "estimator": "kappa",
                "mean": k,
                "sigma": err,
                "R": float("nan"),
                "R_lower_bound": curves["n_total"].lower_bound,
                "t_samp": float(np.mean(wall)),
                "t_unc": float("nan"),
                "n_samples": len(n1),
            }
        )
    return rows, curves


def _report(cfg, meta, records, beta, grand, stem="summary"):
    rows, curves = summary_rows(records, beta, grand)
    write_table(_table_name(cfg, stem), rows, meta, cfg.output.format)
    if cfg.output.figures:
        plotting.rcurve_figure(curves, _out(cfg, "rcurve.png"))
        plotting.series_figure([r["energy"] for r in records], _out(cfg, "energy_trace.png"))
    for r in rows:
        print(f"{r['estimator']:>8s}: {r['mean']:.6f} +- {r['sigma']:.6f}  R={r['R']:.3g}")
    return rows


def run_metts(cfg: RunConfig, meta: dict) -> list[dict]:
    chain = cfg.chain_config()
    grand = cfg.mode == "metts-grand"
    path = _out(cfg, "samples.jsonl")
    with SampleSink(path, meta) as sink:
        write_samples(run_chain(chain), sink)
    _, records = read_samples(path)
    return _report(cfg, meta, records, cfg.thermal.beta, grand)


def run_stats(cfg: RunConfig, meta: dict) -> list[dict]:
    src_meta, records = read_samples(cfg.stats.input)
    src = src_meta.get("config", {})
    grand = src.get("mode") == "metts-grand"
    beta = cfg.stats.beta
    if beta is None:
        beta = (src.get("thermal") or {}).get("beta")
    if grand and beta is None:
        raise ConfigError("stats.beta", "needed to estimate the compressibility")
    return _report(cfg, meta, records, beta, grand)


DISPATCH = {
    "ed-thermal": run_ed_thermal,
    "slme-sweep": run_slme_sweep,
    "oracle-ff": run_oracle,
    "metts-canonical": run_metts,
    "metts-grand": run_metts,
    "stats": run_stats,
}


def dispatch(cfg: RunConfig) -> int:
    meta = metadata(cfg)
    try:
        DISPATCH[cfg.mode](cfg, meta)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError, edref.ConvergenceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    data = cfg.normalized()
    if args.seed is not None:
        data["sampling"]["seed"] = args.seed
    if args.output is not None:
        data["output"]["path"] = args.output
    return validate(data)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="metts-trotter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one configuration")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--output", default=None, help="output directory")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return dispatch(cfg)


if __name__ == "__main__":
    sys.exit(main())
