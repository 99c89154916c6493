"""Command-line front end: run an experiment from a config and write CSV.

Exit status is 0 when every check of the run passes, 1 when a check fails
and 2 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analytics import HypothesisError, diag_prediction, eta1, h_classical, h_new, p2_asymptotic
from .config import ConfigError, ExperimentConfig, LawConfig, SpectrumConfig, load_config
from .ensemble import classical_h_mc, haar_moment_test, independence_test, mc_coherence_curve, mc_mean_p2
from .propagation import CoherenceMatrix
from .su2 import DomainError

__all__ = ["Check", "RunResult", "run", "run_simulate", "run_compare_h", "run_p2", "run_haar",
           "run_independence", "default_config", "format_csv", "main"]

SIGMAS = 4.0


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class RunResult:
    columns: list
    rows: list
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _within(diff, se, sigmas=SIGMAS) -> bool:
    if se > 0:
        return abs(diff) <= sigmas * se
    return abs(diff) <= 1e-12


def default_config(experiment: str) -> ExperimentConfig:
    """Reference setup: two-point twist 0.1, exponential lengths of mean 1, beta 1."""
    ns = {
        "simulate": list(range(0, 501)),
        "p2": [64, 128, 256, 512, 1024],
        "haar": [400],
        "independence": [400],
        "compare-h": [0],
    }[experiment]
    return ExperimentConfig(
        experiment=experiment,
        twist=LawConfig("two_point", {"theta0": 0.1}),
        length=LawConfig("exponential", {"mean": 1.0}),
        ns=ns,
        beta2=2.0 if experiment == "independence" else None,
        spectrum=SpectrumConfig("flat", low=0.8, high=1.2, points=5) if experiment == "p2" else None,
    )


# -- experiments ---------------------------------------------------------------


def run_simulate(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    model = cfg.model()
    curve = mc_coherence_curve(model, cfg.beta, cfg.ns, cfg.samples, threads=threads)
    pred = [math.nan] * len(cfg.ns)
    checks = []
    if not model.twist.has_regular_twist:
        eta = eta1(model, cfg.beta)
        j0 = CoherenceMatrix(1.0, 0.0, 0j)
        pred = [diag_prediction(j0, eta, n)[0] for n in cfg.ns]
        hits = sum(_within(m - p, s) for m, p, s in zip(curve.mean[:, 0], pred, curve.stderr[:, 0]))
        frac = hits / len(cfg.ns)
        checks.append(Check("j11_decay", frac >= 0.95, f"{hits}/{len(cfg.ns)} points within {SIGMAS:g} sigma"))
    cols = ["N", "j11", "j22", "re_j12", "im_j12", "se_j11", "se_j22", "se_re_j12", "se_im_j12", "pred_j11"]
    rows = [[n, *curve.mean[i], *curve.stderr[i], pred[i]] for i, n in enumerate(cfg.ns)]
    return RunResult(cols, rows, checks)


def run_compare_h(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    model = cfg.model()
    z = cfg.z if cfg.z is not None else 1e4 * model.mean_length
    rows, checks = [], []
    for beta in cfg.betas or [cfg.beta]:
        try:
            hn = h_new(model, beta)
        except HypothesisError:
            hn = math.nan
        hc = h_classical(model, beta)
        ratio = hn / hc if hc != 0 else math.nan
        mc, se = classical_h_mc(model, beta, z, cfg.samples, threads=threads)
        ok = _within(mc - hc, se)
        checks.append(Check(f"h_classical_mc[beta={beta:g}]", ok, f"mc {mc:.6g} +- {se:.2g} vs {hc:.6g}"))
        rows.append([beta, hn, hc, ratio, mc, se])
    return RunResult(["beta", "h_new", "h_classical", "ratio", "h_classical_mc", "se"], rows, checks)


def loglog_slope(ns, values) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def run_p2(cfg: ExperimentConfig, threads: int = 1, base: Path = Path(".")) -> RunResult:
    model = cfg.model()
    spec = cfg.spectrum.build(base)
    mean, se = mc_mean_p2(model, spec, cfg.ns, cfg.samples, threads=threads)
    checks = []
    if len(spec.grid) == 1:
        pred = [1.0] * len(cfg.ns)
        worst = float(np.max(np.abs(mean - 1.0)))
        checks.append(Check("single_line_polarized", worst <= 1e-12, f"max |p2 - 1| = {worst:.2g}"))
    else:
        pred = [p2_asymptotic(model, spec, n).leading if n > 0 else math.nan for n in cfg.ns]
        pos = [i for i, n in enumerate(cfg.ns) if n > 0]
        if len(pos) >= 2:
            slope = loglog_slope([cfg.ns[i] for i in pos], [mean[i] for i in pos])
            checks.append(Check("p2_slope", abs(slope + 0.5) <= 0.05, f"slope {slope:.4f} vs -0.5 +- 0.05"))
        if 512 in cfg.ns:
            i = cfg.ns.index(512)
            rel = mean[i] / pred[i] - 1.0
            checks.append(Check("p2_at_512", abs(rel) <= 0.15, f"mc/prediction - 1 = {rel:+.4f}"))
    rows = [[n, mean[i], se[i], pred[i]] for i, n in enumerate(cfg.ns)]
    return RunResult(["N", "p2", "se", "asymptotic"], rows, checks)


def run_haar(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    n = max(cfg.ns)
    rep = haar_moment_test(cfg.model(), cfg.beta, n, cfg.samples, threads=threads)
    rows = [[*r.k, r.empirical.real, r.empirical.imag, r.predicted, r.stderr_re, r.stderr_im, r.zscore]
            for r in rep.rows]
    check = Check("haar_moments", rep.passed(SIGMAS), f"max z {rep.max_zscore():.3f} over {len(rows)} moments")
    return RunResult(["k1", "k2", "k3", "k4", "re", "im", "haar", "se_re", "se_im", "z"], rows, [check])


def run_independence(cfg: ExperimentConfig, threads: int = 1) -> RunResult:
    n = max(cfg.ns)
    b1, b2 = cfg.beta, cfg.beta2
    rep = independence_test(cfg.model(), b1, b2, n, cfg.samples, threads=threads)
    z = rep.zscores()
    rows = []
    for k in range(4):
        for r in range(2):
            for c in range(2):
                m = rep.mean[k, r, c]
                rows.append([k, r, c, m.real, m.imag, rep.stderr_re[k, r, c], rep.stderr_im[k, r, c], z[k, r, c]])
    checks = []
    if b1 == b2:
        zc = float(z[0].max())
        checks.append(Check("positive_control", zc > 10.0, f"sigma0 max z {zc:.3g} (needs > 10)"))
    elif b1 != -b2:
        zmax = float(z.max())
        checks.append(Check("independence", zmax <= SIGMAS, f"max z {zmax:.3f}"))
    return RunResult(["k", "row", "col", "re", "im", "se_re", "se_im", "z"], rows, checks)


_RUNNERS = {
    "simulate": run_simulate,
    "compare-h": run_compare_h,
    "p2": run_p2,
    "haar": run_haar,
    "independence": run_independence,
}


def run(cfg: ExperimentConfig, threads: int = 1, base: Path = Path(".")) -> RunResult:
    if cfg.experiment == "p2":
        return run_p2(cfg, threads, base)
    return _RUNNERS[cfg.experiment](cfg, threads)


# -- output --------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def format_csv(cfg: ExperimentConfig, result: RunResult) -> str:
    buf = io.StringIO()
    buf.write(f"# fiberpol {__version__}\n")
    buf.write(f"# experiment: {cfg.experiment}\n")
    buf.write(f"# config: {cfg.digest()}\n")
    buf.write(f"# seed: {cfg.seed}\n")
    buf.write(f"# samples: {cfg.samples}\n")
    for c in result.checks:
        buf.write(f"# check {c.name}: {'PASS' if c.passed else 'FAIL'} ({c.detail})\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fiberpol", description="Polarization statistics of randomly twisted fibers.")
    p.add_argument("experiment", choices=list(_RUNNERS))
    p.add_argument("--config", type=Path, help="YAML experiment file (default: reference model)")
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--out", type=Path, help="CSV destination (default: stdout)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--version", action="version", version=f"fiberpol {__version__}")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config)
            cfg = cfg.with_overrides(experiment=args.experiment)
            base = args.config.parent
        else:
            cfg = default_config(args.experiment)
            base = Path(".")
        cfg = ExperimentConfig.from_dict(
            cfg.with_overrides(seed=args.seed, samples=args.samples).to_dict()
        )
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        result = run(cfg, args.threads, base)
    except (ConfigError, DomainError, HypothesisError, ValueError, OSError) as exc:
        print(f"fiberpol: error: {exc}", file=sys.stderr)
        return 2
    text = format_csv(cfg, result)
    out = args.out or (Path(cfg.output) if cfg.output else None)
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)
    for c in result.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}", file=sys.stderr)
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
