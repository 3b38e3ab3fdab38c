"""Command-line interface.

Subcommands:
    run             one scenario -> report (csv/json-lines) + figures
    sweep           the six-scenario battery -> per-scenario reports + summary
    analyze         analytic P_FA/P_D curves vs a Monte Carlo oracle
    export-csi      legitimate CSI dataset in the trace format
    validate-trace  parse and validate a trace file

Exit codes: 0 success, 2 configuration error, 3 numeric fault.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, plots, traceio
from .config import load_scenarios
from .errors import ConfigError, CsiAuthError, NumericFault
from .harness import (SWEEP_SCENARIOS, ScenarioConfig, default_scenario, emit_report,
                      export_csi_dataset, run_scenario, calibrate)


def _scenario_from_args(args) -> ScenarioConfig:
    if args.config:
        scenarios = load_scenarios(args.config)
        if args.scenario:
            if args.scenario not in scenarios:
                raise ConfigError(
                    f"scenario {args.scenario!r} not in {args.config} "
                    f"(has {sorted(scenarios)})")
            cfg = scenarios[args.scenario]
        elif len(scenarios) == 1:
            cfg = next(iter(scenarios.values()))
        else:
            raise ConfigError("--scenario NAME required with a multi-scenario config")
    else:
        cfg = default_scenario(args.scenario or "hmm2-los")
    overrides = {}
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        overrides["horizon"] = args.horizon
    if getattr(args, "spoofer", None):
        overrides["spoofer"] = _parse_spoofer(args.spoofer)
    return replace(cfg, **overrides) if overrides else cfg


def _parse_spoofer(text: str):
    """--spoofer naive | moment-matching | trace:PATH (trace replays looped)."""
    from .spoofing import SpooferKind

    if text.startswith("trace:"):
        return SpooferKind("trace", trace_path=text[len("trace:"):], replay="loop")
    return SpooferKind(text)


def _cmd_run(args) -> int:
    cfg = _scenario_from_args(args)
    out = Path(args.out)
    report = run_scenario(cfg)
    emit_report(report, args.format, out / f"{cfg.name}.{_ext(args.format)}")
    if not args.no_figures:
        plots.plot_roc([report], out / f"{cfg.name}_roc.png")
        plots.plot_score_hist(report, out / f"{cfg.name}_scores.png")
        plots.plot_posterior_cdf([report], out / f"{cfg.name}_posterior_cdf.png")
    print(f"{cfg.name}: auc={report.auc:.4f} "
          f"dt_alice={report.mean_decision_time['alice']:.2f} "
          f"dt_eve={report.mean_decision_time['eve']:.2f} -> {out}")
    return 0


def _ext(fmt: str) -> str:
    return "csv" if fmt == "csv" else "jsonl"


def _cmd_sweep(args) -> int:
    out = Path(args.out)
    reports = []
    for name in SWEEP_SCENARIOS:
        cfg = default_scenario(name, trials=args.trials, seed=args.seed)
        if args.config:
            scenarios = load_scenarios(args.config)
            if name in scenarios:
                cfg = replace(scenarios[name], trials=args.trials, seed=args.seed)
        report = run_scenario(cfg)
        reports.append(report)
        emit_report(report, args.format, out / f"{name}.{_ext(args.format)}")
        print(f"{name:22s} auc={report.auc:.4f} "
              f"dt_alice={report.mean_decision_time['alice']:.2f}")
    if not args.no_figures:
        plots.plot_roc(reports, out / "sweep_roc.png")
        plots.plot_sweep_auc(reports, out / "sweep_auc.png")
        plots.plot_decision_times(reports, out / "sweep_decision_times.png")
        plots.plot_posterior_cdf(reports, out / "sweep_posterior_cdf.png")
    return 0


def _cmd_analyze(args) -> int:
    cfg = _scenario_from_args(args)
    if cfg.variant == "sprt":
        raise ConfigError("analyze supports the hmm2 and hmm3 variants")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    calib = calibrate(cfg)
    # Equal-covariance regime: share the legitimate LoS-state covariance.
    from .detector import HmmModel
    from .embedding import EmissionStats

    shared = calib.model.emissions[0].sigma.copy()
    model = HmmModel(calib.model.pi.copy(), calib.model.a.copy(), [
        EmissionStats(mu=e.mu.copy(), sigma=shared.copy(), beta=e.beta,
                      reg_eps=e.reg_eps, state_label=e.state_label)
        for e in calib.model.emissions
    ])
    gamma0 = cfg.thresholds.gamma0
    horizon = args.horizon or min(cfg.horizon, 20)
    rng = np.random.default_rng([cfg.seed, 99])
    rows = []
    if cfg.variant == "hmm2":
        rec = analysis.pdf_cdf_recursion_2state(model, cfg.thresholds, horizon)
        aff = analysis.affine_llr_params(model.emissions[0].mu, model.emissions[1].mu,
                                         shared + cfg.reg_eps * np.eye(shared.shape[0]))
        lams, states = analysis.simulate_lambda_2state(model.pi, model.a, aff, horizon,
                                                       args.mc_trials, rng)
        for t in range(1, horizon + 1):
            rows.append({"t": t, "p_fa": rec.p_fa[t - 1], "p_d": rec.p_d[t - 1],
                         "source": "analytic"})
            sel0 = states[:, t - 1] == 0
            rows.append({"t": t,
                         "p_fa": float(np.mean(lams[sel0, t - 1] <= gamma0)),
                         "p_d": float(np.mean(lams[~sel0, t - 1] <= gamma0)),
                         "source": "monte-carlo"})
    else:
        res = analysis.pfa_pd_3state(gamma0, model, horizon)
        params = analysis.bivariate_llr_params(
            model.emissions[0].mu, model.emissions[1].mu, model.emissions[2].mu,
            shared + cfg.reg_eps * np.eye(shared.shape[0]), model.pi, model.a)
        lams, states = analysis.simulate_lambda_3state(model.pi, model.a,
                                                       params.m_by_state, params.v,
                                                       horizon, args.mc_trials, rng)
        for t in range(1, horizon + 1):
            rows.append({"t": t, "p_fa": res.p_fa[t - 1], "p_d": res.p_d[t - 1],
                         "source": "analytic"})
            alice = states[:, t - 1] < 2
            rows.append({"t": t,
                         "p_fa": float(np.mean(lams[alice, t - 1] <= gamma0)),
                         "p_d": float(np.mean(lams[~alice, t - 1] <= gamma0)),
                         "source": "monte-carlo"})
    path = out / f"{cfg.name}_curves.jsonl"
    traceio.write_curve_records(path, rows, {"scenario": cfg.name, "gamma0": gamma0})
    if not args.no_figures:
        plots.plot_pfa_pd(rows, out / f"{cfg.name}_curves.png",
                          title=f"{cfg.name}: analytic vs Monte Carlo")
    ana = {(r["t"]): r for r in rows if r["source"] == "analytic"}
    mc = {(r["t"]): r for r in rows if r["source"] == "monte-carlo"}
    sup_fa = max(abs(ana[t]["p_fa"] - mc[t]["p_fa"]) for t in ana)
    sup_d = max(abs(ana[t]["p_d"] - mc[t]["p_d"]) for t in ana)
    print(f"{cfg.name}: sup|P_FA analytic-MC|={sup_fa:.4f} sup|P_D|={sup_d:.4f} -> {path}")
    return 0


def _cmd_export_csi(args) -> int:
    cfg = _scenario_from_args(args)
    path = export_csi_dataset(cfg, args.n, args.out)
    print(f"wrote {args.n} records -> {path}")
    return 0


def _cmd_validate_trace(args) -> int:
    header, n = traceio.validate_csi_trace(args.path)
    print(f"valid trace: {n} records, m_r={header['m_r']}, m_t={header['m_t']}, "
          f"label={header.get('label', '?')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csiauth", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, trials_default=None):
        p.add_argument("--config", help="YAML scenario file")
        p.add_argument("--scenario", help="scenario name (preset or from config)")
        p.add_argument("--trials", type=int, default=trials_default)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--format", choices=("csv", "json-lines"), default="csv")
        p.add_argument("--no-figures", action="store_true")

    p_run = sub.add_parser("run", help="run one scenario")
    add_common(p_run)
    p_run.add_argument("--horizon", type=int, default=None)
    p_run.add_argument("--spoofer", default=None,
                       help="naive | moment-matching | trace:PATH (looped replay)")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run the six-scenario battery")
    p_sweep.add_argument("--config", help="YAML overrides for preset names")
    p_sweep.add_argument("--trials", type=int, default=500)
    p_sweep.add_argument("--seed", type=int, default=1)
    p_sweep.add_argument("--out", default="out")
    p_sweep.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analyze", help="analytic curves vs Monte Carlo oracle")
    add_common(p_an)
    p_an.add_argument("--horizon", type=int, default=None)
    p_an.add_argument("--mc-trials", type=int, default=50_000)
    p_an.set_defaults(func=_cmd_analyze)

    p_exp = sub.add_parser("export-csi", help="export a legitimate CSI dataset")
    p_exp.add_argument("--config", help="YAML scenario file")
    p_exp.add_argument("--scenario", help="scenario name")
    p_exp.add_argument("--seed", type=int, default=None)
    p_exp.add_argument("--n", type=int, required=True)
    p_exp.add_argument("--out", required=True, help="output trace file")
    p_exp.set_defaults(func=_cmd_export_csi)

    p_val = sub.add_parser("validate-trace", help="validate a CSI trace file")
    p_val.add_argument("--path", required=True)
    p_val.set_defaults(func=_cmd_validate_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericFault as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CsiAuthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
