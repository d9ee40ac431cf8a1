"""Command line interface: ``bayes-es fit|simulate|portfolio|diagnose|loo-check``.

Exit codes: 0 success, 1 usage or validation error, 2 fit finished but did
not converge.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from bayes_es.core import BuildingDataset, DataError, align, validate
from bayes_es.evaluation import (
    FitReport,
    build_report,
    elpd_loo,
    exact_loo,
    population_summary,
)
from bayes_es.io import (
    IngestError,
    parse_meter_csv,
    parse_weather_csv,
    write_atomic,
    write_json,
    write_meter_csv,
    write_weather_csv,
)
from bayes_es.mcmc import SamplerConfig, SamplerError, fit
from bayes_es.models import ModelKind, ParameterVector
from bayes_es.priors import load_priors
from bayes_es.synth import (
    ExcessiveClamping,
    PopulationConfig,
    WeatherConfig,
    generate_building,
    generate_portfolio,
    generate_weather,
)

logger = logging.getLogger("bayes_es")

EXIT_OK, EXIT_ERROR, EXIT_UNCONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _sampler_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--draws", type=int, default=2000, help="kept draws per chain")
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=2000)
    p.add_argument("--thin", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--priors", default="paper",
                   help="prior JSON file or preset name (paper, house_kw)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bayes-es", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one building")
    p.add_argument("--model", choices=["es", "arx", "armax"], default="es")
    p.add_argument("--meter", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--area", type=float, default=None, help="heated area in m2")
    p.add_argument("--building-id", dest="building_id", default=None,
                   help="identifier stored in the report (default: meter file stem)")
    p.add_argument("--out", required=True)
    _sampler_args(p)

    p = sub.add_parser("simulate", help="simulate a building from known parameters")
    p.add_argument("--truth", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--weather")
    src.add_argument("--synth-weather", dest="synth_weather")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("portfolio", help="fit many buildings")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("diagnose", help="print a fit report summary")
    p.add_argument("--report", required=True)

    p = sub.add_parser("loo-check", help="compare IS-LOO with exact refits")
    p.add_argument("--model", choices=["es", "arx", "armax"], default="es")
    p.add_argument("--meter", required=True)
    p.add_argument("--weather", required=True)
    p.add_argument("--days", type=int, default=30)
    _sampler_args(p)
    return parser


def _config(args) -> SamplerConfig:
    return SamplerConfig(chains=args.chains, warmup_draws=args.warmup, kept_draws=args.draws,
                         seed=args.seed, thin=args.thin)


def _load_dataset(meter, weather, area=None, building_id=None, min_overlap=None) -> BuildingDataset:
    demand = parse_meter_csv(meter, building_id, area)
    w = parse_weather_csv(weather)
    if min_overlap is None:
        ds = align(w, demand)
    else:
        ds = align(w, demand, min_overlap=min_overlap)
    findings = validate(ds)
    if findings:
        detail = "; ".join(f"{f.kind}" + (f" at day {f.day}" if f.day is not None else "")
                           for f in findings[:10])
        raise DataError(f"dataset failed validation: {detail}")
    return ds


def _write_fit_outputs(out: Path, samples, report: FitReport) -> None:
    write_atomic(out / "draws.csv", samples.to_csv())
    write_atomic(out / "report.json", report.to_json())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["lag", "value"])
    for lag, v in enumerate(report.acf, start=1):
        w.writerow([lag, repr(v)])
    write_atomic(out / "acf.csv", buf.getvalue())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["draw", "r2"])
    for i, v in enumerate(report.r2_draws):
        w.writerow([i, repr(v)])
    write_atomic(out / "r2.csv", buf.getvalue())


def fit_and_report(kind, ds: BuildingDataset, priors, config: SamplerConfig):
    samples = fit(kind, ds, priors, config)
    report = build_report(samples, ds, np.random.default_rng([config.seed, 1]))
    return samples, report


def cmd_fit(args) -> int:
    ds = _load_dataset(args.meter, args.weather, args.area, args.building_id)
    priors = load_priors(args.priors)
    samples, report = fit_and_report(args.model, ds, priors, _config(args))
    _write_fit_outputs(Path(args.out), samples, report)
    print(f"{report.building_id}: model={report.model} converged={report.converged} "
          f"r2_median={report.r2_median:.4f} elpd_loo={report.elpd_loo['elpd']:.2f}")
    return EXIT_OK if report.converged else EXIT_UNCONVERGED


def cmd_simulate(args) -> int:
    truth_doc = json.loads(Path(args.truth).read_text())
    kind = ModelKind.parse(truth_doc.get("model", "es"))
    params = ParameterVector.from_dict(truth_doc["params"])
    params.check(kind)
    out = Path(args.out)
    if args.weather:
        weather = parse_weather_csv(args.weather)
    else:
        weather = generate_weather(WeatherConfig.from_dict(json.loads(Path(args.synth_weather).read_text())))
        write_weather_csv(out / "weather.csv", weather)
    ds, record = generate_building(params, kind, weather, args.seed,
                                   truth_doc.get("building_id", "building"),
                                   truth_doc.get("heated_area"))
    write_meter_csv(out / "meter.csv", ds.demand)
    write_json(out / "truth.json", record.to_dict())
    print(f"simulated {ds.n_days} days, {record.clamped_days} clamped")
    return EXIT_OK


def _portfolio_task(task):
    bid, kind, meter, weather, area, priors, config, out = task
    ds = _load_dataset(meter, weather, area, bid)
    samples, report = fit_and_report(kind, ds, priors, config)
    _write_fit_outputs(Path(out) / bid / kind, samples, report)
    return report.to_dict()


def cmd_portfolio(args) -> int:
    cfg = json.loads(Path(args.config).read_text())
    out = Path(args.out)
    models = cfg.get("models", ["es"])
    priors = load_priors(cfg.get("priors", "paper"))
    seed = int(cfg.get("seed", 0))
    sampler = {k: v for k, v in cfg.get("sampler", {}).items() if k != "seed"}
    buildings = []
    if "synthetic" in cfg:
        pop = PopulationConfig.from_dict(cfg["synthetic"])
        for ds, rec in generate_portfolio(pop):
            bdir = out / rec.building_id
            write_meter_csv(bdir / "meter.csv", ds.demand)
            write_weather_csv(bdir / "weather.csv", ds.weather)
            write_json(bdir / "truth.json", rec.to_dict())
            buildings.append({"id": rec.building_id, "meter": str(bdir / "meter.csv"),
                              "weather": str(bdir / "weather.csv"), "heated_area": rec.heated_area})
    else:
        base = Path(args.config).parent
        for b in cfg["buildings"]:
            buildings.append({"id": b["id"], "meter": str(base / b["meter"]),
                              "weather": str(base / b["weather"]),
                              "heated_area": b.get("heated_area")})
    tasks = []
    for i, b in enumerate(buildings):
        bseed = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        config = SamplerConfig(**sampler, seed=bseed)
        for m in models:
            tasks.append((b["id"], ModelKind.parse(m).value, b["meter"], b["weather"],
                          b["heated_area"], priors, config, str(out)))
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_portfolio_task, tasks))
    else:
        results = [_portfolio_task(t) for t in tasks]
    reports = [FitReport.from_dict(r) for r in results]
    if len(reports) >= 2:
        summary = population_summary(reports)
        write_atomic(out / "population_summary.csv", summary.histogram_csv())
        write_atomic(out / "population_quantiles.csv", summary.quantile_csv())
    n_bad = sum(not r.converged for r in reports)
    print(f"fitted {len(reports)} building-model pairs, {n_bad} not converged")
    return EXIT_OK if n_bad == 0 else EXIT_UNCONVERGED


def format_diagnosis(report: FitReport) -> str:
    lines = [f"building {report.building_id}  model {report.model}  days {report.n_days}",
             f"converged: {report.converged}  r2_median: {report.r2_median:.4f}  "
             f"elpd_loo: {report.elpd_loo['elpd']:.3f} (se {report.elpd_loo['se']:.3f})",
             "",
             f"{'parameter':<16}{'mean':>12}{'lo':>12}{'hi':>12}{'rhat':>8}{'ess':>8}  significant"]
    for n in report.param_names:
        iv = report.intervals[n]
        lines.append(f"{n:<16}{report.posterior_mean[n]:>12.5g}{iv['lo']:>12.5g}{iv['hi']:>12.5g}"
                     f"{report.rhat[n]:>8.3f}{report.ess[n]:>8.0f}  {report.significant[n]}")
    if report.long_term:
        lines += ["", f"{'long-term':<16}{'mean':>12}{'lo':>12}{'hi':>12}"]
        for n, s in report.long_term.items():
            lines.append(f"{n:<16}{s['mean']:>12.5g}{s['lo']:>12.5g}{s['hi']:>12.5g}")
    if report.per_area:
        lines += ["", f"per heated area ({report.heated_area:g} m2), W/m2 units"]
        for n, v in report.per_area.items():
            lines.append(f"{n:<16}{v:>12.5g}")
    if report.yearly:
        y = report.yearly
        lines += ["", f"yearly total kWh: mean {y['mean_kwh']:.1f}  "
                      f"95% [{y['q025_kwh']:.1f}, {y['q975_kwh']:.1f}]"]
    lines += ["", "p-values: " + "  ".join(f"{k}={v:.3f}" for k, v in report.p_values.items())]
    return "\n".join(lines)


def cmd_diagnose(args) -> int:
    report = FitReport.from_json(Path(args.report).read_text())
    print(format_diagnosis(report))
    return EXIT_OK if report.converged else EXIT_UNCONVERGED


def cmd_loo_check(args) -> int:
    ds = _load_dataset(args.meter, args.weather, min_overlap=1)
    if ds.n_days > args.days:
        ds = ds.head(args.days)
    priors = load_priors(args.priors)
    config = _config(args)
    samples = fit(args.model, ds, priors, config)
    approx = elpd_loo(samples)
    exact = exact_loo(args.model, ds, priors, config)
    diff = np.abs(approx.pointwise - exact)
    print(f"days: {ds.n_days}")
    print(f"elpd_loo (IS): {approx.elpd:.4f}")
    print(f"elpd_loo (exact refits): {exact.sum():.4f}")
    print(f"mean abs pointwise difference: {diff.mean():.4f} nats (max {diff.max():.4f})")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "portfolio": cmd_portfolio,
    "diagnose": cmd_diagnose,
    "loo-check": cmd_loo_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (IngestError, DataError, ExcessiveClamping, SamplerError, ValueError,
            KeyError, OSError) as exc:
        print(f"bayes-es {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
