"""Command-line front end: simulate, fit, forecast, evaluate, actuarial.

Every subcommand reads a JSON config (``--config``) and writes CSV/JSON into
``--out``. Exit codes: 0 success, 2 config error, 3 data or coverage error,
4 numerical failure, 5 partial failure (some methods failed, others wrote
their outputs).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import errors
from .actuarial import AnnuityTerms
from .arima import ArimaGrid
from .baselines import LeeCarterFit, OneStagePcaFit, forecast_baseline
from .experiments import (
    MethodSpec,
    actuarial_experiment,
    fit_method,
    fit_rmse_report,
    forecast_method,
    rolling_evaluation,
    simulation_study,
    summarize_study,
)
from .hierarchical import FhfmFit, forecast_fhfm
from .hmd import build_log_panel, parse_hmd
from .panel import Panel
from .simgen import DgpSpec, generate

log = logging.getLogger("fhfm")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4, 5


class PartialFailure(Exception):
    pass


def _require(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise errors.ConfigError(f"{where}: missing required field '{key}'")
    return cfg[key]


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise errors.ConfigError("config must be a JSON object")
    return cfg


def _sim_spec(data: dict, seed: int) -> DgpSpec:
    try:
        return DgpSpec(
            example_id=int(_require(data, "example_id", "data")),
            P=int(_require(data, "P", "data")),
            T=int(_require(data, "T", "data")),
            seed=seed,
            d=data.get("d"),
            noise_scale=data.get("noise_scale"),
        )
    except errors.ValidationError as exc:
        raise errors.ConfigError(f"data: {exc}") from exc


def load_panel(cfg: dict, seed: int) -> Panel:
    data = _require(cfg, "data")
    kind = _require(data, "type", "data")
    if kind == "csv":
        return Panel.from_csv(Path(_require(data, "path", "data")))
    if kind == "simulation":
        return generate(_sim_spec(data, seed)).panel
    if kind == "hmd":
        mx = parse_hmd(Path(_require(data, "mx", "data")), "Mx")
        deaths = parse_hmd(Path(data["deaths"]), "Deaths") if data.get("deaths") else None
        expo = parse_hmd(Path(data["exposures"]), "Exposures") if data.get("exposures") else None
        years = data.get("years")
        return build_log_panel(
            mx, deaths, expo,
            sex=data.get("sex", "Total"),
            year_range=tuple(years) if years else None,
            age_cap=int(data.get("age_cap", 90)),
            fill_policy=data.get("fill_policy", "error"),
        )
    raise errors.ConfigError(f"data.type must be csv, simulation or hmd, got {kind!r}")


def _methods(cfg: dict) -> list[MethodSpec]:
    methods = cfg.get("methods") or []
    if not methods:
        raise errors.ConfigError("config: 'methods' must be a non-empty list")
    try:
        return [MethodSpec.from_dict(m) for m in methods]
    except TypeError as exc:
        raise errors.ConfigError(f"methods: {exc}") from exc


def _grid(cfg: dict) -> ArimaGrid | None:
    g = cfg.get("arima_grid")
    return ArimaGrid.from_dict(g) if g else None


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_simulate(cfg: dict, out: Path, seed: int, threads: int) -> None:
    sim = generate(_sim_spec(_require(cfg, "data"), seed))
    sim.export(out / "panel.csv", out / "panel.truth.json")
    log.info("wrote %s", out / "panel.csv")


def cmd_fit(cfg: dict, out: Path, seed: int, threads: int) -> None:
    panel = load_panel(cfg, seed)
    fits, failed = {}, []
    for spec in _methods(cfg):
        if spec.name == "Individual":
            log.info("Individual has no low-rank fit; skipped")
            continue
        try:
            fit = fit_method(panel, spec)
        except errors.FhfmError as exc:
            log.error("%s failed: %s", spec.label, exc)
            failed.append((spec.label, exc))
            continue
        fits[spec.label] = fit
        (out / f"fit_{spec.label}.json").write_text(json.dumps(fit.to_dict()), encoding="utf-8")
    report = cfg.get("fit_report", {})
    rep = fit_rmse_report(panel, fits, report.get("rows", ()), report.get("cols", ()))
    rep.to_csv(out / "fit_rmse.csv")
    if failed:
        if not fits:
            raise failed[0][1]
        raise PartialFailure(f"{len(failed)} method(s) failed: {[f for f, _ in failed]}")


def _load_fit(path: Path):
    d = json.loads(path.read_text(encoding="utf-8"))
    method = d.get("method", "")
    if method == "FHFM":
        return FhfmFit.from_dict(d)
    if method == "LeeCarter":
        return LeeCarterFit.from_dict(d)
    return OneStagePcaFit.from_dict(d)


def cmd_forecast(cfg: dict, out: Path, seed: int, threads: int) -> None:
    H = int(_require(cfg, "horizon"))
    if H < 1:
        raise errors.ConfigError("horizon must be >= 1")
    grid = _grid(cfg)
    blocks, failed = {}, []
    if cfg.get("fit_files"):
        for p in cfg["fit_files"]:
            fit = _load_fit(Path(p))
            res = forecast_fhfm(fit, H, grid) if isinstance(fit, FhfmFit) else forecast_baseline(fit, H, grid)
            blocks[Path(p).stem.removeprefix("fit_")] = (res.forecasts, fit.row_labels, fit.col_labels)
    else:
        panel = load_panel(cfg, seed)
        for spec in _methods(cfg):
            try:
                fc = forecast_method(panel, spec, H, grid)
            except errors.FhfmError as exc:
                log.error("%s failed: %s", spec.label, exc)
                failed.append((spec.label, exc))
                continue
            blocks[spec.label] = (fc, panel.row_labels, panel.col_labels)
    for label, (fc, rows, cols) in blocks.items():
        last = cols[-1]
        new_cols = tuple(last + i for i in range(1, H + 1)) if isinstance(last, int) else None
        Panel(fc, rows, new_cols).to_csv(out / f"forecast_{label}.csv")
    if failed:
        if not blocks:
            raise failed[0][1]
        raise PartialFailure(f"{len(failed)} method(s) failed: {[f for f, _ in failed]}")


def cmd_evaluate(cfg: dict, out: Path, seed: int, threads: int) -> None:
    methods = _methods(cfg)
    data = _require(cfg, "data")
    if data.get("type") == "simulation":
        sim = cfg.get("simulation", {})
        spec = _sim_spec(data, seed)
        results = simulation_study(
            spec.example_id, spec.P, spec.T,
            n_reps=int(sim.get("n_reps", 100)),
            base_seed=seed,
            methods=methods,
            horizons=tuple(sim.get("horizons", (1, 5))),
            diagnostics=bool(sim.get("diagnostics", True)),
            d=spec.d if spec.example_id in (5, 6) else None,
            threads=threads,
        )
        summarize_study(results).to_csv(out / "eval.csv")
        return
    panel = load_panel(cfg, seed)
    roll = _require(cfg, "rolling")
    H = int(_require(cfg, "horizon"))
    report = rolling_evaluation(
        panel, methods, H,
        test_start=_require(roll, "test_start", "rolling"),
        n_windows=int(roll.get("n_windows", 10)),
        grid=_grid(cfg),
        threads=threads,
        scheme=roll.get("scheme", "target"),
    )
    report.to_csv(out / "eval.csv")


def cmd_actuarial(cfg: dict, out: Path, seed: int, threads: int) -> None:
    panel = load_panel(cfg, seed)
    act = cfg.get("actuarial", {})
    terms = AnnuityTerms(
        interest=float(act.get("interest", 0.02)),
        retirement_age=int(act.get("retirement_age", 66)),
        end_age=int(act.get("end_age", 90)),
    )
    outcome = actuarial_experiment(
        panel, _methods(cfg),
        train_end=int(act.get("train_end", 1988)),
        test_end=int(act.get("test_end", 2018)),
        selections=[tuple(s) for s in act.get("selections", [[1990, 65]])],
        terms=terms,
        w=int(act.get("w", 91)),
        grid=_grid(cfg),
    )
    outcome.summary.to_csv(out / "actuarial_summary.csv")
    _write_rows(
        out / "actuarial_selected.csv",
        ["year", "age", "quantity", "basis", "source", "value"],
        [(y, x, q, b, s, repr(v)) for y, x, q, b, s, v in outcome.selected],
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "actuarial": cmd_actuarial,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fhfm", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PartialFailure):
        return EXIT_PARTIAL
    if isinstance(exc, (errors.ParseError, errors.PreprocessingError, errors.CoverageError,
                        errors.InsufficientLengthError, OSError, KeyError)):
        return EXIT_DATA
    if isinstance(exc, (errors.ConfigError, errors.ValidationError)):
        return EXIT_CONFIG
    if isinstance(exc, errors.FhfmError):
        return EXIT_NUMERIC
    raise exc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if args.threads < 1:
            raise errors.ConfigError("--threads must be >= 1")
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, args.out, seed, args.threads)
    except (errors.FhfmError, PartialFailure, OSError, KeyError) as exc:
        code = exit_code_for(exc)
        print(f"fhfm {args.command}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
